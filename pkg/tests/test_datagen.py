"""Tests for streams, targets, noise models and dataset assembly."""

import json
import math
import os

import numpy as np
import pytest
from scipy import stats

from robustnpr.datagen import (Dataset, ManifoldSpec, NoiseModel, PrngStream,
                               dataset_from_csv, dataset_to_csv, dj_target,
                               ka_eval, ka_target, make_dataset,
                               manifold_embedding, manifold_inputs,
                               parse_noise, sample_noise, univariate_target)

GOLDEN = os.path.join(os.path.dirname(__file__), "golden", "ka_indices_seed2021.json")


# Independent scalar transcription of the univariate target formulas,
# structured differently from the vectorized implementation.
def _blocks_ref(x):
    h = [4, -5, -2.5, 4, -3, 2.1, 4.3, -1.1, -2.1, -4.2]
    t = [0.1, 0.15, 0.23, 0.28, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81]
    total = 0.0
    for hi, ti in zip(h, t):
        if x > ti:
            total += hi
    return total


def _bumps_ref(x):
    h = [4, 5, 2.5, 4, 3, 2.1, 4.3, 1.1, 2.1, 4.2]
    t = [0.1, 0.15, 0.23, 0.28, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81]
    w = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008]
    total = 0.0
    for hi, ti, wi in zip(h, t, w):
        total += hi * (1.0 + abs(x - ti) / wi) ** (-4)
    return total


def _sgn(v):
    return (v > 0) - (v < 0)


def _heavisine_ref(x):
    return 4.0 * math.sin(4.0 * math.pi * x) - _sgn(x - 0.3) - _sgn(0.72 - x)


def _doppler_ref(x):
    return math.sqrt(x * (1.0 - x)) * math.sin(2.2 * math.pi / (x + 0.15))


_REFS = {"blocks": _blocks_ref, "bumps": _bumps_ref,
         "heavisine": _heavisine_ref, "doppler": _doppler_ref}


class TestPrngStream:
    def test_reproducible(self):
        a = PrngStream(123).uniform(size=100)
        b = PrngStream(123).uniform(size=100)
        assert np.array_equal(a, b)

    def test_split_deterministic(self):
        kids_a = PrngStream(5).split(3)
        kids_b = PrngStream(5).split(3)
        for ka, kb in zip(kids_a, kids_b):
            assert np.array_equal(ka.uniform(size=10), kb.uniform(size=10))

    def test_split_independence_correlation(self):
        kids = PrngStream(17).split(2)
        u = kids[0].uniform(size=100_000)
        v = kids[1].uniform(size=100_000)
        assert abs(np.corrcoef(u, v)[0, 1]) < 0.01

    def test_stream_ids_differ(self):
        parent = PrngStream(9)
        a, b = parent.split(2)
        assert a.stream_id != b.stream_id
        assert parent.stream_id != a.stream_id

    def test_uniform_range_and_permutation(self):
        s = PrngStream(2)
        u = s.uniform(size=1000, low=-2.0, high=3.0)
        assert np.all(u >= -2.0) and np.all(u < 3.0)
        perm = s.permutation(50)
        assert sorted(perm) == list(range(50))


class TestDjTargets:
    def test_hand_values(self):
        assert dj_target("blocks", 0.05) == 0.0
        assert dj_target("heavisine", 0.5) == pytest.approx(-2.0, abs=1e-12)
        assert dj_target("doppler", 0.1) == pytest.approx(0.17634, abs=1e-5)

    @pytest.mark.parametrize("kind", ["blocks", "bumps", "heavisine", "doppler"])
    def test_matches_independent_transcription(self, kind):
        xs = np.linspace(0.0, 1.0, 101)
        got = dj_target(kind, xs)
        want = np.array([_REFS[kind](float(x)) for x in xs])
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_domain_enforced(self):
        with pytest.raises(ValueError):
            dj_target("blocks", -0.1)
        with pytest.raises(ValueError):
            dj_target("doppler", 1.5)

    def test_target_fn_wrapper(self):
        t = univariate_target("bumps")
        xs = np.array([[0.1], [0.4]])
        np.testing.assert_allclose(t(xs), dj_target("bumps", xs[:, 0]))
        assert not univariate_target("blocks").continuous
        assert univariate_target("doppler").continuous


class TestKaTargets:
    def test_forced_identity_composition(self):
        # all pool indices forced to the affine piece h1: for d=1 the sum of
        # the three summands is 3*h1(h1(x)) = 14.52x - 1.08
        t = ka_target(1, 0, _force_indices=[[1, 1]] * 3)
        xs = np.linspace(0, 1, 7)[:, None]
        np.testing.assert_allclose(ka_eval(t, xs), 14.52 * xs[:, 0] - 1.08, atol=1e-12)

    def test_pool_log_piece(self):
        from robustnpr.datagen import _h4

        assert _h4(np.float64(0.0)) == pytest.approx(0.8 * math.log(0.01), abs=1e-12)
        assert _h4(np.float64(0.0)) == pytest.approx(-3.68414, abs=1e-5)

    def test_same_seed_same_indices(self):
        a = ka_target(4, 2021)
        b = ka_target(4, 2021)
        assert a.ka_indices == b.ka_indices

    def test_golden_table(self):
        with open(GOLDEN) as fh:
            golden = json.load(fh)
        assert golden["seed"] == 2021
        for d_str, table in golden["indices_by_d"].items():
            t = ka_target(int(d_str), 2021)
            assert [list(r) for r in t.ka_indices] == table

    def test_index_table_shape_and_range(self):
        d = 3
        t = ka_target(d, 99)
        assert len(t.ka_indices) == 2 * d + 1
        assert all(len(r) == d + 1 for r in t.ka_indices)
        assert all(1 <= v <= 7 for r in t.ka_indices for v in r)

    def test_evaluable_on_cube(self):
        t = ka_target(4, 2021)
        xs = PrngStream(0).uniform(size=(64, 4))
        vals = t(xs)
        assert vals.shape == (64,)
        assert np.all(np.isfinite(vals))


class TestNoise:
    def test_mixture_variance(self):
        model = NoiseModel("mixture")
        draws = sample_noise(model, PrngStream(8), size=1_000_000)
        want = 0.8 * 1.0 + 0.2 * 100.0 ** 2
        assert abs(np.var(draws) / want - 1.0) < 0.10

    def test_normal_mean(self):
        draws = sample_noise(NoiseModel("normal01"), PrngStream(3), size=1_000_000)
        assert abs(np.mean(draws)) < 0.01
        assert abs(np.var(draws) - 1.0) < 0.01

    def test_cauchy_median(self):
        draws = sample_noise(NoiseModel("cauchy01"), PrngStream(4), size=100_000)
        assert abs(np.median(draws)) < 0.02

    def test_t2_heavy_tail_but_finite_first_moment(self):
        draws = sample_noise(NoiseModel("t2"), PrngStream(5), size=200_000)
        assert np.all(np.isfinite(draws))
        # t(2) has infinite variance; the sample variance should dwarf the
        # normal's
        assert np.var(draws) > 3.0

    @pytest.mark.parametrize("kind", ["normal01", "t2", "mixture"])
    def test_sign_symmetry(self, kind):
        draws = sample_noise(NoiseModel(kind), PrngStream(6), size=1_000_000)
        assert abs(np.mean(np.sign(draws))) < 0.005

    def test_parse(self):
        assert parse_noise("t2") == NoiseModel("t2")
        m = parse_noise({"kind": "mixture", "xi": 0.9, "sd2": 50})
        assert m.xi == 0.9 and m.sd2 == 50
        with pytest.raises(ValueError):
            parse_noise("gauss")
        with pytest.raises(ValueError):
            NoiseModel("mixture", xi=1.5)

    def test_scalar_draw(self):
        v = sample_noise(NoiseModel("normal01"), PrngStream(1))
        assert isinstance(v, float)


class TestManifold:
    def test_zero_rho_on_embedding(self):
        rng = PrngStream(10)
        xs = manifold_inputs(1, 3, 0.0, 50, rng)
        assert xs.shape == (50, 3)
        assert np.all(xs >= 0.1 - 1e-12) and np.all(xs <= 0.9 + 1e-12)

    def test_outputs_in_cube_and_near_manifold(self):
        rng = PrngStream(11)
        rho = 0.05
        n, d = 200, 4
        # reproduce the chart draw to get the unperturbed image
        probe = PrngStream(11)
        z = probe.uniform(size=(n, 2))
        base = manifold_embedding(z, d)
        xs = manifold_inputs(2, d, rho, n, rng)
        assert np.all(xs >= 0.0) and np.all(xs <= 1.0)
        dist = np.linalg.norm(xs - base, axis=1)
        assert np.all(dist <= rho * math.sqrt(d) + 1e-12)

    def test_curve_orders_like_parameter(self):
        rng = PrngStream(12)
        probe = PrngStream(12)
        z = probe.uniform(size=(100, 1))[:, 0]
        xs = manifold_inputs(1, 3, 0.0, 100, rng)
        iu = np.triu_indices(100, k=1)
        d_embed = np.linalg.norm(xs[:, None, :] - xs[None, :, :], axis=2)[iu]
        d_param = np.abs(z[:, None] - z[None, :])[iu]
        rho_corr = stats.spearmanr(d_embed, d_param).statistic
        assert rho_corr > 0.9

    def test_preconditions(self):
        rng = PrngStream(13)
        with pytest.raises(ValueError):
            manifold_inputs(3, 3, 0.1, 10, rng)
        with pytest.raises(ValueError):
            manifold_inputs(1, 3, 1.0, 10, rng)
        with pytest.raises(ValueError):
            manifold_inputs(0, 3, 0.1, 10, rng)


class TestDataset:
    def test_noiseless_hook(self):
        t = univariate_target("doppler")
        ds = make_dataset(t, NoiseModel("cauchy01"), 64, PrngStream(14),
                          _force_zero_noise=True)
        np.testing.assert_array_equal(ds.ys, t(ds.xs))

    def test_determinism(self):
        t = univariate_target("blocks")
        a = make_dataset(t, NoiseModel("mixture"), 128, PrngStream(15))
        b = make_dataset(t, NoiseModel("mixture"), 128, PrngStream(15))
        assert np.array_equal(a.xs, b.xs) and np.array_equal(a.ys, b.ys)
        assert a.provenance == b.provenance

    def test_mixture_contamination_count(self):
        # wide-component count ~ Binomial(512, 0.2); stay within 4 sigma
        t = univariate_target("blocks")
        ds = make_dataset(t, NoiseModel("mixture"), 512, PrngStream(16))
        eta = ds.ys - t(ds.xs)
        n_wide = int(np.sum(np.abs(eta) > 30.0))
        mean, sigma = 512 * 0.2, math.sqrt(512 * 0.2 * 0.8)
        assert abs(n_wide - mean) <= 4 * sigma

    def test_manifold_inputs_used(self):
        t = ka_target(3, 7)
        ds = make_dataset(t, NoiseModel("normal01"), 40, PrngStream(17),
                          manifold=ManifoldSpec(d_M=1, rho=0.0))
        assert np.all(ds.xs >= 0.1 - 1e-12) and np.all(ds.xs <= 0.9 + 1e-12)
        assert ds.provenance["manifold"] == {"d_M": 1, "rho": 0.0}

    def test_csv_round_trip(self, tmp_path):
        t = univariate_target("heavisine")
        ds = make_dataset(t, NoiseModel("t2"), 32, PrngStream(18))
        path = tmp_path / "data.csv"
        dataset_to_csv(ds, path)
        back = dataset_from_csv(path)
        assert np.array_equal(ds.xs, back.xs)
        assert np.array_equal(ds.ys, back.ys)
        assert back.provenance == ds.provenance
        header = path.read_text().splitlines()[0]
        assert header == "x1,y"

    def test_shapes_validated(self):
        with pytest.raises(ValueError):
            Dataset(xs=np.zeros((3, 1)), ys=np.zeros(4), provenance={})
        with pytest.raises(ValueError):
            Dataset(xs=np.zeros((0, 1)), ys=np.zeros(0), provenance={})
