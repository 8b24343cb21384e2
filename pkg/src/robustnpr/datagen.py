"""Deterministic data generation: streams, targets, noise models, datasets.

Randomness comes from a single splittable stream type so every experiment
is a pure function of its master seed.  Targets cover the four classical
univariate test functions, multivariate compositions built from a fixed
pool of univariate pieces, and near-manifold input designs.  Four noise
models span light to pathologically heavy tails.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class PrngStream:
    """Splittable deterministic random stream.

    Backed by the Philox counter generator (256-bit counter, 128-bit key)
    behind numpy's SeedSequence, so child streams from :meth:`split` are
    statistically independent and the whole tree is fixed by the root
    seed.  Uniform doubles use the standard 53-bit mapping
    ``(u64 >> 11) * 2**-53`` into [0, 1).
    """

    def __init__(self, seed: int | None = None, _ss: np.random.SeedSequence | None = None):
        if _ss is None:
            _ss = np.random.SeedSequence(seed)
        self._ss = _ss
        self._gen = np.random.Generator(np.random.Philox(_ss))

    @property
    def stream_id(self) -> str:
        ent = self._ss.entropy
        return f"{ent}:{'/'.join(map(str, self._ss.spawn_key))}"

    def split(self, k: int) -> list["PrngStream"]:
        """Spawn k independent child streams (advances the spawn counter)."""
        if k < 1:
            raise ValueError("split needs k >= 1")
        return [PrngStream(_ss=child) for child in self._ss.spawn(k)]

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        u = self._gen.random(size)
        return low + (high - low) * u

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, size=None):
        """Standard normals via the Box-Muller cosine branch."""
        m = 1 if size is None else int(np.prod(size))
        u1 = 1.0 - self._gen.random(m)  # (0, 1], keeps log finite
        u2 = self._gen.random(m)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)
        if size is None:
            return float(z[0])
        return z.reshape(size)


# ---------------------------------------------------------------------------
# Target functions


_BLOCKS_H = np.array([4, -5, -2.5, 4, -3, 2.1, 4.3, -1.1, -2.1, -4.2])
_BLOCKS_T = np.array([0.1, 0.15, 0.23, 0.28, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81])
_BUMPS_H = np.array([4, 5, 2.5, 4, 3, 2.1, 4.3, 1.1, 2.1, 4.2])
_BUMPS_T = _BLOCKS_T
_BUMPS_W = np.array([0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008])

DJ_KINDS = ("blocks", "bumps", "heavisine", "doppler")


def dj_target(kind: str, x):
    """Evaluate one of the univariate test functions on x in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("argument outside [0, 1]")
    if kind == "blocks":
        out = ((x[..., None] > _BLOCKS_T) * _BLOCKS_H).sum(axis=-1)
    elif kind == "bumps":
        out = (_BUMPS_H * (1.0 + np.abs(x[..., None] - _BUMPS_T) / _BUMPS_W) ** -4).sum(axis=-1)
    elif kind == "heavisine":
        out = 4.0 * np.sin(4.0 * math.pi * x) - np.sign(x - 0.3) - np.sign(0.72 - x)
    elif kind == "doppler":
        out = np.sqrt(x * (1.0 - x)) * np.sin(2.2 * math.pi / (x + 0.15))
    else:
        raise ValueError(f"unknown univariate target {kind!r}")
    if out.ndim == 0:
        return float(out)
    return out


# Pool of univariate pieces used to assemble multivariate targets.
def _h1(x):
    return -2.2 * x + 0.3


def _h2(x):
    return 0.7 * x ** 3 - 0.2 * x ** 2 + 0.3 * x - 0.3


def _h3(x):
    return 0.3 * np.sign(x) * np.sqrt(np.abs(x))


def _h4(x):
    return 0.8 * np.log(np.abs(x) + 0.01)


def _h5(x):
    return np.exp(np.minimum(0.2 * x - 0.1, 4.0))


def _h6(x):
    return np.sin(6.28 * x)


def _h7(x):
    return 2.0 / (np.abs(x) + 0.1)


_POOL = (_h1, _h2, _h3, _h4, _h5, _h6, _h7)


@dataclass(frozen=True)
class TargetFn:
    """An evaluable ground-truth regression function on [0, 1]^d.

    For kind "ka" the payload is the (2d+1) x (d+1) table of pool-function
    indices (first column selects the outer function of each summand, the
    rest the inner ones).  "custom" wraps a user callable on (m, d) arrays.
    """

    kind: str
    d: int
    ka_indices: tuple[tuple[int, ...], ...] | None = None
    ka_seed: int | None = None
    fn: object | None = None
    continuous: bool = True

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.d:
            raise ValueError(f"target expects (m, {self.d}) inputs, got {xs.shape}")
        if self.kind in DJ_KINDS:
            return np.asarray(dj_target(self.kind, xs[:, 0]))
        if self.kind == "ka":
            return ka_eval(self, xs)
        if self.kind == "custom":
            return np.asarray(self.fn(xs), dtype=np.float64)
        raise ValueError(f"unknown target kind {self.kind!r}")

    def describe(self) -> dict:
        out = {"kind": self.kind, "d": self.d}
        if self.kind == "ka":
            out["seed"] = self.ka_seed
        return out


def univariate_target(kind: str) -> TargetFn:
    if kind not in DJ_KINDS:
        raise ValueError(f"unknown univariate target {kind!r}")
    return TargetFn(kind=kind, d=1, continuous=kind != "blocks")


def ka_target(d: int, seed: int, _force_indices=None) -> TargetFn:
    """Multivariate target from the two-layer superposition construction.

    The (2d+1)(d+1) pool indices are drawn uniformly from {1..7} with a
    stream seeded by ``seed`` (flat draw, reshaped row-major: one row per
    outer summand, first entry the outer index).  ``_force_indices`` is a
    test hook overriding the whole table.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if _force_indices is not None:
        table = tuple(tuple(int(v) for v in row) for row in _force_indices)
        if len(table) != 2 * d + 1 or any(len(r) != d + 1 for r in table):
            raise ValueError("forced index table has the wrong shape")
    else:
        stream = PrngStream(seed)
        flat = np.floor(stream.uniform(size=(2 * d + 1) * (d + 1)) * 7.0).astype(int) + 1
        table = tuple(tuple(int(v) for v in flat[k * (d + 1):(k + 1) * (d + 1)])
                      for k in range(2 * d + 1))
    return TargetFn(kind="ka", d=d, ka_indices=table, ka_seed=seed)


def ka_eval(target: TargetFn, xs: np.ndarray) -> np.ndarray:
    """f(x) = sum_k g_k( sum_m psi_{m,k}(x_m) ) over the index table."""
    xs = np.asarray(xs, dtype=np.float64)
    total = np.zeros(xs.shape[0])
    for row in target.ka_indices:
        inner = np.zeros(xs.shape[0])
        for m, idx in enumerate(row[1:]):
            inner += _POOL[idx - 1](xs[:, m])
        total += _POOL[row[0] - 1](inner)
    return total


# ---------------------------------------------------------------------------
# Near-manifold inputs

# Seed of the fixed embedding mix; changing it changes the embedded curve,
# so it is part of the data-generation contract.
_EMBED_SEED = 764201


def _embedding_matrix(d_M: int, d: int) -> np.ndarray:
    stream = PrngStream(_EMBED_SEED)
    lin = stream.uniform(size=(d, d_M), low=1.0, high=2.0)
    trig = stream.uniform(size=(d, 2 * d_M), low=-0.25, high=0.25)
    return np.hstack([lin, trig])


def manifold_embedding(z: np.ndarray, d: int) -> np.ndarray:
    """Smooth embedding of [0,1]^{d_M} into [0.1, 0.9]^d.

    Coordinates are normalized affine mixes of (z, sin(2 pi z), cos(2 pi z));
    the linear part dominates so the chart parameter is recoverable from
    pairwise distances.
    """
    z = np.asarray(z, dtype=np.float64)
    d_M = z.shape[1]
    A = _embedding_matrix(d_M, d)
    feats = np.hstack([z, np.sin(TWO_PI * z), np.cos(TWO_PI * z)])
    scale = np.abs(A).sum(axis=1)
    return 0.5 + 0.4 * (feats @ A.T) / scale


def manifold_inputs(d_M: int, d: int, rho: float, n: int, rng: PrngStream) -> np.ndarray:
    """Sample n inputs within sup-norm rho of the embedded d_M-manifold."""
    if not 1 <= d_M < d:
        raise ValueError("require 1 <= d_M < d")
    if not 0.0 <= rho < 1.0:
        raise ValueError("require 0 <= rho < 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.uniform(size=(n, d_M))
    base = manifold_embedding(z, d)
    if rho > 0:
        base = base + rng.uniform(size=(n, d), low=-rho, high=rho)
    return np.clip(base, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Noise models


NOISE_KINDS = ("normal01", "t2", "cauchy01", "mixture")


@dataclass(frozen=True)
class NoiseModel:
    """Symmetric additive error law.

    "normal01": N(0,1).  "t2": Student's t with 2 degrees of freedom.
    "cauchy01": standard Cauchy.  "mixture": contaminated normal
    xi*N(0,1) + (1-xi)*N(0, sd2^2), modelling a corrupted fraction of
    the responses.
    """

    kind: str
    xi: float = 0.8
    sd2: float = 100.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "mixture" and not 0.0 < self.xi < 1.0:
            raise ValueError("mixture weight xi must be inside (0, 1)")

    @property
    def label(self) -> str:
        return self.kind

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "mixture":
            out.update(xi=self.xi, sd2=self.sd2)
        return out


def parse_noise(entry) -> NoiseModel:
    if isinstance(entry, NoiseModel):
        return entry
    if isinstance(entry, str):
        return NoiseModel(entry.lower())
    if isinstance(entry, dict):
        kind = str(entry.get("kind", "")).lower()
        kwargs = {}
        if "xi" in entry:
            kwargs["xi"] = float(entry["xi"])
        if "sd2" in entry:
            kwargs["sd2"] = float(entry["sd2"])
        return NoiseModel(kind, **kwargs)
    raise ValueError(f"cannot parse noise entry {entry!r}")


def sample_noise(model: NoiseModel, rng: PrngStream, size=None):
    """Draw errors using fixed textbook transforms of uniforms.

    Normals come from Box-Muller; t(2) is Z/sqrt(E) with E ~ Exp(1)
    (equivalently chi^2_2 / 2); Cauchy is tan(pi (U - 1/2)); the mixture
    picks the wide component with probability 1 - xi.
    """
    scalar = size is None
    m = 1 if scalar else int(np.prod(size))
    k = model.kind
    if k == "normal01":
        out = rng.normal(m)
    elif k == "t2":
        z = rng.normal(m)
        e = -np.log(1.0 - rng.uniform(size=m))
        out = z / np.sqrt(np.maximum(e, 1e-300))
    elif k == "cauchy01":
        out = np.tan(math.pi * (rng.uniform(size=m) - 0.5))
    else:  # mixture
        wide = rng.uniform(size=m) >= model.xi
        z = rng.normal(m)
        out = np.where(wide, model.sd2 * z, z)
    if scalar:
        return float(out[0])
    return out.reshape(size)


# ---------------------------------------------------------------------------
# Dataset assembly


@dataclass(frozen=True)
class Dataset:
    """Regression sample (xs, ys) plus enough provenance to regenerate it."""

    xs: np.ndarray
    ys: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.xs.ndim != 2 or self.ys.ndim != 1 or self.xs.shape[0] != self.ys.shape[0]:
            raise ValueError("inconsistent dataset shapes")
        if self.xs.shape[0] < 1:
            raise ValueError("dataset must be non-empty")

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True)
class ManifoldSpec:
    """Optional near-manifold input design for make_dataset."""

    d_M: int
    rho: float


def make_dataset(
    target: TargetFn,
    noise: NoiseModel,
    n: int,
    rng: PrngStream,
    manifold: ManifoldSpec | None = None,
    _force_zero_noise: bool = False,
) -> Dataset:
    """Draw xs (uniform on [0,1]^d, or near-manifold), set ys = f0(xs) + eta.

    ``_force_zero_noise`` is a test hook that skips the noise draw.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if manifold is None:
        xs = rng.uniform(size=(n, target.d))
    else:
        xs = manifold_inputs(manifold.d_M, target.d, manifold.rho, n, rng)
    eta = np.zeros(n) if _force_zero_noise else sample_noise(noise, rng, size=n)
    ys = target(xs) + eta
    prov = {
        "format_version": 1,
        "target": target.describe(),
        "noise": noise.describe(),
        "n": int(n),
        "d": int(target.d),
        "stream": rng.stream_id,
    }
    if manifold is not None:
        prov["manifold"] = {"d_M": manifold.d_M, "rho": manifold.rho}
    return Dataset(xs=xs, ys=ys, provenance=prov)


def dataset_to_csv(ds: Dataset, path) -> None:
    """Write x1..xd,y rows plus a .provenance.json sidecar."""
    path = str(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{i + 1}" for i in range(ds.d)] + ["y"])
        for i in range(ds.n):
            wr.writerow([repr(float(v)) for v in ds.xs[i]] + [repr(float(ds.ys[i]))])
    with open(path + ".provenance.json", "w") as fh:
        json.dump(ds.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")


def dataset_from_csv(path) -> Dataset:
    path = str(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 1
    xs = np.array([[float(v) for v in row[:d]] for row in body])
    ys = np.array([float(row[d]) for row in body])
    try:
        with open(path + ".provenance.json") as fh:
            prov = json.load(fh)
    except FileNotFoundError:
        prov = {}
    return Dataset(xs=xs, ys=ys, provenance=prov)
