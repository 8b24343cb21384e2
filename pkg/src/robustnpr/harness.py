"""Experiment grid: train under each loss x noise with replications and
aggregate testing excess risks into report tables.

Every replication draws its own train and test sample from pre-split
streams, trains the network, and evaluates the excess risk (model risk
minus ground-truth risk on the same test draw) under every test loss.
Replications that diverge are excluded and counted.  Reports are a pure
function of (config, master seed), also when replications run on a worker
pool: streams are split up-front and aggregation is keyed by replication
index.  BLAS thread pools are pinned to one thread during grid runs so
the numbers do not depend on the pool size.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .datagen import (Dataset, ManifoldSpec, NoiseModel, PrngStream, TargetFn,
                      make_dataset, parse_noise, univariate_target, ka_target,
                      DJ_KINDS)
from .losses import LossSpec, loss_value, parse_loss
from .mlp import NetworkShape, as_predictor
from .optim import DivergenceError, TrainConfig, TrainTrace, train

SCHEMA_VERSION = 1
NETS256_WIDTHS = (256, 256, 256, 256, 256)


class ConfigError(ValueError):
    """Experiment config failed schema validation; .errors lists each item."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


# ---------------------------------------------------------------------------
# Risk metrics


def target_predictor(target: TargetFn):
    """The oracle predictor: the ground-truth function itself."""
    return lambda xs: np.asarray(target(xs), dtype=np.float64)


def testing_risk(predict, test_xs, test_ys, loss: LossSpec) -> float:
    """Mean test loss (1/T) * sum L(predict(x_t), y_t)."""
    test_xs = np.asarray(test_xs, dtype=np.float64)
    test_ys = np.asarray(test_ys, dtype=np.float64)
    if test_xs.shape[0] == 0:
        raise ValueError("empty test set")
    preds = np.asarray(predict(test_xs), dtype=np.float64)
    if preds.shape != test_ys.shape:
        raise ValueError("prediction/test shape mismatch")
    return float(np.mean(loss_value(loss, preds, test_ys)))


def excess_risk(predict, target: TargetFn, test_xs, test_ys, loss: LossSpec) -> float:
    """testing_risk(model) minus testing_risk(ground truth) on the same draw.

    Slightly negative values are possible by sampling noise and are
    reported as-is.
    """
    return testing_risk(predict, test_xs, test_ys, loss) - testing_risk(
        target_predictor(target), test_xs, test_ys, loss
    )


def delta2_metric(predict, target: TargetFn, test_xs) -> float:
    """Empirical self-calibration distance: mean of min(|err|, err^2)."""
    test_xs = np.asarray(test_xs, dtype=np.float64)
    err = np.abs(np.asarray(predict(test_xs), dtype=np.float64) - target(test_xs))
    return float(np.mean(np.minimum(err, err * err)))


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    target: TargetFn
    noises: tuple[NoiseModel, ...]
    train_losses: tuple[LossSpec, ...]
    test_losses: tuple[LossSpec, ...]
    n_list: tuple[int, ...]
    test_size: int = 100_000
    replications: int = 10
    hidden_widths: tuple[int, ...] = NETS256_WIDTHS
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 2021
    clamp_eval: float | None = None
    excess: bool = True
    manifold: ManifoldSpec | None = None
    threads: int = 1
    # test hook, constructor-only (not part of the config schema)
    force_zero_noise: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError(["replications must be >= 1"])
        if self.test_size < 1:
            raise ConfigError(["test_size must be >= 1"])
        if not self.train_losses:
            raise ConfigError(["train_losses must be non-empty"])
        if not self.test_losses:
            raise ConfigError(["test_losses must be non-empty"])
        if not self.noises:
            raise ConfigError(["noises must be non-empty"])
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError(["n_list must hold positive sample sizes"])

    @property
    def shape(self) -> NetworkShape:
        return NetworkShape((self.target.d, *self.hidden_widths, 1))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "target": self.target.describe(),
            "noises": [n.describe() for n in self.noises],
            "train_losses": [{"kind": l.kind, "hyper": l.hyper} for l in self.train_losses],
            "test_losses": [{"kind": l.kind, "hyper": l.hyper} for l in self.test_losses],
            "n_list": list(self.n_list),
            "test_size": self.test_size,
            "replications": self.replications,
            "network_widths": list(self.hidden_widths),
            "train": {
                "lr": self.train.learning_rate,
                "beta1": self.train.beta1,
                "beta2": self.train.beta2,
                "eps": self.train.eps,
                "epochs": self.train.epochs,
                "batch_fraction": self.train.batch_fraction,
                "shuffle": self.train.shuffle,
                "seed": self.train.seed,
                "allow_short_epochs": self.train.allow_short_epochs,
            },
            "seed": self.master_seed,
            "clamp_eval": self.clamp_eval,
            "excess": self.excess,
            "manifold": None if self.manifold is None else
                {"d_M": self.manifold.d_M, "rho": self.manifold.rho},
            "threads": self.threads,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build_target(spec, errors) -> TargetFn | None:
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        errors.append("target: expected a kind name or {kind: ...} mapping")
        return None
    kind = str(spec["kind"]).lower()
    if kind in DJ_KINDS:
        return univariate_target(kind)
    if kind == "ka":
        d = int(spec.get("d", 4))
        seed = int(spec.get("seed", 2021))
        return ka_target(d, seed)
    errors.append(f"target: unknown kind {kind!r}")
    return None


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed config mapping; raises ConfigError with every
    problem found, not only the first."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {version}")

    target = _build_target(raw.get("target", "blocks"), errors)

    noises = []
    for i, entry in enumerate(raw.get("noises", ["normal01"])):
        try:
            noises.append(parse_noise(entry))
        except ValueError as exc:
            errors.append(f"noises[{i}]: {exc}")

    def _losses(key, default):
        out = []
        for i, entry in enumerate(raw.get(key, default)):
            try:
                out.append(parse_loss(entry))
            except ValueError as exc:
                errors.append(f"{key}[{i}]: {exc}")
        return out

    train_losses = _losses("train_losses", ["ls", "lad", "huber", "cauchy", "tukey"])
    test_losses = _losses("test_losses", ["ls", "lad", "huber", "cauchy", "tukey"])

    n_list = raw.get("n_list", [128])
    if not isinstance(n_list, (list, tuple)) or not all(
        isinstance(v, int) and v >= 1 for v in n_list
    ):
        errors.append("n_list: expected a list of positive integers")
        n_list = [128]

    widths = raw.get("network_widths", list(NETS256_WIDTHS))
    if not isinstance(widths, (list, tuple)) or not all(
        isinstance(v, int) and v >= 1 for v in widths
    ) or len(widths) < 1:
        errors.append("network_widths: expected a non-empty list of positive integers")
        widths = list(NETS256_WIDTHS)

    tr = raw.get("train", {})
    train_cfg = None
    if not isinstance(tr, dict):
        errors.append("train: expected a mapping")
    else:
        try:
            train_cfg = TrainConfig(
                learning_rate=float(tr.get("lr", 0.01)),
                beta1=float(tr.get("beta1", 0.9)),
                beta2=float(tr.get("beta2", 0.99)),
                eps=float(tr.get("eps", 1e-8)),
                epochs=int(tr.get("epochs", 1000)),
                batch_fraction=float(tr.get("batch_fraction", 0.25)),
                shuffle=bool(tr.get("shuffle", True)),
                seed=int(tr.get("seed", 0)),
                allow_short_epochs=bool(tr.get("allow_short_epochs", False)),
            )
        except ValueError as exc:
            errors.append(f"train: {exc}")

    manifold = None
    if raw.get("manifold") is not None:
        m = raw["manifold"]
        try:
            manifold = ManifoldSpec(d_M=int(m["d_M"]), rho=float(m["rho"]))
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"manifold: {exc!r}")

    clamp = raw.get("clamp_eval", None)
    if clamp is not None and not isinstance(clamp, (int, float)):
        errors.append("clamp_eval: expected null or a number")
        clamp = None

    for key in raw:
        if key not in {
            "schema_version", "target", "noises", "train_losses", "test_losses",
            "n_list", "test_size", "replications", "network_widths", "train",
            "seed", "clamp_eval", "excess", "manifold", "threads",
        }:
            errors.append(f"unknown config key {key!r}")

    if errors or target is None or train_cfg is None:
        raise ConfigError(errors or ["invalid config"])

    try:
        return ExperimentConfig(
            target=target,
            noises=tuple(noises),
            train_losses=tuple(train_losses),
            test_losses=tuple(test_losses),
            n_list=tuple(int(v) for v in n_list),
            test_size=int(raw.get("test_size", 100_000)),
            replications=int(raw.get("replications", 10)),
            hidden_widths=tuple(int(v) for v in widths),
            train=train_cfg,
            master_seed=int(raw.get("seed", 2021)),
            clamp_eval=None if clamp is None else float(clamp),
            excess=bool(raw.get("excess", True)),
            manifold=manifold,
            threads=int(raw.get("threads", 1)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError([str(exc)]) from exc


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Cells and tables


@dataclass
class RepResult:
    rep: int
    excess: dict
    raw: dict


@dataclass
class CellResult:
    """Replication statistics for one (noise, train loss, n) cell."""

    noise: str
    train_loss: str
    n: int
    reps: list[RepResult]
    divergences: int
    divergent_reps: list[int]

    def values(self, test_label: str, kind: str = "excess") -> list[float]:
        field_ = (lambda r: r.excess) if kind == "excess" else (lambda r: r.raw)
        return [field_(r)[test_label] for r in self.reps]

    def mean(self, test_label: str, kind: str = "excess") -> float:
        return float(np.mean(self.values(test_label, kind)))

    def sd(self, test_label: str, kind: str = "excess") -> float:
        vals = self.values(test_label, kind)
        if len(vals) < 2:
            return 0.0
        return float(np.std(vals, ddof=1))

    def median(self, test_label: str, kind: str = "excess") -> float:
        return float(np.median(self.values(test_label, kind)))


@dataclass
class Report:
    config: ExperimentConfig
    cells: dict  # (noise_label, train_label, n) -> CellResult
    provenance: dict


def _run_replication(cfg: ExperimentConfig, noise: NoiseModel, train_loss: LossSpec,
                     n: int, rep: int, rep_stream: PrngStream):
    data_rng, test_rng, train_rng = rep_stream.split(3)
    train_ds = make_dataset(cfg.target, noise, n, data_rng, manifold=cfg.manifold,
                            _force_zero_noise=cfg.force_zero_noise)
    test_ds = make_dataset(cfg.target, noise, cfg.test_size, test_rng,
                           manifold=cfg.manifold,
                           _force_zero_noise=cfg.force_zero_noise)
    try:
        params, _ = train(train_ds, cfg.shape, train_loss, cfg.train, train_rng)
    except DivergenceError:
        return RepResult(rep=rep, excess=None, raw=None)
    predict = as_predictor(params, clamp=cfg.clamp_eval)
    oracle = target_predictor(cfg.target)
    # one forward pass each; per-loss risks are elementwise means on top
    preds = np.asarray(predict(test_ds.xs), dtype=np.float64)
    oracle_preds = np.asarray(oracle(test_ds.xs), dtype=np.float64)
    exc, raw = {}, {}
    for tl in cfg.test_losses:
        model_risk = float(np.mean(loss_value(tl, preds, test_ds.ys)))
        oracle_risk = float(np.mean(loss_value(tl, oracle_preds, test_ds.ys)))
        raw[tl.label] = model_risk
        exc[tl.label] = model_risk - oracle_risk
    return RepResult(rep=rep, excess=exc, raw=raw)


def _collect_cell(noise, train_loss, n, results) -> CellResult:
    ok = [r for r in results if r.excess is not None]
    bad = [r.rep for r in results if r.excess is None]
    if not ok:
        raise DivergenceError(
            f"all {len(results)} replications diverged in cell "
            f"({noise.label}, {train_loss.label}, n={n})"
        )
    return CellResult(noise=noise.label, train_loss=train_loss.label, n=n,
                      reps=sorted(ok, key=lambda r: r.rep),
                      divergences=len(bad), divergent_reps=sorted(bad))


def run_cell(cfg: ExperimentConfig, noise: NoiseModel, train_loss: LossSpec,
             n: int, cell_stream: PrngStream, pool: ThreadPoolExecutor | None = None) -> CellResult:
    """Train R replications of one cell and aggregate their excess risks."""
    rep_streams = cell_stream.split(cfg.replications)
    args = [(cfg, noise, train_loss, n, r, rep_streams[r])
            for r in range(cfg.replications)]
    with threadpool_limits(limits=1):
        if pool is None:
            results = [_run_replication(*a) for a in args]
        else:
            results = list(pool.map(lambda a: _run_replication(*a), args))
    return _collect_cell(noise, train_loss, n, results)


def run_table(cfg: ExperimentConfig) -> Report:
    """Execute the full (noise x train loss x n) grid deterministically."""
    cells_keys = [(noise, tl, n)
                  for noise in cfg.noises
                  for tl in cfg.train_losses
                  for n in cfg.n_list]
    master = PrngStream(cfg.master_seed)
    cell_streams = master.split(len(cells_keys))

    tasks = []
    for (noise, tl, n), cs in zip(cells_keys, cell_streams):
        rep_streams = cs.split(cfg.replications)
        for r in range(cfg.replications):
            tasks.append(((noise.label, tl.label, n), noise, tl, r,
                          rep_streams[r]))

    t0 = time.time()
    results: dict = {}
    with threadpool_limits(limits=1):
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                outs = list(pool.map(
                    lambda t: (t[0], _run_replication(cfg, t[1], t[2], t[0][2], t[3], t[4])),
                    tasks))
        else:
            outs = [(t[0], _run_replication(cfg, t[1], t[2], t[0][2], t[3], t[4]))
                    for t in tasks]
    for key, rep_result in outs:
        results.setdefault(key, []).append(rep_result)

    cells = {}
    for (noise, tl, n) in cells_keys:
        key = (noise.label, tl.label, n)
        cells[key] = _collect_cell(noise, tl, n, results[key])

    provenance = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "wall_time_s": time.time() - t0,
        "sd_convention": "sample standard deviation (ddof=1)",
    }
    return Report(config=cfg, cells=cells, provenance=provenance)


def total_divergences(report: Report) -> int:
    return sum(c.divergences for c in report.cells.values())


# ---------------------------------------------------------------------------
# Emission


def emit_csv(report: Report, path) -> None:
    """Write the grid as CSV; the mean/sd columns aggregate excess risks
    (raw risks live in the per-cell files)."""
    cfg = report.config
    with open(path, "w", newline="") as fh:
        fh.write("# sd convention: sample standard deviation (ddof=1); "
                 "mean/sd aggregate %s risks\n"
                 % ("excess" if cfg.excess else "raw"))
        wr = csv.writer(fh)
        wr.writerow(["target", "noise", "train_loss", "test_loss", "n", "R",
                     "mean", "sd", "divergences", "seed"])
        kind = "excess" if cfg.excess else "raw"
        for noise in cfg.noises:
            for tl in cfg.train_losses:
                for n in cfg.n_list:
                    cell = report.cells[(noise.label, tl.label, n)]
                    for test in cfg.test_losses:
                        wr.writerow([
                            cfg.target.kind, noise.label, tl.label, test.label,
                            n, cfg.replications,
                            repr(cell.mean(test.label, kind)),
                            repr(cell.sd(test.label, kind)),
                            cell.divergences, cfg.master_seed,
                        ])


def parse_report_csv(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        body = [ln for ln in fh if not ln.startswith("#")]
    rd = csv.DictReader(body)
    for row in rd:
        row["n"] = int(row["n"])
        row["R"] = int(row["R"])
        row["mean"] = float(row["mean"])
        row["sd"] = float(row["sd"])
        row["divergences"] = int(row["divergences"])
        row["seed"] = int(row["seed"])
        rows.append(row)
    return rows


def emit_raw_csv(report: Report, directory) -> list[str]:
    """One CSV per cell with per-replication excess and raw risks."""
    os.makedirs(directory, exist_ok=True)
    cfg = report.config
    written = []
    for (noise, tl, n), cell in report.cells.items():
        name = f"{cfg.target.kind}_{noise}_{tl}_n{n}.csv"
        fpath = os.path.join(directory, name)
        with open(fpath, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["rep", "test_loss", "excess", "raw"])
            for rep in cell.reps:
                for test in cfg.test_losses:
                    wr.writerow([rep.rep, test.label,
                                 repr(rep.excess[test.label]),
                                 repr(rep.raw[test.label])])
            for r in cell.divergent_reps:
                wr.writerow([r, "divergent", "", ""])
        written.append(fpath)
    return written


def emit_provenance(report: Report, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Convergence sweeps


@dataclass
class SweepResult:
    n_list: list[int]
    means: dict          # test label -> list of means, aligned with n_list
    slopes: dict         # test label -> fitted log-log slope or None


def convergence_sweep(cfg: ExperimentConfig, n_list) -> SweepResult:
    """Run the single configured cell across sample sizes; fit log-log slope.

    Requires exactly one noise and one training loss so the sweep is
    unambiguous.
    """
    n_list = [int(v) for v in n_list]
    if len(n_list) < 2:
        raise ValueError("n_list must have at least two entries")
    if sorted(n_list) != n_list:
        raise ValueError("n_list must be ascending")
    if len(set(n_list)) != len(n_list):
        raise ValueError("duplicate n values give a zero-variance abscissa")
    if len(cfg.noises) != 1 or len(cfg.train_losses) != 1:
        raise ValueError("sweep needs exactly one noise and one training loss")

    sweep_cfg = replace(cfg, n_list=tuple(n_list))
    report = run_table(sweep_cfg)
    noise, tl = cfg.noises[0], cfg.train_losses[0]
    means = {}
    slopes = {}
    logn = np.log(np.asarray(n_list, dtype=float))
    for test in cfg.test_losses:
        vals = [report.cells[(noise.label, tl.label, n)].mean(test.label)
                for n in n_list]
        means[test.label] = vals
        if all(v > 0 for v in vals):
            slope = float(np.polyfit(logn, np.log(vals), 1)[0])
        else:
            slope = None
        slopes[test.label] = slope
    return SweepResult(n_list=n_list, means=means, slopes=slopes)


def emit_sweep_csv(sweep: SweepResult, path) -> None:
    labels = list(sweep.means)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n"] + labels)
        for i, n in enumerate(sweep.n_list):
            wr.writerow([n] + [repr(sweep.means[lab][i]) for lab in labels])
        wr.writerow(["slope"] + [
            "" if sweep.slopes[lab] is None else repr(sweep.slopes[lab])
            for lab in labels])


# ---------------------------------------------------------------------------
# SVG plots (hand-rolled; deterministic output, no plotting dependency)


_PALETTE = {
    "ls": "#d62728",
    "lad": "#ff7f0e",
    "huber": "#2ca02c",
    "cauchy": "#9467bd",
    "tukey": "#1f77b4",
}
_FALLBACK_COLORS = ("#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class _Canvas:
    """Minimal SVG scene with linear data-to-pixel mapping."""

    W, H = 760, 480
    ML, MR, MT, MB = 64, 16, 20, 44

    def __init__(self, x_range, y_range, title=""):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError("degenerate plot range")
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.W}" height="{self.H}" '
            f'viewBox="0 0 {self.W} {self.H}">',
            f'<rect width="{self.W}" height="{self.H}" fill="white"/>',
        ]
        if title:
            self.parts.append(
                f'<text x="{self.W / 2}" y="14" font-size="13" text-anchor="middle" '
                f'font-family="sans-serif">{title}</text>')
        self._axes()

    def px(self, x):
        return self.ML + (x - self.x0) / (self.x1 - self.x0) * (self.W - self.ML - self.MR)

    def py(self, y):
        return self.H - self.MB - (y - self.y0) / (self.y1 - self.y0) * (self.H - self.MT - self.MB)

    def _axes(self):
        x_l, x_r = self.ML, self.W - self.MR
        y_b, y_t = self.H - self.MB, self.MT
        self.parts.append(
            f'<rect x="{x_l}" y="{y_t}" width="{x_r - x_l}" height="{y_b - y_t}" '
            f'fill="none" stroke="#444" stroke-width="1"/>')
        for i in range(5):
            fx = self.x0 + (self.x1 - self.x0) * i / 4
            fy = self.y0 + (self.y1 - self.y0) * i / 4
            px, py = self.px(fx), self.py(fy)
            self.parts.append(
                f'<text x="{_fmt(px)}" y="{y_b + 16}" font-size="10" text-anchor="middle" '
                f'font-family="sans-serif">{_fmt(fx)}</text>')
            self.parts.append(
                f'<text x="{x_l - 6}" y="{_fmt(py + 3)}" font-size="10" text-anchor="end" '
                f'font-family="sans-serif">{_fmt(fy)}</text>')

    def polyline(self, xs, ys, color, width=1.5):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        self.parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>')

    def dots(self, xs, ys, color="#999999", r=2.0):
        for x, y in zip(xs, ys):
            self.parts.append(
                f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="{r}" '
                f'fill="{color}" fill-opacity="0.55"/>')

    def legend(self, entries):
        x = self.ML + 10
        y = self.MT + 14
        for i, (label, color) in enumerate(entries):
            self.parts.append(
                f'<line x1="{x}" y1="{y + 14 * i - 3}" x2="{x + 18}" y2="{y + 14 * i - 3}" '
                f'stroke="{color}" stroke-width="2"/>')
            self.parts.append(
                f'<text x="{x + 24}" y="{y + 14 * i}" font-size="11" '
                f'font-family="sans-serif">{label}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _color_for(label: str, i: int) -> str:
    return _PALETTE.get(label, _FALLBACK_COLORS[i % len(_FALLBACK_COLORS)])


def emit_fit_svg(predicts: dict, target: TargetFn, dataset: Dataset, path,
                 title: str = "") -> None:
    """Scatter of training data with the ground truth and fitted curves.

    ``predicts`` maps labels to (m, d) -> (m,) callables.  Univariate
    targets only; the y-range follows the curves, so far-out contaminated
    points fall outside the frame.
    """
    if target.d != 1:
        raise ValueError("fit plots are univariate only")
    grid = np.linspace(0.0, 1.0, 1000)[:, None]
    f0 = np.asarray(target(grid), dtype=float)
    curves = {label: np.asarray(fn(grid), dtype=float) for label, fn in predicts.items()}
    lo = min([f0.min()] + [c.min() for c in curves.values()])
    hi = max([f0.max()] + [c.max() for c in curves.values()])
    pad = 0.15 * max(hi - lo, 1e-9)
    canvas = _Canvas((0.0, 1.0), (lo - pad, hi + pad), title=title)
    inside = (dataset.ys >= lo - pad) & (dataset.ys <= hi + pad)
    canvas.dots(dataset.xs[inside, 0], dataset.ys[inside])
    canvas.polyline(grid[:, 0], f0, "#000000", width=2.0)
    entries = [("truth", "#000000")]
    for i, (label, ys) in enumerate(curves.items()):
        color = _color_for(label, i)
        canvas.polyline(grid[:, 0], ys, color)
        entries.append((label, color))
    canvas.legend(entries)
    with open(path, "w") as fh:
        fh.write(canvas.render())


def emit_trace_svg(traces: dict, path, title: str = "") -> None:
    """Training-loss trajectories, one polyline per training loss.

    Uses a log10 y-axis when the losses are positive across several
    decades (contaminated cells), otherwise linear.
    """
    if not traces:
        raise ValueError("no traces to plot")
    series = {}
    for label, tr in traces.items():
        vals = list(tr.losses) if isinstance(tr, TrainTrace) else list(tr)
        if not vals:
            raise ValueError(f"trace {label!r} is empty")
        series[label] = vals
    all_vals = [v for vals in series.values() for v in vals]
    log_scale = min(all_vals) > 0 and max(all_vals) / min(all_vals) > 50
    if log_scale:
        series = {k: [math.log10(v) for v in vals] for k, vals in series.items()}
        all_vals = [v for vals in series.values() for v in vals]
    n_epochs = max(len(v) for v in series.values())
    lo, hi = min(all_vals), max(all_vals)
    pad = 0.08 * max(hi - lo, 1e-9)
    label_suffix = " (log10 loss)" if log_scale else ""
    canvas = _Canvas((1.0, float(n_epochs)), (lo - pad, hi + pad),
                     title=(title + label_suffix).strip())
    entries = []
    for i, (label, vals) in enumerate(series.items()):
        color = _color_for(label, i)
        canvas.polyline(range(1, len(vals) + 1), vals, color)
        entries.append((label, color))
    canvas.legend(entries)
    with open(path, "w") as fh:
        fh.write(canvas.render())
