"""Robust regression losses, their subgradients and Lipschitz constants.

Five loss families on residuals x = a - y: squared error ("ls"), absolute
deviation ("lad"), the quantile check loss, Huber, Cauchy and Tukey's
biweight.  All except "ls" are globally Lipschitz in each argument;
``lipschitz_constant`` returns the sharp constant for those kinds.

Squared error is kept unnormalized, L(a, y) = (a - y)**2, so that reported
testing risks line up with the scale used throughout the experiment tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LS = "ls"
LAD = "lad"
QUANTILE = "quantile"
HUBER = "huber"
CAUCHY = "cauchy"
TUKEY = "tukey"

KINDS = (LS, LAD, QUANTILE, HUBER, CAUCHY, TUKEY)

# Hyperparameters used by the experiment grid when a config names a loss
# without one (the classical 95%-efficiency choices for huber/tukey).
DEFAULT_HYPERS = {QUANTILE: 0.5, HUBER: 1.345, CAUCHY: 1.0, TUKEY: 4.685}


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossSpec:
    """A pointwise loss L(a, y) plus its hyperparameter.

    ``hyper`` is tau in (0, 1) for "quantile", a finite positive scale for
    "huber"/"cauchy"/"tukey", and must be omitted for "ls"/"lad".
    """

    kind: str
    hyper: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LossError(f"unknown loss kind {self.kind!r}")
        if self.kind in (LS, LAD):
            if self.hyper is not None:
                raise LossError(f"{self.kind!r} takes no hyperparameter")
        elif self.kind == QUANTILE:
            if self.hyper is None or not 0.0 < float(self.hyper) < 1.0:
                raise LossError("quantile loss needs tau strictly inside (0, 1)")
        else:
            ok = self.hyper is not None and math.isfinite(self.hyper) and self.hyper > 0
            if not ok:
                raise LossError(f"{self.kind!r} needs a finite positive hyperparameter")

    @property
    def label(self) -> str:
        return self.kind


def parse_loss(entry) -> LossSpec:
    """Build a LossSpec from a config entry: a name string or a mapping.

    Strings get the default hyperparameter for their kind; mappings use
    keys "kind" and optionally "hyper".
    """
    if isinstance(entry, LossSpec):
        return entry
    if isinstance(entry, str):
        kind = entry.lower()
        return LossSpec(kind, DEFAULT_HYPERS.get(kind))
    if isinstance(entry, dict):
        if "kind" not in entry:
            raise LossError(f"loss entry missing 'kind': {entry!r}")
        kind = str(entry["kind"]).lower()
        hyper = entry.get("hyper", DEFAULT_HYPERS.get(kind))
        return LossSpec(kind, None if hyper is None else float(hyper))
    raise LossError(f"cannot parse loss entry {entry!r}")


def _check_finite(a, y):
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(y))):
        raise LossError("loss arguments must be finite")


def loss_value(spec: LossSpec, a, y):
    """Evaluate L(a, y) elementwise.  Scalars in, scalar out."""
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_finite(a, y)
    x = a - y
    k = spec.kind
    if k == LS:
        out = x * x
    elif k == LAD:
        out = np.abs(x)
    elif k == QUANTILE:
        tau = spec.hyper
        out = np.where(x >= 0, tau * x, (tau - 1.0) * x)
    elif k == HUBER:
        z = spec.hyper
        ax = np.abs(x)
        out = np.where(ax <= z, 0.5 * x * x, z * ax - 0.5 * z * z)
    elif k == CAUCHY:
        kap = spec.hyper
        out = np.log1p((kap * kap) * x * x)
    else:  # TUKEY
        t = spec.hyper
        u = np.clip(1.0 - (x / t) ** 2, 0.0, None)
        out = (t * t / 6.0) * (1.0 - u ** 3)
    if out.ndim == 0:
        return float(out)
    return out


def loss_grad(spec: LossSpec, a, y):
    """Partial derivative of L with respect to its first argument.

    At the kinks the subgradient selection is: 0 for lad/quantile at a = y,
    and zeta*sign(a-y) for huber at |a-y| = zeta, which keeps the gradient
    within the Lipschitz bound everywhere.
    """
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_finite(a, y)
    x = a - y
    k = spec.kind
    if k == LS:
        out = 2.0 * x
    elif k == LAD:
        out = np.sign(x)
    elif k == QUANTILE:
        tau = spec.hyper
        out = np.where(x > 0, tau, np.where(x < 0, tau - 1.0, 0.0))
    elif k == HUBER:
        z = spec.hyper
        out = np.clip(x, -z, z)
    elif k == CAUCHY:
        kap = spec.hyper
        k2 = kap * kap
        out = 2.0 * k2 * x / (1.0 + k2 * x * x)
    else:  # TUKEY
        t = spec.hyper
        u = 1.0 - (x / t) ** 2
        out = np.where(np.abs(x) <= t, x * u * u, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def lipschitz_constant(spec: LossSpec) -> float:
    """The sharp global Lipschitz constant of the loss in each argument."""
    k = spec.kind
    if k == LS:
        raise LossError("squared error loss is not globally Lipschitz")
    if k == LAD:
        return 1.0
    if k == QUANTILE:
        return max(spec.hyper, 1.0 - spec.hyper)
    if k == HUBER:
        return float(spec.hyper)
    if k == CAUCHY:
        return float(spec.hyper)
    # tukey: the gradient x*(1-(x/t)^2)^2 peaks at x = t/sqrt(5)
    return 16.0 * spec.hyper / (25.0 * math.sqrt(5.0))


@dataclass(frozen=True)
class LossDiagnostics:
    """Result of probing the loss axioms on a finite set of points."""

    kind: str
    max_ratio: float          # sup over probe pairs of the difference quotient
    lipschitz_bound: float | None
    lipschitz_ok: bool | None  # None when the kind carries no Lipschitz claim
    zero_on_diagonal: bool
    probes: int


def check_loss_axioms(spec: LossSpec, probe_points, tol: float = 1e-3) -> LossDiagnostics:
    """Empirically certify the Lipschitz bound and L(a, a) = 0 on probes.

    ``probe_points`` is a sequence of (a, y) pairs; at least two are needed
    to form a difference quotient.
    """
    pts = [(float(a), float(y)) for a, y in probe_points]
    if len(pts) < 2:
        raise LossError("at least 2 probe points are required")
    avals = sorted({a for a, _ in pts})
    yvals = sorted({y for _, y in pts})

    a_arr = np.array(avals)
    max_ratio = 0.0
    # first-argument quotient at each probe y, over all probe-a pairs
    for y in yvals:
        la = loss_value(spec, a_arr, np.full_like(a_arr, y))
        diffs = np.abs(la[:, None] - la[None, :])
        gaps = np.abs(a_arr[:, None] - a_arr[None, :])
        mask = gaps > 0
        if np.any(mask):
            max_ratio = max(max_ratio, float(np.max(diffs[mask] / gaps[mask])))
    # second-argument quotient, symmetric role
    y_arr = np.array(yvals)
    for a in avals:
        ly = loss_value(spec, np.full_like(y_arr, a), y_arr)
        diffs = np.abs(ly[:, None] - ly[None, :])
        gaps = np.abs(y_arr[:, None] - y_arr[None, :])
        mask = gaps > 0
        if np.any(mask):
            max_ratio = max(max_ratio, float(np.max(diffs[mask] / gaps[mask])))

    diag_vals = {v for a, y in pts for v in (a, y)}
    zero_on_diag = all(loss_value(spec, v, v) == 0.0 for v in diag_vals)

    if spec.kind == LS:
        lam, ok = None, None
    else:
        lam = lipschitz_constant(spec)
        ok = max_ratio <= lam * (1.0 + tol)
    return LossDiagnostics(
        kind=spec.kind,
        max_ratio=max_ratio,
        lipschitz_bound=lam,
        lipschitz_ok=ok,
        zero_on_diagonal=zero_on_diag,
        probes=len(pts),
    )
