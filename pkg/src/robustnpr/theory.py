"""Closed-form calculators: architecture design, error bounds, rates, REN.

Everything here is a pure formula evaluated exactly as stated; the
universal constants the statements leave unspecified are explicit inputs
defaulting to 1, so outputs are "up to constants" and labelled as such by
the CLI.  Logarithms are natural throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .datagen import PrngStream, TargetFn
from .losses import LossSpec, lipschitz_constant
from .mlp import NetworkShape, param_count

DESIGN_LABELS = ("DFW", "WFD", "DAW", "RectanglePlain", "RectangleQuadratic", "ShenNM")

APPROX_VARIANTS = ("l1_19", "thm2_18", "quadratic384")

# Exponents s of the network sizes S = n_*^s (up to log factors) the three
# reference architectures need to reach the optimal rate, and the powers of
# 1/log(n) in their size estimates.
_CATALOG = {
    "DFW": (0.5, 1),
    "WFD": (1.0, 1),
    "DAW": (0.75, 2),
}


@dataclass(frozen=True)
class RateSpec:
    """Convergence-rate inputs: moment order p, smoothness, dimensions.

    ``p`` may be math.inf (sub-exponential response).  ``theta`` is the
    Hoelder constant of the target, so the modulus used by the bound
    evaluators is omega(r) = theta * r**alpha.  ``d_target`` defaults to
    the ambient d; set it to the reduced dimension for manifold rates.
    """

    p: float
    alpha: float
    d: int
    theta: float = 1.0
    d_target: int | None = None

    def __post_init__(self):
        if not (self.p > 1):
            raise ValueError("p must exceed 1 (math.inf allowed)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if self.d_target is not None and self.d_target < 1:
            raise ValueError("d_target must be >= 1")

    @property
    def dt(self) -> int:
        return self.d if self.d_target is None else self.d_target

    @property
    def moment_factor(self) -> float:
        return 1.0 if math.isinf(self.p) else 1.0 - 1.0 / self.p

    def omega(self, r: float) -> float:
        return self.theta * r ** self.alpha


@dataclass(frozen=True)
class NetworkDesign:
    """A rectangle architecture (width W, depth D) with its exact size.

    ``N`` and ``M`` are the approximation-construction parameters the
    (W, D) pair came from, kept so bound evaluators can recover the
    approximation radius.  ``B`` is the sup-norm level used by the bound
    formulas only; nothing at training time enforces it.
    """

    label: str
    d: int
    W: int
    D: int
    S: int
    U: int
    B: float = 1.0
    N: int | None = None
    M: int | None = None

    def __post_init__(self):
        if self.label not in DESIGN_LABELS:
            raise ValueError(f"unknown design label {self.label!r}")
        if self.W < 1 or self.D < 1:
            raise ValueError("W and D must be >= 1")
        if self.S != param_count(self.shape()):
            raise ValueError("S does not match the rectangle parameter-count formula")
        if max(self.W, self.D) > self.S:
            raise ValueError("max{W, D} <= S violated")

    def shape(self) -> NetworkShape:
        return NetworkShape((self.d, *([self.W] * self.D), 1))


def _mk_design(label: str, d: int, W: int, D: int, B: float = 1.0,
               N: int | None = None, M: int | None = None) -> NetworkDesign:
    shape = NetworkShape((d, *([W] * D), 1))
    return NetworkDesign(label=label, d=d, W=W, D=D, S=param_count(shape),
                         U=W * D, B=B, N=N, M=M)


def make_rectangle_design(d: int, W: int, D: int, B: float = 1.0,
                          label: str = "RectanglePlain") -> NetworkDesign:
    return _mk_design(label, d, W, D, B)


def _int_root(n: int, k: int) -> int:
    """floor(n ** (1/k)) without float trouble at perfect powers."""
    r = int(round(n ** (1.0 / k)))
    while r > 0 and r ** k > n:
        r -= 1
    while (r + 1) ** k <= n:
        r += 1
    return r


def shen_width_depth(d: int, N: int, M: int) -> tuple[int, int]:
    """Width/depth of the explicit approximation construction:
    W = max{4d*floor(N^(1/d)) + 3d, 12N + 8}, D = 12M + 14."""
    if d < 1 or N < 1 or M < 1:
        raise ValueError("d, N, M must all be >= 1")
    width = max(4 * d * _int_root(N, d) + 3 * d, 12 * N + 8)
    depth = 12 * M + 14
    return width, depth


def shen_design(d: int, N: int, M: int, B: float = 1.0) -> NetworkDesign:
    W, D = shen_width_depth(d, N, M)
    return _mk_design("ShenNM", d, W, D, B, N=N, M=M)


def approx_error_bound(d: int, N: int, M: int, omega, variant: str) -> float:
    """Approximation-error bound at radius r = (N*M)^(-2/d).

    "l1_19" gives 19*sqrt(d)*omega(r), "thm2_18" gives 18*sqrt(d)*omega(r),
    "quadratic384" gives 384*d*omega(r)^2.  Loss-dependent prefactors are
    applied by excess_bound, not here.
    """
    if variant not in APPROX_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {APPROX_VARIANTS}")
    if d < 1 or N < 1 or M < 1:
        raise ValueError("d, N, M must all be >= 1")
    if abs(omega(0.0)) > 1e-12:
        raise ValueError("omega(0) must be 0")
    r = float(N * M) ** (-2.0 / d)
    if variant == "l1_19":
        return 19.0 * math.sqrt(d) * omega(r)
    if variant == "thm2_18":
        return 18.0 * math.sqrt(d) * omega(r)
    return 384.0 * d * omega(r) ** 2


def stochastic_error_bound(lambda_L: float, B: float, S: float, D: float,
                           n: float, p: float, C: float = 1.0) -> float:
    """C * lambda_L * B * S * D * log(S) * log(n) / n^(1-1/p).

    For p = inf (sub-exponential response) the denominator improves to n.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if S <= 1:
        raise ValueError("S must exceed 1")
    if not p > 1:
        raise ValueError("p must exceed 1")
    denom = float(n) if math.isinf(p) else float(n) ** (1.0 - 1.0 / p)
    return C * lambda_L * B * S * D * math.log(S) * math.log(n) / denom


@dataclass(frozen=True)
class BoundTerms:
    """Excess-risk bound split into its two terms (all up to constants)."""

    variant: str
    stochastic: float
    approximation: float
    calibration: float
    total: float


EXCESS_VARIANTS = ("thm2", "l1", "thm2_quadratic", "manifold", "manifold_quadratic")


def excess_bound(design: NetworkDesign, rate: RateSpec, loss: LossSpec, n: int,
                 variant: str = "thm2", C: float = 1.0, C2: float = 1.0,
                 lambda_quad: float | None = None,
                 calibration: float | None = None) -> BoundTerms:
    """Stochastic + approximation bound for a trained design.

    The manifold variants read the reduced dimension from rate.d_target and
    need it set explicitly; the quadratic variants need ``lambda_quad``.
    ``calibration`` multiplies the total (the self-calibration constant of
    the distance version).
    """
    if variant not in EXCESS_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {EXCESS_VARIANTS}")
    missing = []
    if design.N is None or design.M is None:
        missing.append("design.N/design.M")
    if variant.endswith("quadratic") and lambda_quad is None:
        missing.append("lambda_quad")
    if variant.startswith("manifold") and rate.d_target is None:
        missing.append("rate.d_target (d_delta)")
    if missing:
        raise ValueError("missing required inputs: " + ", ".join(missing))

    lam = lipschitz_constant(loss)
    stoch = stochastic_error_bound(lam, design.B, design.S, design.D, n, rate.p, C=C)

    dt = rate.dt
    if variant in ("thm2", "l1", "thm2_quadratic"):
        r = float(design.N * design.M) ** (-2.0 / dt)
        if variant == "thm2":
            approx = lam * 18.0 * math.sqrt(dt) * rate.omega(r)
        elif variant == "l1":
            approx = lam * 19.0 * math.sqrt(dt) * rate.omega(r)
        else:
            approx = 384.0 * lambda_quad * dt * rate.omega(r) ** 2
    else:
        r = (C2 + 1.0) * float(design.N * design.M) ** (-2.0 / dt)
        base = (2.0 + 18.0 * math.sqrt(dt)) * rate.omega(r)
        approx = lam * base if variant == "manifold" else lambda_quad * base ** 2

    cal = 1.0 if calibration is None else float(calibration)
    return BoundTerms(variant=variant, stochastic=stoch, approximation=approx,
                      calibration=cal, total=cal * (stoch + approx))


def d_delta(d_M: int, d: int, delta: float, c: float = 1.0) -> int:
    """Reduced effective dimension ceil(c * d_M * log(d/delta) / delta^2),
    clamped into [d_M, d-1]."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie inside (0, 1)")
    if not 1 <= d_M < d:
        raise ValueError("require 1 <= d_M < d")
    raw = math.ceil(c * d_M * math.log(d / delta) / delta ** 2)
    return min(max(raw, d_M), d - 1)


def admissible_rho(N: int, M: int, d: int, d_delta_: int, delta: float,
                   C2: float = 1.0) -> float:
    """Largest manifold-neighborhood radius the error bound tolerates,
    as a function of the user-supplied constant C2."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie inside (0, 1)")
    if not 1 <= d_delta_ < d:
        raise ValueError("require 1 <= d_delta < d")
    r = float(N * M) ** (-2.0 / d_delta_)
    return C2 * r * (1.0 - delta) / (2.0 * (math.sqrt(d / d_delta_) + 1.0 - delta))


def rate_exponent(rate: RateSpec) -> float:
    """Exponent s in the convergence rate n^(-s): (1-1/p) * alpha / (d + alpha)."""
    return rate.moment_factor * rate.alpha / (rate.dt + rate.alpha)


def n_star(n: float, rate: RateSpec) -> float:
    """Effective sample size n^((1-1/p) * d / (d + alpha))."""
    return float(n) ** (rate.moment_factor * rate.dt / (rate.dt + rate.alpha))


def ren(design_exponent_1: float, design_exponent_2: float) -> float:
    """Relative network efficiency of two size laws S_i = n_*^(s_i).

    log S_2 / log S_1 with the log n_* factors cancelled, i.e. s_2 / s_1.
    """
    if design_exponent_1 <= 0 or design_exponent_2 <= 0:
        raise ValueError("size exponents must be positive")
    return design_exponent_2 / design_exponent_1


@dataclass(frozen=True)
class CatalogRow:
    label: str
    exponent: float
    size_estimate: float
    ren_vs: dict = field(default_factory=dict)


def ren_catalog(n: float, rate: RateSpec) -> list[CatalogRow]:
    """Size exponents, size estimates and pairwise REN for DFW/WFD/DAW.

    Size estimates carry the Corollary log-n corrections (n_*^s / log^c n)
    for reference; REN itself is the exponent ratio, which is what the
    size-based definition converges to once the log n_* factors cancel.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    ns = n_star(n, rate)
    logn = math.log(n)
    rows = []
    for label, (s, logpow) in _CATALOG.items():
        size = ns ** s / logn ** logpow
        if size <= 1.0:
            raise ValueError(f"{label}: size estimate <= 1 at n={n}; increase n")
        ren_vs = {other: ren(s, s_other)
                  for other, (s_other, _) in _CATALOG.items()}
        rows.append(CatalogRow(label=label, exponent=s, size_estimate=size, ren_vs=ren_vs))
    return rows


def rectangle_design(n: int, rate: RateSpec, quadratic: bool = False,
                     manifold_d_delta: int | None = None, B: float = 1.0) -> NetworkDesign:
    """Optimal fixed-width design at sample size n.

    quadratic=False gives the deep-fixed-width architecture
    (D = 12*floor(sqrt(n_*)/log n) + 14, W = max{7d, 20}); quadratic=True
    gives the curvature-aware variant with the (2d + 4*alpha) exponent.
    ``manifold_d_delta`` substitutes the reduced dimension into the
    width/depth formulas while the network keeps its ambient input dim.
    """
    if n < 3:
        raise ValueError("n must be at least 3 so that log n > 1")
    d_eff = rate.d if manifold_d_delta is None else manifold_d_delta
    if d_eff < 1:
        raise ValueError("effective dimension must be >= 1")
    logn = math.log(n)
    W = max(7 * d_eff, 20)
    if quadratic:
        expo = rate.moment_factor * d_eff / (2.0 * d_eff + 4.0 * rate.alpha)
        D = 12 * math.floor(float(n) ** expo / logn) + 14
        label = "RectangleQuadratic"
    else:
        ns = float(n) ** (rate.moment_factor * d_eff / (d_eff + rate.alpha))
        D = 12 * math.floor(math.sqrt(ns) / logn) + 14
        label = "DFW"
    return _mk_design(label, rate.d, W, D, B, N=1, M=(D - 14) // 12 if D > 14 else 1)


def wfd_design(n: int, rate: RateSpec, B: float = 1.0) -> NetworkDesign:
    """Wide fixed-depth design: D = 26, width driven by n_*."""
    if n < 3:
        raise ValueError("n must be at least 3")
    d = rate.d
    ns = n_star(n, rate)
    N = math.floor(math.sqrt(ns))
    W = max(4 * d * math.floor(ns ** (1.0 / (2 * d))) + 3 * d, 12 * N + 8)
    return _mk_design("WFD", d, W, 26, B, N=max(N, 1), M=1)


def estimate_modulus(f: TargetFn, r: float, probes: int, rng: PrngStream) -> float:
    """Lower-bound probe of the modulus of continuity at radius r.

    Draws ``probes`` pairs (x, x + u*r*dir) clipped into the cube and takes
    the largest |f(x) - f(y)|.  Random probing cannot certify the sup, so
    treat the result as a lower bound.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if not f.continuous:
        warnings.warn(
            f"target {f.kind!r} is not uniformly continuous; "
            "the modulus probe lower-bounds the jump size",
            RuntimeWarning,
        )
    if r == 0:
        return 0.0
    gaps, _ = _modulus_pairs(f, r, probes, rng)
    return float(np.max(gaps))


def estimate_modulus_profile(f: TargetFn, radii, probes: int, rng: PrngStream) -> list[float]:
    """Modulus estimates on an ascending radius schedule from one nested
    probe pool; nondecreasing in r by construction."""
    radii = [float(r) for r in radii]
    if any(r < 0 for r in radii) or sorted(radii) != radii:
        raise ValueError("radii must be nonnegative and ascending")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    r_max = radii[-1]
    if r_max == 0:
        return [0.0 for _ in radii]
    gaps, dists = _modulus_pairs(f, r_max, probes, rng)
    out = []
    for r in radii:
        mask = dists <= r
        out.append(float(np.max(gaps[mask])) if np.any(mask) else 0.0)
    return out


def _modulus_pairs(f: TargetFn, r: float, probes: int, rng: PrngStream):
    d = f.d
    x = rng.uniform(size=(probes, d))
    dirs = rng.normal(size=(probes, d))
    norms = np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    dirs = dirs / norms
    lengths = rng.uniform(size=(probes, 1)) * r
    y = np.clip(x + lengths * dirs, 0.0, 1.0)
    gaps = np.abs(f(x) - f(y))
    dists = np.linalg.norm(y - x, axis=1)
    return gaps, dists
