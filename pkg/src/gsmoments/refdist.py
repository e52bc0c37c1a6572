"""Moment-matched reference distributions and their p-values.

The permuted linear statistic is approximated by a normal or by a beta
rescaled onto the exact attainable range; the quadratic statistic by a
scaled chi-square matched to its first two permutation moments. CDFs come
from the in-house special functions in :mod:`gsmoments.specfun`.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InputError
from .moments import LinearMoments, QuadraticMoments
from .specfun import norm_cdf, reg_inc_beta, reg_inc_gamma_upper

log = logging.getLogger(__name__)

# t_hat this far (relative to the range width) outside [lo, hi] is treated
# as rounding noise and clamped silently; anything larger gets a warning.
_SILENT_CLAMP_REL = 1e-9

_MIN_P = 5e-324  # open-interval guard for p_central


@dataclass(frozen=True)
class NormalRef:
    variance: float

    def __post_init__(self):
        if not self.variance > 0.0:
            raise DegenerateError(f"normal reference needs variance > 0, got {self.variance}")


@dataclass(frozen=True)
class ScaledBetaRef:
    """beta(alpha, beta) stretched onto [lo, hi]."""

    lo: float
    hi: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.lo < 0.0 < self.hi):
            raise DegenerateError(f"beta range must straddle 0, got [{self.lo}, {self.hi}]")
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise DegenerateError(
                f"beta shapes must be positive, got alpha={self.alpha}, beta={self.beta}"
            )

    def mean(self) -> float:
        return self.lo + (self.hi - self.lo) * self.alpha / (self.alpha + self.beta)

    def variance(self) -> float:
        ab = self.alpha + self.beta
        return (self.hi - self.lo) ** 2 * self.alpha * self.beta / (ab**2 * (ab + 1.0))


@dataclass(frozen=True)
class ScaledChiSqRef:
    """sigma2 * chi-square with nu degrees of freedom (nu need not be integer)."""

    sigma2: float
    nu: float

    def __post_init__(self):
        if self.sigma2 <= 0.0 or self.nu <= 0.0:
            raise DegenerateError(
                f"chi-square reference needs sigma2, nu > 0, got {self.sigma2}, {self.nu}"
            )

    def mean(self) -> float:
        return self.sigma2 * self.nu

    def variance(self) -> float:
        return 2.0 * self.sigma2**2 * self.nu


@dataclass(frozen=True)
class PValueSet:
    p_left: float
    p_right: float
    p_central: float
    method: str  # normal | beta | chisq | permutation | rotation
    notes: tuple = ()


def _central(p_left: float, p_right: float) -> float:
    return min(1.0, max(2.0 * min(p_left, p_right), _MIN_P))


def fit_normal(lm: LinearMoments) -> NormalRef:
    """Normal reference with the exact permutation variance."""
    if lm.variance <= 0.0:
        raise DegenerateError("degenerate set: permutation variance is 0")
    return NormalRef(variance=lm.variance)


def fit_scaled_beta(lm: LinearMoments) -> ScaledBetaRef:
    """Rescaled beta matching range, mean 0, and the permutation variance.

    Valid only strictly inside the variance bound sigma^2 < -lo*hi; at the
    bound the permuted statistic takes one or two values and no continuous
    fit makes sense.
    """
    a, b, var = lm.range_lo, lm.range_hi, lm.variance
    if a == 0.0 or b == 0.0:
        raise DegenerateError("degenerate set: statistic range collapses to one side")
    if not (a < 0.0 < b):
        raise DegenerateError(f"statistic range [{a}, {b}] does not straddle 0")
    if var <= 0.0:
        raise DegenerateError("degenerate set: permutation variance is 0")
    if var >= -a * b:
        raise DegenerateError(
            f"variance {var:.6g} at or beyond the -lo*hi bound {-a * b:.6g} "
            "(two-valued permutation distribution; no beta fit)"
        )
    k = a * b / var + 1.0  # negative, because var < -a*b
    alpha = a / (b - a) * k
    beta = -b / (b - a) * k
    return ScaledBetaRef(lo=a, hi=b, alpha=alpha, beta=beta)


def fit_scaled_chisq(qm: QuadraticMoments) -> ScaledChiSqRef:
    """Scaled chi-square matching the quadratic mean and variance."""
    if qm.variance is None:
        raise InputError("quadratic variance unavailable (n < 4)")
    if qm.mean <= 0.0 or qm.variance <= 0.0:
        raise DegenerateError(
            f"chi-square fit needs positive mean and variance, got "
            f"mean={qm.mean:.6g}, variance={qm.variance:.6g}"
        )
    nu = 2.0 * qm.mean**2 / qm.variance
    return ScaledChiSqRef(sigma2=qm.mean / nu, nu=nu)


def pvalues_normal(ref: NormalRef, t_hat: float) -> PValueSet:
    p_left = norm_cdf(t_hat / math.sqrt(ref.variance))
    p_right = 1.0 - p_left
    return PValueSet(p_left, p_right, _central(p_left, p_right), method="normal")


def pvalues_beta(ref: ScaledBetaRef, t_hat: float) -> PValueSet:
    width = ref.hi - ref.lo
    notes: tuple = ()
    if t_hat < ref.lo or t_hat > ref.hi:
        # impossible for a correctly computed statistic; keep the p-value
        # sane but flag real excursions as an upstream moment mismatch
        excess = max(ref.lo - t_hat, t_hat - ref.hi)
        if excess > _SILENT_CLAMP_REL * width:
            log.warning(
                "observed statistic %.6g outside attainable range [%.6g, %.6g]; clamped",
                t_hat,
                ref.lo,
                ref.hi,
            )
            notes = (f"observed {t_hat:.6g} clamped into [{ref.lo:.6g}, {ref.hi:.6g}]",)
        t_hat = min(max(t_hat, ref.lo), ref.hi)
    u = (t_hat - ref.lo) / width
    p_left = reg_inc_beta(min(max(u, 0.0), 1.0), ref.alpha, ref.beta)
    p_right = 1.0 - p_left
    return PValueSet(p_left, p_right, _central(p_left, p_right), method="beta", notes=notes)


def pvalues_chisq(ref: ScaledChiSqRef, c_hat: float) -> PValueSet:
    """Upper-tail probability of the fitted chi-square at the observed value.

    The upper tail doubles as the set's central p-value for quadratic
    inference (the statistic is one-sided by construction; see README on
    the naming).
    """
    if c_hat < 0.0:
        raise InputError(f"quadratic statistic cannot be negative, got {c_hat}")
    p_right = reg_inc_gamma_upper(ref.nu / 2.0, c_hat / (2.0 * ref.sigma2))
    p_left = 1.0 - p_right
    return PValueSet(p_left, p_right, max(p_right, _MIN_P), method="chisq")


def adjust_pvalues(pvals, method: str) -> np.ndarray:
    """Multiple-testing adjustment: Benjamini-Hochberg step-up or Bonferroni."""
    p = np.asarray(pvals, dtype=np.float64)
    if p.size and ((p < 0.0) | (p > 1.0)).any():
        raise InputError("p-values must lie in [0, 1]")
    m = p.size
    if m == 0:
        return p.copy()
    if method == "bonferroni":
        return np.minimum(1.0, m * p)
    if method == "bh":
        order = np.argsort(p, kind="stable")
        ranked = p[order] * m / np.arange(1, m + 1)
        adjusted = np.minimum(1.0, np.minimum.accumulate(ranked[::-1])[::-1])
        out = np.empty_like(adjusted)
        out[order] = adjusted
        return out
    raise InputError(f"unknown adjustment method {method!r}")
