"""Exact permutation moments of the linear and quadratic set statistics.

The linear statistic is a weighted sum of per-gene covariances; under
permutation of the phenotype its mean, variance, attainable range, and
fourth moment all have closed forms in cheap data moments. The quadratic
statistic (weighted sum of squared covariances) gets its mean and variance
the same way. Everything here is validated against exhaustive enumeration
over all n! permutations in the test suite.
"""

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dataset import ExpressionMatrix, Phenotype, ResolvedGeneSet
from .errors import GsmError, InputError

_VAR_CLAMP_REL = 1e-10


@dataclass(frozen=True, eq=False)
class PseudoGene:
    """Weighted row sum collapsing a set to one profile, plus its moments."""

    values: np.ndarray
    xbar_gg: float  # (1/n) sum values^2
    xbar_gggg: float  # (1/n) sum values^4

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """The 2x2 product that turns data moments into fourth moments."""

    n: int
    atb: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.atb, dtype=np.float64)
        m.setflags(write=False)
        object.__setattr__(self, "atb", m)


@dataclass(frozen=True)
class LinearMoments:
    mean: float
    variance: float
    range_lo: float
    range_hi: float
    fourth_moment: float | None  # None when n < 4


@dataclass(frozen=True)
class QuadraticMoments:
    mean: float
    variance: float | None  # None when n < 4
    notes: tuple = ()


@dataclass(frozen=True, eq=False)
class ObservedStatistics:
    beta_hat: np.ndarray  # per resolved gene
    t_hat: float
    c_hat: float


def beta_hat(gene_row, phenotype: Phenotype) -> float:
    """Per-gene association: (1/n) sum of X_gi * Y_i over subjects."""
    x = np.asarray(gene_row, dtype=np.float64)
    if x.shape != phenotype.values.shape:
        raise InputError(f"gene row length {x.size} != phenotype length {phenotype.n}")
    return float(x @ phenotype.values) / phenotype.n


def observed_statistics(
    resolved: ResolvedGeneSet, matrix: ExpressionMatrix, phenotype: Phenotype
) -> ObservedStatistics:
    """Observed linear and quadratic statistics for one resolved set."""
    rows = matrix.values[resolved.row_indices]
    betas = rows @ phenotype.values / phenotype.n
    w = resolved.weights
    return ObservedStatistics(
        beta_hat=betas, t_hat=float(w @ betas), c_hat=float(w @ betas**2)
    )


def build_pseudo_gene(resolved: ResolvedGeneSet, matrix: ExpressionMatrix) -> PseudoGene:
    """Collapse a resolved set to its weighted row sum (weights absorbed)."""
    values = resolved.weights @ matrix.values[resolved.row_indices]
    return PseudoGene(
        values=values,
        xbar_gg=float((values**2).mean()),
        xbar_gggg=float((values**4).mean()),
    )


def linear_variance(pseudo: PseudoGene, phenotype: Phenotype) -> float:
    """Permutation variance of the linear statistic: mu2 * xbar_GG / (n-1)."""
    n = phenotype.n
    if n < 2:
        raise InputError("linear variance needs n >= 2")
    return phenotype.mu2 * pseudo.xbar_gg / (n - 1)


def linear_range(pseudo: PseudoGene, phenotype: Phenotype) -> tuple:
    """Attainable range [A, B] of the permuted linear statistic.

    B pairs sorted pseudo-gene values with sorted phenotype values, A with
    the phenotype reversed (rearrangement inequality extremes).
    """
    xs = np.sort(pseudo.values)
    ys = np.sort(phenotype.values)
    b = float(xs @ ys) / phenotype.n
    a = float(xs @ ys[::-1]) / phenotype.n
    return a, b


@lru_cache(maxsize=None)
def _atb_cached(n: int) -> MomentMatrix:
    # A maps (mu2^2, mu4) to the five distinct-index moments of permuted Y
    # (four of a kind, three of a kind, two pair, one pair, all distinct);
    # B maps those onto the two X cross-moment combinations.
    at = np.array(
        [
            [
                0.0,
                0.0,
                n / (n - 1.0),
                -n / ((n - 1.0) * (n - 2.0)),
                3.0 * n / ((n - 1.0) * (n - 2.0) * (n - 3.0)),
            ],
            [
                1.0,
                -1.0 / (n - 1.0),
                -1.0 / (n - 1.0),
                2.0 / ((n - 1.0) * (n - 2.0)),
                -6.0 / ((n - 1.0) * (n - 2.0) * (n - 3.0)),
            ],
        ]
    )
    b = np.array([[0.0, 1.0], [0.0, -4.0], [1.0, -3.0], [-2.0, 12.0], [1.0, -6.0]])
    return MomentMatrix(n=n, atb=at @ b)


def build_atb(n: int) -> MomentMatrix:
    """Fourth-moment coefficient matrix for sample size n (cached per n)."""
    n = int(n)
    if n < 4:
        raise InputError(f"fourth-moment coefficients need n >= 4, got n={n}")
    return _atb_cached(n)


def lemma1_cross_moment(xbar_gh: float, phenotype: Phenotype, n: int) -> float:
    """E(beta_g * beta_h) under permutation: mu2 * xbar_gh / (n-1).

    Equals the covariance, since each permuted beta has mean zero.
    """
    if n < 2:
        raise InputError("cross moment needs n >= 2")
    return phenotype.mu2 * xbar_gh / (n - 1)


def _moment_vec(phenotype: Phenotype) -> np.ndarray:
    return np.array([phenotype.mu2**2, phenotype.mu4])


def lemma2_fourth_moment(
    xbar_pairs, xbar_ghrs: float, phenotype: Phenotype, atb: MomentMatrix, n: int
) -> float:
    """E(beta_g beta_h beta_r beta_s) under permutation, n >= 4.

    ``xbar_pairs`` is (xbar_gh, xbar_gr, xbar_gs, xbar_hr, xbar_hs, xbar_rs).
    """
    if n < 4:
        raise InputError("fourth moments need n >= 4")
    gh, gr, gs, hr, hs, rs = xbar_pairs
    xstar = gh * rs + gs * hr + gr * hs
    rhs = np.array([xstar / n**2, xbar_ghrs / n**3])
    return float(_moment_vec(phenotype) @ atb.atb @ rhs)


def corollary2_cov(
    xbar_gg: float,
    xbar_hh: float,
    xbar_gh: float,
    xbar_gghh: float,
    phenotype: Phenotype,
    atb: MomentMatrix,
    n: int,
) -> float:
    """cov(beta_g^2, beta_h^2) under permutation, n >= 4."""
    if n < 4:
        raise InputError("squared-statistic covariances need n >= 4")
    xstar = xbar_gg * xbar_hh + 2.0 * xbar_gh**2
    rhs = np.array([xstar / n**2, xbar_gghh / n**3])
    fourth = float(_moment_vec(phenotype) @ atb.atb @ rhs)
    return fourth - phenotype.mu2**2 / (n - 1) ** 2 * xbar_gg * xbar_hh


def scaled_set_rows(resolved: ResolvedGeneSet, matrix: ExpressionMatrix) -> np.ndarray:
    """Per-set copy of the set's rows with sqrt(weight) absorbed.

    Requires nonnegative weights; never mutates the shared matrix (sets
    overlap).
    """
    w = resolved.weights
    if (w < 0).any():
        raise InputError(
            f"gene set {resolved.name!r}: quadratic statistic needs nonnegative weights"
        )
    return matrix.values[resolved.row_indices] * np.sqrt(w)[:, None]


def s1_sum(scaled_rows: np.ndarray) -> float:
    """S1 = (sum_g xbar_gg)^2 over weight-absorbed rows, O(np)."""
    n = scaled_rows.shape[1]
    return float((scaled_rows**2).sum() / n) ** 2


def s2_sum(scaled_rows: np.ndarray) -> float:
    """S2 = (1/n) sum_i (sum_g X_gi^2)^2 over weight-absorbed rows, O(np)."""
    n = scaled_rows.shape[1]
    col = (scaled_rows**2).sum(axis=0)
    return float((col**2).sum() / n)


def s3_gene_pairs(scaled_rows: np.ndarray) -> float:
    """S3 = sum_{g,h} xbar_gh^2 via the p x p gene Gram matrix, O(n p^2)."""
    n = scaled_rows.shape[1]
    gram = scaled_rows @ scaled_rows.T / n
    return float((gram**2).sum())


def s3_subject_pairs(scaled_rows: np.ndarray) -> float:
    """Same S3 via the n x n subject Gram matrix, O(n^2 p); wins when p > n."""
    n = scaled_rows.shape[1]
    gram = scaled_rows.T @ scaled_rows
    return float((gram**2).sum() / n**2)


def quadratic_moments(
    resolved: ResolvedGeneSet,
    matrix: ExpressionMatrix,
    phenotype: Phenotype,
    s3_strategy: str = "auto",
) -> QuadraticMoments:
    """Permutation mean and variance of the quadratic statistic.

    The variance needs n >= 4; for n in {2, 3} the mean is still exact and
    the variance comes back as None rather than an extrapolation. The S3
    term is the only super-linear piece: ``by_gene_pairs`` costs O(n p^2),
    ``by_subject_pairs`` O(n^2 p), and ``auto`` picks by whether p > n.
    """
    if s3_strategy not in ("auto", "by_gene_pairs", "by_subject_pairs"):
        raise InputError(f"unknown s3 strategy {s3_strategy!r}")
    n = phenotype.n
    if n < 2:
        raise InputError("quadratic moments need n >= 2")
    rows = scaled_set_rows(resolved, matrix)
    p = rows.shape[0]
    mean = phenotype.mu2 / (n - 1) * float((rows**2).sum() / n)
    notes: tuple = ()
    if n < 4:
        return QuadraticMoments(mean=mean, variance=None, notes=notes)

    s1 = s1_sum(rows)
    s2 = s2_sum(rows)
    if s3_strategy == "by_gene_pairs" or (s3_strategy == "auto" and p <= n):
        s3 = s3_gene_pairs(rows)
    else:
        s3 = s3_subject_pairs(rows)

    atb = build_atb(n)
    rhs = np.array([(s1 + 2.0 * s3) / n**2, s2 / n**3])
    variance = float(_moment_vec(phenotype) @ atb.atb @ rhs)
    variance -= phenotype.mu2**2 / (n - 1) ** 2 * s1
    if variance < 0.0:
        if variance >= -_VAR_CLAMP_REL * mean**2:
            warnings.warn(
                f"set {resolved.name!r}: clamping tiny negative quadratic variance "
                f"({variance:.3e}) to 0",
                RuntimeWarning,
                stacklevel=2,
            )
            notes = (f"quadratic variance {variance:.3e} clamped to 0",)
            variance = 0.0
        else:
            raise GsmError(
                f"set {resolved.name!r}: quadratic variance {variance:.6e} is "
                "negative beyond rounding tolerance"
            )
    return QuadraticMoments(mean=mean, variance=variance, notes=notes)


def linear_moments(
    pseudo: PseudoGene, phenotype: Phenotype, atb: MomentMatrix | None = None
) -> LinearMoments:
    """All moment ingredients the linear reference fits need.

    The fourth moment applies the four-gene moment formula to the
    pseudo-gene (the three pair products collapse to 3 * xbar_GG^2); it
    requires n >= 4 and is None below that.
    """
    n = phenotype.n
    variance = linear_variance(pseudo, phenotype)
    lo, hi = linear_range(pseudo, phenotype)
    fourth = None
    if n >= 4:
        if atb is None:
            atb = build_atb(n)
        rhs = np.array([3.0 * pseudo.xbar_gg**2 / n**2, pseudo.xbar_gggg / n**3])
        fourth = float(_moment_vec(phenotype) @ atb.atb @ rhs)
    return LinearMoments(
        mean=0.0, variance=variance, range_lo=lo, range_hi=hi, fourth_moment=fourth
    )


def excess_kurtosis_diag(lm: LinearMoments) -> float:
    """Diagnostic E(T^4)/var^2 - 3; negative means lighter-than-normal tails."""
    if lm.fourth_moment is None:
        raise InputError("fourth moment unavailable (n < 4)")
    if lm.variance <= 0.0:
        raise GsmError("excess kurtosis undefined for zero variance")
    return lm.fourth_moment / lm.variance**2 - 3.0
