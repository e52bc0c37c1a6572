"""Resampling oracles: exhaustive and Monte-Carlo permutation, and rotation.

These are the ground-truth references the closed-form moments are checked
against. Monte-Carlo runs are seeded and reproducible; distinct gene sets
can be evaluated against a shared stream of reorderings (one draw feeds
every set, the way a batch permutation analysis is actually run).
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dataset import Phenotype
from .errors import InputError

_EXHAUSTIVE_MAX_N = 10  # 10! ~ 3.6M reorderings, still desk scale
_ENUMERATE_MAX_N = 8
_CHUNK_BUDGET_FLOATS = 8_000_000  # ~64 MB of per-gene statistics per chunk


@dataclass(frozen=True)
class PermutationPlan:
    """Either every permutation (small n) or M seeded uniform draws."""

    mode: str  # "exhaustive" | "monte_carlo"
    m: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exhaustive", "monte_carlo"):
            raise InputError(f"unknown permutation mode {self.mode!r}")
        if self.mode == "monte_carlo" and self.m < 1:
            raise InputError(f"need at least one permutation, got M={self.m}")

    @classmethod
    def exhaustive(cls) -> "PermutationPlan":
        return cls(mode="exhaustive")

    @classmethod
    def monte_carlo(cls, m: int, seed: int) -> "PermutationPlan":
        return cls(mode="monte_carlo", m=m, seed=seed)


@dataclass(frozen=True, eq=False)
class RotationPlan:
    """M seeded Haar rotations in the contrast space orthogonal to 1."""

    m: int
    seed: int
    contrast: np.ndarray | None = None  # None -> Helmert; else n x (n-1)

    def __post_init__(self):
        if self.m < 1:
            raise InputError(f"need at least one rotation, got M={self.m}")
        if self.contrast is not None:
            w = np.ascontiguousarray(self.contrast, dtype=np.float64)
            w.setflags(write=False)
            object.__setattr__(self, "contrast", w)


@dataclass(frozen=True)
class ResamplingResult:
    """p-values plus empirical moments from one resampling run.

    ``se_*`` fields carry binomial Monte-Carlo standard errors
    sqrt(p(1-p)/M); they are None for exhaustive runs, which are exact.
    Fields for a statistic that was not requested are None.
    """

    p_left: float | None
    p_right: float | None
    p_central: float | None
    p_quadratic: float | None
    m_effective: int
    method: str  # "permutation" | "rotation"
    t_mean: float | None = None
    t_var: float | None = None
    t_fourth: float | None = None
    c_mean: float | None = None
    c_var: float | None = None
    se_left: float | None = None
    se_right: float | None = None
    se_central: float | None = None
    se_quadratic: float | None = None


def sample_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """One uniform random permutation of 0..n-1 by Fisher-Yates."""
    if n < 1:
        raise InputError("permutation length must be positive")
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def enumerate_permutations(n: int) -> np.ndarray:
    """All n! permutations as an (n!, n) index array; n <= 8."""
    if n > _ENUMERATE_MAX_N:
        raise InputError(f"full enumeration in memory capped at n={_ENUMERATE_MAX_N}")
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def helmert_contrast(n: int) -> np.ndarray:
    """Normalized Helmert contrast: n x (n-1), orthonormal columns, all
    orthogonal to the all-ones vector."""
    if n < 2:
        raise InputError("contrast matrix needs n >= 2")
    w = np.zeros((n, n - 1))
    for j in range(1, n):
        scale = 1.0 / math.sqrt(j * (j + 1.0))
        w[:j, j - 1] = scale
        w[j, j - 1] = -j * scale
    return w


def validate_contrast(w: np.ndarray, n: int, tol: float = 1e-10) -> None:
    if w.shape != (n, n - 1):
        raise InputError(f"contrast must be {n} x {n - 1}, got {w.shape}")
    if np.abs(w.T @ w - np.eye(n - 1)).max() > tol:
        raise InputError("contrast columns are not orthonormal")
    if np.abs(w.sum(axis=0)).max() > tol:
        raise InputError("contrast columns are not orthogonal to the ones vector")


def sample_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform orthogonal matrix: QR of a Gaussian matrix with the
    sign of R's diagonal folded into Q."""
    if n < 1:
        raise InputError("rotation dimension must be positive")
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


def _sample_rotations(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """k Haar matrices at once, stacked (k, n, n)."""
    z = rng.standard_normal((k, n, n))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
    signs = np.where(signs == 0.0, 1.0, signs)
    return q * signs[:, None, :]


def _chunk_size(total_rows: int) -> int:
    return max(64, _CHUNK_BUDGET_FLOATS // max(total_rows, 1))


def _permuted_y_chunks(phenotype: Phenotype, plan: PermutationPlan, chunk: int):
    """Yield (k, n) blocks of reordered phenotype rows.

    Exhaustive mode streams every permutation including the identity;
    Monte-Carlo mode draws independent uniform permutations from the
    seeded generator.
    """
    y = phenotype.values
    n = y.size
    if plan.mode == "exhaustive":
        if n > _EXHAUSTIVE_MAX_N:
            raise InputError(f"exhaustive mode capped at n={_EXHAUSTIVE_MAX_N}, got n={n}")
        it = itertools.permutations(range(n))
        while True:
            block = list(itertools.islice(it, chunk))
            if not block:
                return
            yield y[np.array(block, dtype=np.intp)]
    else:
        rng = np.random.default_rng(plan.seed)
        base = np.arange(n)
        remaining = plan.m
        while remaining > 0:
            k = min(chunk, remaining)
            perms = rng.permuted(np.broadcast_to(base, (k, n)), axis=1)
            yield y[perms]
            remaining -= k


def _rotated_y_chunks(phenotype: Phenotype, plan: RotationPlan, chunk: int):
    """Yield (k, n) blocks of rotated phenotype rows.

    The full rotation is (1/n) 1 1^T + W Q* W^T; on a centered phenotype
    the first term vanishes, so each row is W (Q* (W^T y)).
    """
    y = phenotype.values
    n = y.size
    w = helmert_contrast(n) if plan.contrast is None else np.asarray(plan.contrast)
    validate_contrast(w, n)
    yc = w.T @ y
    rng = np.random.default_rng(plan.seed)
    remaining = plan.m
    while remaining > 0:
        k = min(chunk, remaining)
        qs = _sample_rotations(n - 1, k, rng)
        yield (qs @ yc) @ w.T
        remaining -= k


class _SetAccumulator:
    """Per-set tally of comparison counts and raw moment sums."""

    def __init__(self, n_sets, t_obs, c_obs, want_linear, want_quadratic):
        self.count = 0
        self.want_linear = want_linear
        self.want_quadratic = want_quadratic
        self.t_obs = t_obs
        self.c_obs = c_obs
        z = lambda: np.zeros(n_sets)
        zi = lambda: np.zeros(n_sets, dtype=np.int64)
        if want_linear:
            self.le_t, self.ge_t, self.abs_ge_t = zi(), zi(), zi()
            self.s_t1, self.s_t2, self.s_t4 = z(), z(), z()
        if want_quadratic:
            self.ge_c = zi()
            self.s_c1, self.s_c2 = z(), z()

    def add_linear(self, t_pool):
        # t_pool: (n_sets, k)
        self.le_t += (t_pool <= self.t_obs[:, None]).sum(axis=1)
        self.ge_t += (t_pool >= self.t_obs[:, None]).sum(axis=1)
        self.abs_ge_t += (np.abs(t_pool) >= np.abs(self.t_obs)[:, None]).sum(axis=1)
        self.s_t1 += t_pool.sum(axis=1)
        sq = t_pool**2
        self.s_t2 += sq.sum(axis=1)
        self.s_t4 += (sq**2).sum(axis=1)

    def add_quadratic(self, c_pool):
        self.ge_c += (c_pool >= self.c_obs[:, None]).sum(axis=1)
        self.s_c1 += c_pool.sum(axis=1)
        self.s_c2 += (c_pool**2).sum(axis=1)


def _finalize(acc: _SetAccumulator, method: str, exhaustive: bool):
    m = acc.count
    results = []
    n_sets = acc.t_obs.size if acc.want_linear else acc.c_obs.size

    def pv(c):
        # exhaustive pools already contain the identity reordering; the
        # Monte-Carlo convention counts the observed statistic as one more.
        # The identity always ties with itself, so an exhaustive count is at
        # least 1 even if rounding in the pooled matmul shifted it an ulp.
        return max(c, 1) / m if exhaustive else (c + 1) / (m + 1)

    def se(p):
        return None if exhaustive else math.sqrt(p * (1.0 - p) / m)

    for i in range(n_sets):
        pl = pr = pc = pq = None
        t_mean = t_var = t_fourth = c_mean = c_var = None
        if acc.want_linear:
            pl = pv(int(acc.le_t[i]))
            pr = pv(int(acc.ge_t[i]))
            pc = pv(int(acc.abs_ge_t[i]))
            t_mean = acc.s_t1[i] / m
            t_var = acc.s_t2[i] / m - t_mean**2
            t_fourth = acc.s_t4[i] / m
        if acc.want_quadratic:
            pq = pv(int(acc.ge_c[i]))
            c_mean = acc.s_c1[i] / m
            c_var = acc.s_c2[i] / m - c_mean**2
        results.append(
            ResamplingResult(
                p_left=pl,
                p_right=pr,
                p_central=pc,
                p_quadratic=pq,
                m_effective=m,
                method=method,
                t_mean=t_mean,
                t_var=t_var,
                t_fourth=t_fourth,
                c_mean=c_mean,
                c_var=c_var,
                se_left=None if pl is None else se(pl),
                se_right=None if pr is None else se(pr),
                se_central=None if pc is None else se(pc),
                se_quadratic=None if pq is None else se(pq),
            )
        )
    return results


def batch_resampling_pvalues(
    rows_list,
    weights_list,
    phenotype: Phenotype,
    plan,
    statistics=("linear", "quadratic"),
):
    """Evaluate many gene sets against one shared stream of reorderings.

    ``rows_list[i]`` is the i-th set's (p_i, n) expression block and
    ``weights_list[i]`` its aligned weights. The plan picks permutation
    (exhaustive or Monte-Carlo) versus rotation. Returns one
    ResamplingResult per set, in input order.
    """
    want_linear = "linear" in statistics
    want_quadratic = "quadratic" in statistics
    if not (want_linear or want_quadratic):
        raise InputError("no statistics requested")
    n = phenotype.n
    y = phenotype.values
    n_sets = len(rows_list)
    if n_sets != len(weights_list):
        raise InputError("rows and weights lists differ in length")
    for rows in rows_list:
        if rows.shape[1] != n:
            raise InputError("per-set rows do not match phenotype length")

    # observed statistics from the identity ordering
    t_obs = np.empty(n_sets)
    c_obs = np.empty(n_sets)
    for i, (rows, w) in enumerate(zip(rows_list, weights_list)):
        betas = rows @ y / n
        t_obs[i] = w @ betas
        c_obs[i] = w @ betas**2

    pseudo = None
    if want_linear:
        pseudo = np.vstack([w @ rows for rows, w in zip(rows_list, weights_list)])
    wrows = offsets = None
    total_rows = n_sets
    if want_quadratic:
        # weight each gene row up front so squared statistics reduce to a
        # segment sum over the concatenated gene block
        all_rows = np.vstack(rows_list)
        w_all = np.concatenate(weights_list)
        wrows = all_rows
        sizes = np.array([rows.shape[0] for rows in rows_list])
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        total_rows = all_rows.shape[0]
        weight_col = w_all[:, None]

    chunk = _chunk_size(total_rows)
    if isinstance(plan, PermutationPlan):
        method = "permutation"
        exhaustive = plan.mode == "exhaustive"
        y_chunks = _permuted_y_chunks(phenotype, plan, chunk)
    elif isinstance(plan, RotationPlan):
        method = "rotation"
        exhaustive = False
        y_chunks = _rotated_y_chunks(phenotype, plan, chunk)
    else:
        raise InputError(f"unknown plan type {type(plan).__name__}")

    acc = _SetAccumulator(n_sets, t_obs, c_obs, want_linear, want_quadratic)
    for y_block in y_chunks:
        k = y_block.shape[0]
        acc.count += k
        if want_linear:
            acc.add_linear(pseudo @ y_block.T / n)
        if want_quadratic:
            betas = wrows @ y_block.T / n  # (total_rows, k)
            contrib = weight_col * betas**2
            c_pool = np.add.reduceat(contrib, offsets, axis=0)
            acc.add_quadratic(c_pool)
    return _finalize(acc, method, exhaustive)


def permutation_pvalues(
    rows, weights, phenotype: Phenotype, plan: PermutationPlan,
    statistics=("linear", "quadratic"),
) -> ResamplingResult:
    """Permutation p-values for one gene set (see batch_resampling_pvalues)."""
    return batch_resampling_pvalues([rows], [weights], phenotype, plan, statistics)[0]


def rotation_pvalues(
    rows, weights, phenotype: Phenotype, plan: RotationPlan,
    statistics=("linear", "quadratic"),
) -> ResamplingResult:
    """Rotation p-values for one gene set (see batch_resampling_pvalues)."""
    return batch_resampling_pvalues([rows], [weights], phenotype, plan, statistics)[0]


def enumerate_betas(rows, phenotype: Phenotype) -> np.ndarray:
    """Per-gene statistics for every one of the n! permutations: (n!, p).

    This is the oracle primitive: any permutation moment is a column mean
    of products of this array.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    perms = enumerate_permutations(phenotype.n)
    y_all = phenotype.values[perms]  # (n!, n)
    return y_all @ rows.T / phenotype.n


@dataclass(frozen=True)
class EnumeratedMoments:
    """Exact permutation moments obtained by full enumeration."""

    t_mean: float
    t_var: float
    t_fourth: float
    t_min: float
    t_max: float
    c_mean: float
    c_var: float


def enumerate_moments(rows, weights, phenotype: Phenotype) -> EnumeratedMoments:
    """Exact moments of the set statistics over all n! permutations."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64)
    betas = enumerate_betas(rows, phenotype)
    t = betas @ w
    c = betas**2 @ w
    t_mean = float(t.mean())
    c_mean = float(c.mean())
    return EnumeratedMoments(
        t_mean=t_mean,
        t_var=float((t**2).mean()) - t_mean**2,
        t_fourth=float((t**4).mean()),
        t_min=float(t.min()),
        t_max=float(t.max()),
        c_mean=c_mean,
        c_var=float((c**2).mean()) - c_mean**2,
    )


def rotation_cross_moment(rows, phenotype: Phenotype, contrast: np.ndarray) -> np.ndarray:
    """Analytic E(beta beta^T) under rotation for a given contrast matrix.

    Equals mu2 / (n (n-1)) * Xc^T Xc with Xc the contrast-space expression;
    for centered rows this is contrast-invariant and matches the
    permutation cross moments.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    n = phenotype.n
    validate_contrast(contrast, n)
    xc = contrast.T @ rows.T  # (n-1, p)
    return phenotype.mu2 / (n * (n - 1.0)) * (xc.T @ xc)
