"""Expression matrix, phenotype, and gene-set data model with preprocessing.

All types are immutable after construction (frozen dataclasses over
read-only arrays), so they can be shared freely across worker threads.
Matrix transforms never look at the phenotype; the only place expression
and phenotype meet before the test statistics is the JG-style weight
computation, which produces per-gene weights, not transformed data.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateError, InputError
from .specfun import norm_quantile

_CENTER_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Preprocessing:
    """Record of transforms applied to an expression matrix."""

    centered: bool = False
    scaling: str = "none"  # "none" | "unit_variance"
    quantile: bool = False


@dataclass(frozen=True, eq=False)
class ExpressionMatrix:
    """Centered genes-by-subjects matrix with identifiers.

    ``constant_genes`` names rows that had zero variance on input; they are
    kept as all-zero rows so gene sets do not silently shrink.
    """

    gene_ids: tuple
    values: np.ndarray  # (p_total, n)
    subject_ids: tuple
    preprocessing: Preprocessing
    constant_genes: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        p, n = self.values.shape
        if len(self.gene_ids) != p:
            raise InputError(f"{len(self.gene_ids)} gene ids for {p} matrix rows")
        if len(self.subject_ids) != n:
            raise InputError(f"{len(self.subject_ids)} subject ids for {n} columns")
        if len(set(self.gene_ids)) != p:
            raise InputError("duplicate gene ids in expression matrix")
        if n < 2:
            raise InputError(f"need at least 2 subjects, got {n}")
        if self.preprocessing.centered and p > 0:
            scale = np.abs(self.values).max(axis=1, initial=0.0)
            bad = np.abs(self.values.sum(axis=1)) > _CENTER_TOL * n * np.maximum(scale, 1e-30)
            if bad.any():
                g = self.gene_ids[int(np.flatnonzero(bad)[0])]
                raise InputError(f"row for gene {g!r} is not centered")

    @property
    def n_subjects(self) -> int:
        return self.values.shape[1]

    @property
    def n_genes(self) -> int:
        return self.values.shape[0]

    def row_index(self) -> dict:
        return {g: i for i, g in enumerate(self.gene_ids)}


@dataclass(frozen=True, eq=False)
class Phenotype:
    """Centered outcome vector with its second and fourth moments."""

    values: np.ndarray
    mu2: float
    mu4: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        y = self.values
        if y.ndim != 1 or y.size < 2:
            raise InputError("phenotype must be a vector of length >= 2")
        scale = max(float(np.abs(y).max()), 1e-30)
        if abs(float(y.sum())) > _CENTER_TOL * y.size * scale:
            raise InputError("phenotype is not centered")
        if self.mu4 < self.mu2**2 * (1.0 - 1e-12):
            raise InputError("phenotype moments violate mu4 >= mu2^2")

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class GeneSet:
    """One named gene set as parsed (description and member ids)."""

    name: str
    description: str
    genes: tuple

    def __post_init__(self):
        if not self.name:
            raise InputError("gene set with empty name")
        if not self.genes:
            raise InputError(f"gene set {self.name!r} has no members")


@dataclass(frozen=True)
class GeneSetCollection:
    sets: tuple

    def __post_init__(self):
        names = [s.name for s in self.sets]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise InputError(f"duplicate gene set names: {', '.join(dup)}")

    def __len__(self) -> int:
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)


@dataclass(frozen=True, eq=False)
class ResolvedGeneSet:
    """A gene set mapped to matrix rows, with aligned per-gene weights."""

    name: str
    row_indices: np.ndarray
    weights: np.ndarray
    missing_genes: tuple = ()

    def __post_init__(self):
        idx = np.ascontiguousarray(self.row_indices, dtype=np.intp)
        idx.setflags(write=False)
        object.__setattr__(self, "row_indices", idx)
        object.__setattr__(self, "weights", _frozen(self.weights))
        if idx.size == 0:
            raise InputError(f"gene set {self.name!r} resolved to no matrix rows")
        if np.unique(idx).size != idx.size:
            raise InputError(f"gene set {self.name!r} has repeated row indices")
        if self.weights.shape != idx.shape:
            raise InputError(f"gene set {self.name!r}: weights not aligned with rows")

    @property
    def size(self) -> int:
        return self.row_indices.size


def center_and_scale(values, gene_ids, subject_ids, mode: str = "center_only") -> ExpressionMatrix:
    """Center every gene row; optionally rescale to unit second moment.

    Under ``center_unit_variance`` each non-constant row ends with
    (1/n) * sum(x^2) == 1 (divisor n throughout, matching the phenotype
    moments). Constant rows become all-zero and are flagged.
    """
    if mode not in ("center_only", "center_unit_variance"):
        raise InputError(f"unknown scaling mode {mode!r}")
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("expression values must be a 2-D matrix")
    p, n = x.shape
    if n < 2:
        raise InputError(f"need at least 2 subjects, got {n}")
    if not np.isfinite(x).all():
        gi, si = np.argwhere(~np.isfinite(x))[0]
        raise InputError(
            f"non-finite expression value for gene {gene_ids[gi]!r}, "
            f"subject {subject_ids[si]!r}"
        )
    centered = x - x.mean(axis=1, keepdims=True)
    msq = (centered**2).mean(axis=1)
    const = msq <= (np.abs(x).max(axis=1, initial=0.0) * 1e-12) ** 2
    centered[const] = 0.0
    scaling = "none"
    if mode == "center_unit_variance":
        nonconst = ~const
        centered[nonconst] /= np.sqrt(msq[nonconst])[:, None]
        scaling = "unit_variance"
    flagged = frozenset(gene_ids[i] for i in np.flatnonzero(const))
    return ExpressionMatrix(
        gene_ids=tuple(gene_ids),
        values=centered,
        subject_ids=tuple(subject_ids),
        preprocessing=Preprocessing(centered=True, scaling=scaling),
        constant_genes=flagged,
    )


def quantile_transform(matrix: ExpressionMatrix) -> ExpressionMatrix:
    """Replace each row by normal quantiles assigned by within-row rank.

    The j'th smallest value in a row becomes the (j - 1/2)/n standard
    normal quantile; ties keep their original order (stable sort). Rows are
    re-centered afterwards, a no-op up to rounding because the quantile
    grid is symmetric.
    """
    p, n = matrix.values.shape
    grid = np.array([norm_quantile((j - 0.5) / n) for j in range(1, n + 1)])
    out = np.empty_like(matrix.values)
    order = np.argsort(matrix.values, axis=1, kind="stable")
    rows = np.arange(p)[:, None]
    out[rows, order] = grid[None, :]
    out -= out.mean(axis=1, keepdims=True)
    return replace(
        matrix,
        values=out,
        preprocessing=replace(matrix.preprocessing, centered=True, quantile=True),
    )


def center_phenotype(values) -> Phenotype:
    """Center the outcome vector and record its even moments."""
    y = np.asarray(values, dtype=np.float64)
    if y.ndim != 1 or y.size < 2:
        raise InputError("phenotype must be a vector of length >= 2")
    if not np.isfinite(y).all():
        raise InputError("phenotype contains non-finite values")
    centered = y - y.mean()
    if np.allclose(centered, 0.0, atol=1e-12 * max(1.0, float(np.abs(y).max()))):
        raise DegenerateError("constant phenotype: every statistic is degenerate")
    mu2 = float((centered**2).mean())
    mu4 = float((centered**4).mean())
    return Phenotype(values=centered, mu2=mu2, mu4=mu4)


def resolve_gene_set(
    gene_set: GeneSet,
    matrix: ExpressionMatrix,
    weighting: str = "equal",
    phenotype: Phenotype | None = None,
    explicit_weights=None,
) -> ResolvedGeneSet:
    """Map a gene set onto matrix rows and attach per-gene weights.

    Weight modes:
      equal      all ones.
      jg         sqrt(n-2) / (sd(X_g) * sd(Y)), standard deviations with
                 divisor n; weights the genes like an averaged-t score.
      explicit   caller-supplied mapping {gene_id: weight}.

    Members absent from the matrix are recorded, not fatal. Row indices
    come out in matrix row order.
    """
    index = matrix.row_index()
    members = list(dict.fromkeys(gene_set.genes))  # dedup, keep first occurrence
    found = sorted(index[g] for g in members if g in index)
    missing = tuple(g for g in members if g not in index)
    if not found:
        raise InputError(f"gene set {gene_set.name!r} shares no genes with the matrix")
    idx = np.array(found, dtype=np.intp)

    if weighting == "equal":
        w = np.ones(idx.size)
    elif weighting == "jg":
        if phenotype is None:
            raise InputError("jg weighting requires a phenotype")
        n = matrix.n_subjects
        if n < 3:
            raise InputError(f"jg weighting needs n >= 3, got n={n}")
        sd_x = np.sqrt((matrix.values[idx] ** 2).mean(axis=1))
        if (sd_x == 0.0).any():
            g = matrix.gene_ids[int(idx[int(np.flatnonzero(sd_x == 0.0)[0])])]
            raise InputError(f"jg weighting undefined for constant gene {g!r}")
        sd_y = np.sqrt(phenotype.mu2)
        w = np.sqrt(n - 2.0) / (sd_x * sd_y)
    elif weighting == "explicit":
        if explicit_weights is None:
            raise InputError("explicit weighting requires a gene->weight mapping")
        try:
            w = np.array([float(explicit_weights[matrix.gene_ids[i]]) for i in idx])
        except KeyError as exc:
            raise InputError(f"no explicit weight for gene {exc.args[0]!r}") from None
    else:
        raise InputError(f"unknown weighting mode {weighting!r}")

    return ResolvedGeneSet(
        name=gene_set.name, row_indices=idx, weights=w, missing_genes=missing
    )
