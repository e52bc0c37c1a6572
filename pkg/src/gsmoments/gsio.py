"""File formats: GMT gene sets, expression/phenotype TSVs, result tables.

All parsers are single-pass, reject malformed input with a line-numbered
diagnostic, and accept LF or CRLF. Reals in result tables are printed with
17 significant digits so a write/parse round trip is bit-identical.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import GeneSet, GeneSetCollection
from .errors import InputError

log = logging.getLogger(__name__)

_RESULT_COLUMNS = (
    "set",
    "size",
    "kind",
    "observed",
    "params",
    "p_left",
    "p_right",
    "p_central",
    "p_adjusted",
    "warnings",
)


@dataclass(frozen=True)
class ResultRow:
    """One gene set's outcome for one statistic kind."""

    set_name: str
    set_size_resolved: int
    statistic_kind: str  # "linear" | "quadratic"
    observed: float | None
    dist_params: dict = field(default_factory=dict)
    p_left: float | None = None
    p_right: float | None = None
    p_central: float | None = None
    p_adjusted: float | None = None
    warnings: tuple = ()


def _lines(stream):
    for lineno, raw in enumerate(stream, start=1):
        yield lineno, raw.rstrip("\r\n")


def parse_gmt(stream) -> GeneSetCollection:
    """Parse tab-delimited gene sets: name, description, then member ids.

    Duplicate members within a line are dropped with a warning; duplicate
    set names are an error.
    """
    sets = []
    seen = {}
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise InputError(
                f"GMT line {lineno}: expected name, description, and at least "
                f"one gene, got {len(fields)} field(s)"
            )
        name, description = fields[0], fields[1]
        genes = [g for g in fields[2:] if g]
        unique = list(dict.fromkeys(genes))
        if len(unique) < len(genes):
            log.warning("GMT line %d: set %r lists duplicate genes; deduplicated", lineno, name)
        if not unique:
            raise InputError(f"GMT line {lineno}: set {name!r} has no gene ids")
        if name in seen:
            raise InputError(
                f"GMT line {lineno}: duplicate set name {name!r} (first seen on "
                f"line {seen[name]})"
            )
        seen[name] = lineno
        sets.append(GeneSet(name=name, description=description, genes=tuple(unique)))
    return GeneSetCollection(sets=tuple(sets))


def parse_expression_tsv(stream):
    """Parse an expression table: header of subject ids, then one row per
    gene (gene id followed by n decimal values).

    The header may carry a leading corner label for the gene-id column.
    Returns (gene_ids, values, subject_ids) with ``values`` p x n. Missing
    or non-numeric cells are an error; there is no imputation.
    """
    it = _lines(stream)
    try:
        _, header = next(it)
    except StopIteration:
        raise InputError("expression file is empty") from None
    header_fields = header.split("\t")

    gene_ids = []
    rows = []
    subject_ids = None
    n = None
    seen = {}
    for lineno, line in it:
        if not line.strip():
            continue
        fields = line.split("\t")
        if n is None:
            n = len(fields) - 1
            if n < 2:
                raise InputError(f"expression line {lineno}: need at least 2 subjects")
            if len(header_fields) == n + 1:
                subject_ids = header_fields[1:]
            elif len(header_fields) == n:
                subject_ids = header_fields
            else:
                raise InputError(
                    f"expression header: {len(header_fields)} field(s) does not "
                    f"match {n} subject column(s)"
                )
            if len(set(subject_ids)) != n:
                raise InputError("expression header: duplicate subject ids")
        if len(fields) != n + 1:
            raise InputError(
                f"expression line {lineno}: expected {n + 1} fields, got {len(fields)}"
            )
        gene = fields[0]
        if gene in seen:
            raise InputError(
                f"expression line {lineno}: duplicate gene id {gene!r} (first seen "
                f"on line {seen[gene]})"
            )
        seen[gene] = lineno
        try:
            row = [float(v) for v in fields[1:]]
        except ValueError:
            bad = next(v for v in fields[1:] if not _is_float(v))
            raise InputError(
                f"expression line {lineno}: non-numeric value {bad!r} for gene "
                f"{gene!r} (missing values are not imputed)"
            ) from None
        if not all(np.isfinite(row)):
            raise InputError(f"expression line {lineno}: non-finite value for gene {gene!r}")
        gene_ids.append(gene)
        rows.append(row)
    if not rows:
        raise InputError("expression file has no gene rows")
    return gene_ids, np.array(rows, dtype=np.float64), list(subject_ids)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def parse_phenotype(stream, subject_ids):
    """Parse a two-column phenotype table and align it to the expression
    subject order by id join.

    Subjects present on only one side are an error (silent positional
    alignment is exactly the bug this prevents).
    """
    values = {}
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise InputError(
                f"phenotype line {lineno}: expected 'subject<TAB>value', got "
                f"{len(fields)} field(s)"
            )
        sid, raw = fields
        if sid in values:
            raise InputError(f"phenotype line {lineno}: duplicate subject id {sid!r}")
        try:
            v = float(raw)
        except ValueError:
            raise InputError(
                f"phenotype line {lineno}: non-numeric value {raw!r} for subject {sid!r}"
            ) from None
        if not np.isfinite(v):
            raise InputError(f"phenotype line {lineno}: non-finite value for subject {sid!r}")
        values[sid] = v
    missing = [s for s in subject_ids if s not in values]
    if missing:
        raise InputError(f"phenotype missing subjects: {', '.join(missing)}")
    extra = [s for s in values if s not in set(subject_ids)]
    if extra:
        raise InputError(f"phenotype has unknown subjects: {', '.join(extra)}")
    return np.array([values[s] for s in subject_ids], dtype=np.float64)


def parse_weights(stream) -> dict:
    """Parse a two-column gene-weight table (gene id, numeric weight)."""
    weights = {}
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise InputError(
                f"weights line {lineno}: expected 'gene<TAB>weight', got "
                f"{len(fields)} field(s)"
            )
        gene, raw = fields
        if gene in weights:
            raise InputError(f"weights line {lineno}: duplicate gene id {gene!r}")
        try:
            weights[gene] = float(raw)
        except ValueError:
            raise InputError(
                f"weights line {lineno}: non-numeric weight {raw!r} for gene {gene!r}"
            ) from None
    if not weights:
        raise InputError("weights file has no entries")
    return weights


def _fmt_real(v) -> str:
    return "NA" if v is None else format(float(v), ".17g")


def _parse_real(s: str):
    return None if s == "NA" else float(s)


def write_results(rows, stream) -> None:
    """Write result rows as TSV with a fixed column order.

    Distribution parameters are flattened as ``name=value;...``; warnings
    are joined with ``|``; absent values print as NA.
    """
    stream.write("\t".join(_RESULT_COLUMNS) + "\n")
    for row in rows:
        params = ";".join(f"{k}={_fmt_real(v)}" for k, v in row.dist_params.items())
        fields = (
            row.set_name,
            str(row.set_size_resolved),
            row.statistic_kind,
            _fmt_real(row.observed),
            params,
            _fmt_real(row.p_left),
            _fmt_real(row.p_right),
            _fmt_real(row.p_central),
            _fmt_real(row.p_adjusted),
            "|".join(row.warnings),
        )
        stream.write("\t".join(fields) + "\n")


def parse_results(stream):
    """Read back a table produced by write_results (round-trip exact)."""
    it = _lines(stream)
    try:
        _, header = next(it)
    except StopIteration:
        raise InputError("results file is empty") from None
    if tuple(header.split("\t")) != _RESULT_COLUMNS:
        raise InputError("results header does not match the expected columns")
    rows = []
    for lineno, line in it:
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(_RESULT_COLUMNS):
            raise InputError(
                f"results line {lineno}: expected {len(_RESULT_COLUMNS)} fields, "
                f"got {len(fields)}"
            )
        params = {}
        if fields[4]:
            for item in fields[4].split(";"):
                k, _, v = item.partition("=")
                params[k] = _parse_real(v)
        rows.append(
            ResultRow(
                set_name=fields[0],
                set_size_resolved=int(fields[1]),
                statistic_kind=fields[2],
                observed=_parse_real(fields[3]),
                dist_params=params,
                p_left=_parse_real(fields[5]),
                p_right=_parse_real(fields[6]),
                p_central=_parse_real(fields[7]),
                p_adjusted=_parse_real(fields[8]),
                warnings=tuple(fields[9].split("|")) if fields[9] else (),
            )
        )
    return rows
