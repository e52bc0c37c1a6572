"""Batch command-line front end: test, compare, and bench subcommands.

``test`` runs the moment-based pipeline over a gene-set collection and
writes one result row per set and statistic kind. ``compare`` additionally
runs a resampling oracle (permutation, rotation, or exhaustive) against
the same sets and reports per-set differences plus a rank correlation
footer. ``bench`` times the moment paths against permutation at a grid of
M values.

Exit codes: 0 success, 1 input error, 2 internal numerical failure.
"""

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dataset, gsio, moments, refdist, resampling
from .errors import GsmError, InputError

_STATS = ("linear", "quadratic", "both")
_DISTS = ("normal", "beta", "chisq", "auto")
_ALTERNATIVES = ("left", "right", "two_sided")
_ADJUSTS = ("none", "bh", "bonferroni")
_MODES = ("permutation", "rotation", "exhaustive")


@dataclass(frozen=True)
class RunConfig:
    expression_path: str
    phenotype_path: str
    genesets_path: str
    stat: str = "linear"
    dist: str = "auto"
    weights: str = "equal"  # equal | jg | <path to weight file>
    alternative: str = "two_sided"
    standardize: bool = False
    quantile: bool = False
    adjust: str = "none"
    output_path: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.stat not in _STATS:
            raise InputError(f"unknown statistic {self.stat!r}")
        if self.dist not in _DISTS:
            raise InputError(f"unknown reference distribution {self.dist!r}")
        if self.alternative not in _ALTERNATIVES:
            raise InputError(f"unknown alternative {self.alternative!r}")
        if self.adjust not in _ADJUSTS:
            raise InputError(f"unknown adjustment {self.adjust!r}")
        if self.threads < 1:
            raise InputError("threads must be a positive integer")
        if self.dist == "chisq" and self.stat != "quadratic":
            raise InputError("--dist chisq applies to the quadratic statistic only")
        if self.dist in ("normal", "beta") and self.stat == "quadratic":
            raise InputError(f"--dist {self.dist} applies to the linear statistic only")

    @property
    def kinds(self) -> tuple:
        return ("linear", "quadratic") if self.stat == "both" else (self.stat,)

    def linear_dist(self) -> str:
        return "beta" if self.dist in ("auto", "chisq") else self.dist


@dataclass(frozen=True)
class CompareConfig(RunConfig):
    mode: str = "permutation"
    m: int = 9999
    seed: int = 0

    def __post_init__(self):
        super().__post_init__()
        if self.mode not in _MODES:
            raise InputError(f"unknown comparison mode {self.mode!r}")
        if self.mode != "exhaustive" and self.m < 1:
            raise InputError("need at least one resampling draw")


@dataclass
class _LoadedInputs:
    matrix: dataset.ExpressionMatrix
    phenotype: dataset.Phenotype
    collection: dataset.GeneSetCollection
    explicit_weights: dict | None


def load_inputs(config: RunConfig) -> _LoadedInputs:
    """Parse and preprocess the three input files (plus a weight file)."""
    with open(config.expression_path, encoding="utf-8") as fh:
        gene_ids, raw, subject_ids = gsio.parse_expression_tsv(fh)
    mode = "center_unit_variance" if config.standardize else "center_only"
    matrix = dataset.center_and_scale(raw, gene_ids, subject_ids, mode=mode)
    if config.quantile:
        matrix = dataset.quantile_transform(matrix)
    with open(config.phenotype_path, encoding="utf-8") as fh:
        y_raw = gsio.parse_phenotype(fh, subject_ids)
    try:
        phenotype = dataset.center_phenotype(y_raw)
    except GsmError as exc:
        raise InputError(str(exc)) from exc  # bad data file, not a numerics bug
    with open(config.genesets_path, encoding="utf-8") as fh:
        collection = gsio.parse_gmt(fh)
    explicit = None
    if config.weights not in ("equal", "jg"):
        with open(config.weights, encoding="utf-8") as fh:
            explicit = gsio.parse_weights(fh)
    return _LoadedInputs(matrix, phenotype, collection, explicit)


def _resolve(gene_set, inputs: _LoadedInputs, config: RunConfig):
    if config.weights in ("equal", "jg"):
        return dataset.resolve_gene_set(
            gene_set, inputs.matrix, weighting=config.weights, phenotype=inputs.phenotype
        )
    return dataset.resolve_gene_set(
        gene_set, inputs.matrix, weighting="explicit",
        explicit_weights=inputs.explicit_weights,
    )


def _failure_rows(name, kinds, message) -> list:
    return [
        gsio.ResultRow(
            set_name=name,
            set_size_resolved=0,
            statistic_kind=kind,
            observed=None,
            warnings=(message,),
        )
        for kind in kinds
    ]


def _evaluate_set(gene_set, inputs: _LoadedInputs, config: RunConfig) -> list:
    """Moment-path rows for one gene set; failures become warning rows."""
    try:
        resolved = _resolve(gene_set, inputs, config)
    except (GsmError, ArithmeticError) as exc:
        return _failure_rows(gene_set.name, config.kinds, str(exc))

    base_warnings = []
    if resolved.missing_genes:
        base_warnings.append(
            f"{len(resolved.missing_genes)} member(s) absent from matrix: "
            + ",".join(resolved.missing_genes)
        )
    obs = moments.observed_statistics(resolved, inputs.matrix, inputs.phenotype)
    rows = []
    for kind in config.kinds:
        warnings_out = list(base_warnings)
        observed = obs.t_hat if kind == "linear" else obs.c_hat
        params: dict = {}
        pv = None
        try:
            if kind == "linear":
                pseudo = moments.build_pseudo_gene(resolved, inputs.matrix)
                lm = moments.linear_moments(pseudo, inputs.phenotype)
                if config.linear_dist() == "normal":
                    ref = refdist.fit_normal(lm)
                    params = {"variance": ref.variance}
                    pv = refdist.pvalues_normal(ref, obs.t_hat)
                else:
                    ref = refdist.fit_scaled_beta(lm)
                    params = {
                        "lo": ref.lo, "hi": ref.hi,
                        "alpha": ref.alpha, "beta": ref.beta,
                    }
                    pv = refdist.pvalues_beta(ref, obs.t_hat)
            else:
                qm = moments.quadratic_moments(resolved, inputs.matrix, inputs.phenotype)
                warnings_out.extend(qm.notes)
                if qm.variance is None:
                    raise InputError("quadratic variance unavailable (n < 4)")
                ref = refdist.fit_scaled_chisq(qm)
                params = {"sigma2": ref.sigma2, "nu": ref.nu}
                pv = refdist.pvalues_chisq(ref, obs.c_hat)
        except (GsmError, ArithmeticError) as exc:
            warnings_out.append(str(exc))
        if pv is not None:
            warnings_out.extend(pv.notes)
        rows.append(
            gsio.ResultRow(
                set_name=gene_set.name,
                set_size_resolved=resolved.size,
                statistic_kind=kind,
                observed=observed,
                dist_params=params,
                p_left=pv.p_left if pv else None,
                p_right=pv.p_right if pv else None,
                p_central=pv.p_central if pv else None,
                warnings=tuple(warnings_out),
            )
        )
    return rows


def _primary_p(row: gsio.ResultRow, alternative: str):
    """The p-value multiplicity adjustment applies to.

    Linear rows follow --alternative; quadratic rows always use the
    upper-tail (central) p-value, the statistic being one-sided.
    """
    if row.statistic_kind == "quadratic":
        return row.p_central
    return {"left": row.p_left, "right": row.p_right, "two_sided": row.p_central}[alternative]


def _apply_adjustment(rows, config: RunConfig) -> list:
    if config.adjust == "none":
        return rows
    out = list(rows)
    for kind in config.kinds:
        idx = [
            i for i, r in enumerate(out)
            if r.statistic_kind == kind and _primary_p(r, config.alternative) is not None
        ]
        if not idx:
            continue
        raw = np.array([_primary_p(out[i], config.alternative) for i in idx])
        adjusted = refdist.adjust_pvalues(raw, config.adjust)
        for i, adj in zip(idx, adjusted):
            r = out[i]
            out[i] = gsio.ResultRow(
                set_name=r.set_name,
                set_size_resolved=r.set_size_resolved,
                statistic_kind=r.statistic_kind,
                observed=r.observed,
                dist_params=r.dist_params,
                p_left=r.p_left,
                p_right=r.p_right,
                p_central=r.p_central,
                p_adjusted=float(adj),
                warnings=r.warnings,
            )
    return out


def run_test(inputs: _LoadedInputs, config: RunConfig) -> list:
    """Moment-path rows for every set, in input order (thread count does
    not change the output)."""
    sets = list(inputs.collection)
    if config.threads == 1:
        per_set = [_evaluate_set(s, inputs, config) for s in sets]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            per_set = list(pool.map(lambda s: _evaluate_set(s, inputs, config), sets))
    rows = [row for group in per_set for row in group]
    return _apply_adjustment(rows, config)


# ---------------------------------------------------------------------------
# compare


def _rank(values: np.ndarray) -> np.ndarray:
    """Average ranks with ties shared (1-based)."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a, b) -> float:
    """Spearman rank correlation with average ranks for ties."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size != b.size or a.size < 2:
        raise InputError("rank correlation needs two equal-length vectors, length >= 2")
    ra, rb = _rank(a), _rank(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = float(np.sqrt((ra**2).sum() * (rb**2).sum()))
    if denom == 0.0:
        raise InputError("rank correlation undefined: constant ranks")
    return float((ra * rb).sum() / denom)


def _oracle_plan(config: CompareConfig):
    if config.mode == "exhaustive":
        return resampling.PermutationPlan.exhaustive()
    if config.mode == "permutation":
        return resampling.PermutationPlan.monte_carlo(config.m, config.seed)
    return resampling.RotationPlan(m=config.m, seed=config.seed)


def run_compare(inputs: _LoadedInputs, config: CompareConfig):
    """Per-set moment versus oracle p-values plus Spearman footers.

    Linear rows compare the left-tail p-value, quadratic rows the
    upper-tail p-value; every set sees the same shared stream of
    reorderings, so a fixed seed fixes the whole file.
    """
    moment_rows = run_test(inputs, config)
    by_key = {(r.set_name, r.statistic_kind): r for r in moment_rows}

    resolved_sets = []
    for gene_set in inputs.collection:
        try:
            resolved_sets.append((gene_set.name, _resolve(gene_set, inputs, config)))
        except (GsmError, ArithmeticError):
            continue  # already a warning row in moment_rows
    names = [name for name, _ in resolved_sets]
    rows_list = [inputs.matrix.values[r.row_indices] for _, r in resolved_sets]
    weights_list = [r.weights for _, r in resolved_sets]
    oracle = resampling.batch_resampling_pvalues(
        rows_list, weights_list, inputs.phenotype, _oracle_plan(config),
        statistics=config.kinds,
    )
    oracle_by_name = dict(zip(names, oracle))

    records = []
    for gene_set in inputs.collection:
        for kind in config.kinds:
            row = by_key[(gene_set.name, kind)]
            orc = oracle_by_name.get(gene_set.name)
            p_moment = row.p_left if kind == "linear" else row.p_central
            if orc is None or p_moment is None:
                records.append((gene_set.name, kind, row.observed, None, None, None))
                continue
            p_oracle = orc.p_left if kind == "linear" else orc.p_quadratic
            se = orc.se_left if kind == "linear" else orc.se_quadratic
            records.append((gene_set.name, kind, row.observed, p_moment, p_oracle, se))

    footers = {}
    for kind in config.kinds:
        pairs = [(pm, po) for _, k, _, pm, po, _ in records if k == kind and pm is not None]
        if len(pairs) >= 2:
            pm, po = zip(*pairs)
            footers[kind] = spearman(pm, po)
    return records, footers


def write_comparison(records, footers, stream) -> None:
    stream.write("set\tkind\tobserved\tp_moment\tp_oracle\tse_oracle\tabs_diff\n")
    fmt = gsio._fmt_real
    for name, kind, observed, p_moment, p_oracle, se in records:
        diff = None if (p_moment is None or p_oracle is None) else abs(p_moment - p_oracle)
        stream.write(
            "\t".join(
                (name, kind, fmt(observed), fmt(p_moment), fmt(p_oracle), fmt(se), fmt(diff))
            )
            + "\n"
        )
    for kind, rho in footers.items():
        stream.write(f"#spearman\t{kind}\t{fmt(rho)}\n")


# ---------------------------------------------------------------------------
# bench


def run_bench(inputs: _LoadedInputs, config: RunConfig, m_grid, seed: int = 0):
    """Time the moment paths against permutation at each grid M.

    Timings cover p-value computation only (inputs are already parsed and
    resolved). Returns a report dict with per-method seconds and the
    moment-to-permutation cost ratios.
    """
    resolved_sets = []
    for gene_set in inputs.collection:
        try:
            resolved_sets.append(_resolve(gene_set, inputs, config))
        except (GsmError, ArithmeticError):
            continue
    if not resolved_sets:
        raise InputError("no resolvable gene sets to benchmark")
    rows_list = [inputs.matrix.values[r.row_indices] for r in resolved_sets]
    weights_list = [r.weights for r in resolved_sets]
    sizes = np.array([r.size for r in resolved_sets], dtype=np.float64)
    phenotype = inputs.phenotype

    def time_call(fn):
        t0 = time.perf_counter()
        fn()
        return time.perf_counter() - t0

    def moment_linear():
        for resolved in resolved_sets:
            obs = moments.observed_statistics(resolved, inputs.matrix, phenotype)
            pseudo = moments.build_pseudo_gene(resolved, inputs.matrix)
            lm = moments.linear_moments(pseudo, phenotype)
            refdist.pvalues_beta(refdist.fit_scaled_beta(lm), obs.t_hat)

    def moment_quadratic():
        for resolved in resolved_sets:
            obs = moments.observed_statistics(resolved, inputs.matrix, phenotype)
            qm = moments.quadratic_moments(resolved, inputs.matrix, phenotype)
            refdist.pvalues_chisq(refdist.fit_scaled_chisq(qm), obs.c_hat)

    def permutation(m, stats):
        plan = resampling.PermutationPlan.monte_carlo(m, seed)
        resampling.batch_resampling_pvalues(
            rows_list, weights_list, phenotype, plan, statistics=stats
        )

    report = {
        "n": phenotype.n,
        "sets": len(resolved_sets),
        "mean_size": float(sizes.mean()),
        "mean_square_size": float((sizes**2).mean()),
        "moment_linear_s": time_call(moment_linear),
        "moment_quadratic_s": time_call(moment_quadratic),
        "permutation_linear_s": {},
        "permutation_quadratic_s": {},
    }
    for m in m_grid:
        report["permutation_linear_s"][m] = time_call(lambda: permutation(m, ("linear",)))
        report["permutation_quadratic_s"][m] = time_call(lambda: permutation(m, ("quadratic",)))

    m_max = max(m_grid)
    per_perm_linear = report["permutation_linear_s"][m_max] / m_max
    per_perm_quadratic = report["permutation_quadratic_s"][m_max] / m_max
    # equivalent number of permutations each moment path costs
    report["linear_equiv_permutations"] = report["moment_linear_s"] / per_perm_linear
    report["quadratic_equiv_permutations"] = report["moment_quadratic_s"] / per_perm_quadratic
    return report


def write_bench(report, stream) -> None:
    fmt = gsio._fmt_real
    stream.write("method\tm\tseconds\n")
    stream.write(f"moment_linear\tNA\t{fmt(report['moment_linear_s'])}\n")
    stream.write(f"moment_quadratic\tNA\t{fmt(report['moment_quadratic_s'])}\n")
    for m, s in report["permutation_linear_s"].items():
        stream.write(f"permutation_linear\t{m}\t{fmt(s)}\n")
    for m, s in report["permutation_quadratic_s"].items():
        stream.write(f"permutation_quadratic\t{m}\t{fmt(s)}\n")
    stream.write(f"#n\t{report['n']}\n")
    stream.write(f"#sets\t{report['sets']}\n")
    stream.write(f"#mean_size\t{fmt(report['mean_size'])}\n")
    stream.write(f"#mean_square_size\t{fmt(report['mean_square_size'])}\n")
    stream.write(f"#linear_equiv_permutations\t{fmt(report['linear_equiv_permutations'])}\n")
    stream.write(
        f"#quadratic_equiv_permutations\t{fmt(report['quadratic_equiv_permutations'])}\n"
    )


# ---------------------------------------------------------------------------
# argument parsing and entry point


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--expression", required=True, help="expression TSV (genes x subjects)")
    p.add_argument("--phenotype", required=True, help="two-column phenotype TSV")
    p.add_argument("--gene-sets", required=True, help="GMT gene set file")
    p.add_argument("--stat", choices=_STATS, default="linear")
    p.add_argument("--dist", choices=_DISTS, default="auto")
    p.add_argument("--weights", default="equal", help="equal, jg, or a weight-file path")
    p.add_argument(
        "--alternative", choices=("left", "right", "two-sided"), default="two-sided"
    )
    p.add_argument("--standardize", action="store_true", help="scale genes to unit variance")
    p.add_argument(
        "--quantile-transform", action="store_true", help="map each gene to normal quantiles"
    )
    p.add_argument("--adjust", choices=_ADJUSTS, default="none")
    p.add_argument("--output", default=None, help="output path (default stdout)")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsmoments",
        description="Gene-set association p-values from exact permutation moments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="moment-based p-values for every gene set")
    _add_common(p_test)

    p_cmp = sub.add_parser("compare", help="moment p-values against a resampling oracle")
    _add_common(p_cmp)
    p_cmp.add_argument("--mode", choices=_MODES, default="permutation")
    p_cmp.add_argument("--permutations", type=int, default=9999, metavar="M")
    p_cmp.add_argument("--seed", type=int, default=0)

    p_bench = sub.add_parser("bench", help="time moment paths against permutation")
    _add_common(p_bench)
    p_bench.add_argument(
        "--permutations",
        default="100,1000",
        metavar="M[,M...]",
        help="comma-separated permutation counts to time",
    )
    p_bench.add_argument("--seed", type=int, default=0)
    return parser


def _config_kwargs(args) -> dict:
    return dict(
        expression_path=args.expression,
        phenotype_path=args.phenotype,
        genesets_path=args.gene_sets,
        stat=args.stat,
        dist=args.dist,
        weights=args.weights,
        alternative=args.alternative.replace("-", "_"),
        standardize=args.standardize,
        quantile=args.quantile_transform,
        adjust=args.adjust,
        output_path=args.output,
        threads=args.threads,
    )


def _open_output(path):
    if path is None:
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "test":
            config = RunConfig(**_config_kwargs(args))
            inputs = load_inputs(config)
            rows = run_test(inputs, config)
            stream, close = _open_output(config.output_path)
            try:
                gsio.write_results(rows, stream)
            finally:
                if close:
                    stream.close()
            succeeded = any(r.p_central is not None for r in rows)
            if not succeeded:
                print("no gene set produced a p-value", file=sys.stderr)
                return 2
            return 0
        if args.command == "compare":
            config = CompareConfig(
                **_config_kwargs(args), mode=args.mode, m=args.permutations, seed=args.seed
            )
            inputs = load_inputs(config)
            records, footers = run_compare(inputs, config)
            stream, close = _open_output(config.output_path)
            try:
                write_comparison(records, footers, stream)
            finally:
                if close:
                    stream.close()
            return 0
        # bench
        config = RunConfig(**_config_kwargs(args))
        try:
            m_grid = sorted({int(tok) for tok in args.permutations.split(",") if tok})
        except ValueError:
            raise InputError(
                f"--permutations expects integers, got {args.permutations!r}"
            ) from None
        if not m_grid or min(m_grid) < 1:
            raise InputError("--permutations needs positive integers")
        inputs = load_inputs(config)
        report = run_bench(inputs, config, m_grid, seed=args.seed)
        stream, close = _open_output(config.output_path)
        try:
            write_bench(report, stream)
        finally:
            if close:
                stream.close()
        return 0
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GsmError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
