"""End-to-end command-line tests over temporary input files."""

import numpy as np
import pytest

from gsmoments import cli, gsio
from gsmoments.errors import InputError


def write_inputs(tmp_path, n=8, p=12, seed=5, phenotype_values=None):
    rng = np.random.default_rng(seed)
    genes = [f"G{i}" for i in range(p)]
    subjects = [f"P{j}" for j in range(n)]
    x = rng.standard_normal((p, n))
    expr = tmp_path / "expr.tsv"
    lines = ["id\t" + "\t".join(subjects)]
    for g, row in zip(genes, x):
        lines.append(g + "\t" + "\t".join(format(v, ".17g") for v in row))
    expr.write_text("\n".join(lines) + "\n")

    y = phenotype_values if phenotype_values is not None else rng.standard_normal(n)
    pheno = tmp_path / "pheno.tsv"
    pheno.write_text("".join(f"{s}\t{v}\n" for s, v in zip(subjects, y)))

    gmt = tmp_path / "sets.gmt"
    gmt.write_text(
        "SET_A\tfirst\tG0\tG1\tG2\tG3\n"
        "SET_B\tsecond\tG4\tG5\tG6\tG7\tG8\tGHOST\n"
        "SET_C\tall missing\tZZ1\tZZ2\n"
    )
    return expr, pheno, gmt


def base_args(expr, pheno, gmt, out):
    return [
        "--expression", str(expr), "--phenotype", str(pheno),
        "--gene-sets", str(gmt), "--output", str(out),
    ]


class TestCmdTest:
    def test_linear_beta_rows(self, tmp_path, capsys):
        expr, pheno, gmt = write_inputs(tmp_path)
        out = tmp_path / "res.tsv"
        code = cli.main(["test", *base_args(expr, pheno, gmt, out), "--stat", "linear"])
        assert code == 0
        rows = gsio.parse_results(out.open())
        assert len(rows) == 3
        populated = [r for r in rows if r.p_left is not None]
        assert {r.set_name for r in populated} == {"SET_A", "SET_B"}
        for r in populated:
            assert 0.0 <= r.p_left <= 1.0
            assert r.p_left + r.p_right == pytest.approx(1.0, abs=1e-12)
            assert set(r.dist_params) == {"lo", "hi", "alpha", "beta"}

    def test_all_missing_set_degrades_to_warning_row(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        out = tmp_path / "res.tsv"
        assert cli.main(["test", *base_args(expr, pheno, gmt, out)]) == 0
        row = next(r for r in gsio.parse_results(out.open()) if r.set_name == "SET_C")
        assert row.p_left is None and row.observed is None
        assert "SET_C" in row.warnings[0]

    def test_partially_missing_set_warns_but_tests(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        out = tmp_path / "res.tsv"
        cli.main(["test", *base_args(expr, pheno, gmt, out)])
        row = next(r for r in gsio.parse_results(out.open()) if r.set_name == "SET_B")
        assert row.p_left is not None
        assert any("GHOST" in w for w in row.warnings)
        assert row.set_size_resolved == 5

    def test_adjust_bh_populates_column(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        out = tmp_path / "res.tsv"
        cli.main(["test", *base_args(expr, pheno, gmt, out), "--adjust", "bh"])
        rows = gsio.parse_results(out.open())
        good = [r for r in rows if r.p_central is not None]
        assert all(r.p_adjusted is not None for r in good)
        assert all(r.p_adjusted >= r.p_central - 1e-15 for r in good)

    def test_both_stats_two_rows_per_set(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        out = tmp_path / "res.tsv"
        cli.main(["test", *base_args(expr, pheno, gmt, out), "--stat", "both"])
        rows = gsio.parse_results(out.open())
        assert len(rows) == 6
        kinds = {(r.set_name, r.statistic_kind) for r in rows}
        assert ("SET_A", "linear") in kinds and ("SET_A", "quadratic") in kinds

    def test_quadratic_needs_four_subjects(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path, n=3)
        out = tmp_path / "res.tsv"
        code = cli.main(["test", *base_args(expr, pheno, gmt, out), "--stat", "quadratic"])
        rows = gsio.parse_results(out.open())
        assert all(r.p_central is None for r in rows)
        assert any("n < 4" in w for r in rows for w in r.warnings)
        assert code == 2  # no set produced a p-value

    def test_jg_weights_and_transforms_run(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        out = tmp_path / "res.tsv"
        code = cli.main(
            ["test", *base_args(expr, pheno, gmt, out), "--weights", "jg",
             "--standardize", "--quantile-transform", "--dist", "normal"]
        )
        assert code == 0
        rows = gsio.parse_results(out.open())
        assert any(r.p_left is not None for r in rows)

    def test_explicit_weights_from_file(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        wfile = tmp_path / "w.tsv"
        wfile.write_text("".join(f"G{i}\t{1.0 + 0.1 * i}\n" for i in range(12)))
        out = tmp_path / "res.tsv"
        code = cli.main(
            ["test", *base_args(expr, pheno, gmt, out), "--weights", str(wfile)]
        )
        assert code == 0

    def test_determinism_across_runs_and_threads(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        outs = []
        for name, threads in (("a", "1"), ("b", "1"), ("c", "3")):
            out = tmp_path / f"res_{name}.tsv"
            cli.main(
                ["test", *base_args(expr, pheno, gmt, out), "--stat", "both",
                 "--adjust", "bh", "--threads", threads]
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_stdout_when_no_output_path(self, tmp_path, capsys):
        expr, pheno, gmt = write_inputs(tmp_path)
        code = cli.main(
            ["test", "--expression", str(expr), "--phenotype", str(pheno),
             "--gene-sets", str(gmt)]
        )
        assert code == 0
        assert capsys.readouterr().out.startswith("set\t")


class TestCmdCompare:
    def test_permutation_compare_shape_and_footer(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        out = tmp_path / "cmp.tsv"
        code = cli.main(
            ["compare", *base_args(expr, pheno, gmt, out), "--stat", "both",
             "--permutations", "999", "--seed", "7"]
        )
        assert code == 0
        text = out.read_text()
        lines = text.splitlines()
        assert lines[0].startswith("set\tkind\t")
        assert sum(1 for ln in lines if ln.startswith("#spearman")) == 2
        data = [ln for ln in lines[1:] if not ln.startswith("#")]
        assert len(data) == 6  # 3 sets x 2 kinds (SET_C rows carry NAs)

    def test_seeded_determinism(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        blobs = []
        for name in ("x", "y"):
            out = tmp_path / f"cmp_{name}.tsv"
            cli.main(
                ["compare", *base_args(expr, pheno, gmt, out),
                 "--permutations", "500", "--seed", "42"]
            )
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_exhaustive_mode_small_n(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path, n=6)
        out = tmp_path / "cmp.tsv"
        code = cli.main(
            ["compare", *base_args(expr, pheno, gmt, out), "--mode", "exhaustive"]
        )
        assert code == 0
        lines = [ln for ln in out.read_text().splitlines()[1:] if not ln.startswith("#")]
        # oracle p-values are exact multiples of 1/720 and diffs are filled
        for ln in lines:
            fields = ln.split("\t")
            if fields[4] != "NA":
                assert (float(fields[4]) * 720) == pytest.approx(
                    round(float(fields[4]) * 720), abs=1e-9
                )
                assert fields[6] != "NA"

    def test_rotation_mode_runs(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path)
        out = tmp_path / "cmp.tsv"
        code = cli.main(
            ["compare", *base_args(expr, pheno, gmt, out), "--mode", "rotation",
             "--permutations", "500", "--seed", "3"]
        )
        assert code == 0


class TestCmdBench:
    def test_report_shape_and_monotone_times(self, tmp_path):
        expr, pheno, gmt = write_inputs(tmp_path, n=20, p=60, seed=11)
        gmt.write_text(
            "\n".join(
                f"B{k}\tbench\t" + "\t".join(f"G{i}" for i in range(k, k + 30))
                for k in range(0, 30, 3)
            )
            + "\n"
        )
        out = tmp_path / "bench.tsv"
        code = cli.main(
            ["bench", *base_args(expr, pheno, gmt, out), "--permutations", "200,5000"]
        )
        assert code == 0
        text = out.read_text()
        times = {}
        for ln in text.splitlines()[1:]:
            if ln.startswith("#"):
                continue
            method, m, seconds = ln.split("\t")
            times[(method, m)] = float(seconds)
        assert times[("permutation_linear", "5000")] >= times[("permutation_linear", "200")]
        assert times[("permutation_quadratic", "5000")] >= times[("permutation_quadratic", "200")]
        assert "#mean_size" in text and "#linear_equiv_permutations" in text


class TestExitCodes:
    def test_missing_file_is_input_error(self, tmp_path, capsys):
        code = cli.main(
            ["test", "--expression", str(tmp_path / "nope.tsv"),
             "--phenotype", str(tmp_path / "nope2.tsv"),
             "--gene-sets", str(tmp_path / "nope3.gmt")]
        )
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_constant_phenotype_is_input_error(self, tmp_path, capsys):
        expr, pheno, gmt = write_inputs(tmp_path, phenotype_values=np.ones(8))
        code = cli.main(["test", *base_args(expr, pheno, gmt, tmp_path / "o.tsv")])
        assert code == 1
        assert "constant" in capsys.readouterr().err

    def test_invalid_flag_combination(self, tmp_path, capsys):
        expr, pheno, gmt = write_inputs(tmp_path)
        code = cli.main(
            ["test", *base_args(expr, pheno, gmt, tmp_path / "o.tsv"),
             "--stat", "linear", "--dist", "chisq"]
        )
        assert code == 1

    def test_config_validation_direct(self):
        with pytest.raises(InputError):
            cli.RunConfig("e", "p", "g", stat="quadratic", dist="beta")
        with pytest.raises(InputError):
            cli.RunConfig("e", "p", "g", threads=0)
