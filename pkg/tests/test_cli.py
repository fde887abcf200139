import csv

import pytest

from fixshare import cli


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(autouse=True)
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    return tmp_path


def test_gen_data_examples(outdir):
    assert cli.main(["gen-data", "--fig2", "sleeping", "-o", "f.csv"]) == 0
    assert len(rows(outdir / "f.csv")) == 1000
    assert cli.main(["gen-data", "--segments", "1x100@0.0", "--mode", "freezing", "-o", "z.csv"]) == 0
    assert {r["x"] for r in rows(outdir / "z.csv")} == {"0"}
    assert cli.main(["gen-data", "--segments", "2x3@1.0", "--mode", "sleeping", "-o", "s.csv"]) == 0
    assert [r["x"] for r in rows(outdir / "s.csv")] == ["0", "1", "2", "3", "4", "5"]


def test_gen_data_unwritable(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["gen-data", "--fig2", "freezing", "-o", str(blocker / "x.csv")]) == cli.EXIT_INPUT
    assert "cannot write" in capsys.readouterr().err


def test_fs_alpha_zero_matches_bayes(outdir):
    cli.main(["gen-data", "--segments", "3x5@0.3", "-o", "d.csv"])
    data = str(outdir / "d.csv")
    assert cli.main(["run", "--data", data, "--algorithm", "bayes", "-o", "b.csv"]) == 0
    assert cli.main(["run", "--data", data, "--algorithm", "fs", "--alpha", "0", "-o", "f.csv"]) == 0
    b, f = rows(outdir / "b.csv"), rows(outdir / "f.csv")
    cols = ["round_loss", "cum_loss", "active_states"]
    assert [[r[c] for c in cols] for r in b] == [[r[c] for c in cols] for r in f]


def test_sleeping_active_states_match_union(outdir):
    assert cli.main(["run", "--fig2", "sleeping", "--algorithm", "fs_sleeping", "-o", "sl.csv"]) == 0
    assert cli.main(["run", "--fig2", "sleeping", "--algorithm", "bayes", "-o", "b.csv"]) == 0
    sl, b = rows(outdir / "sl.csv"), rows(outdir / "b.csv")
    assert [r["active_states"] for r in sl] == [r["active_states"] for r in b]


def test_single_round_run(outdir, capsys):
    (outdir / "one.csv").write_text("t,x\n1,0.5\n")
    assert cli.main(["run", "--data", str(outdir / "one.csv"), "-o", "r.csv"]) == 0
    (row,) = rows(outdir / "r.csv")
    assert row["cum_loss"] == row["round_loss"] and row["t"] == "1"
    err = capsys.readouterr().err
    assert "total_loss" in err and "wall_time" in err


def test_run_csv_roundtrip(outdir):
    cli.main(["gen-data", "--segments", "2x4@0.3", "--noise", "0.4", "--seed", "2", "-o", "d.csv"])
    data = str(outdir / "d.csv")
    for name in ("a.csv", "b.csv"):
        assert cli.main(["run", "--data", data, "--algorithm", "fs_freezing", "-o", name]) == 0
    assert (outdir / "a.csv").read_text() == (outdir / "b.csv").read_text()
    # the CSV holds 12 significant digits, so the in-memory run agrees closely
    cli.main(["run", "--segments", "2x4@0.3", "--noise", "0.4", "--seed", "2",
              "--algorithm", "fs_freezing", "-o", "c.csv"])
    a, c = rows(outdir / "a.csv"), rows(outdir / "c.csv")
    assert [float(r["cum_loss"]) for r in a] == pytest.approx([float(r["cum_loss"]) for r in c], abs=1e-9)


def test_run_zero_density_flushes_partial(outdir, monkeypatch):
    from fixshare.datagen import GaussianAdvice

    class Dead(GaussianAdvice):
        def log_densities(self, t, experts, x):
            out = super().log_densities(t, experts, x)
            return out if t < 3 else out - float("inf")

    monkeypatch.setattr(cli, "GaussianAdvice", Dead)
    code = cli.main(["run", "--segments", "5@0.1", "--algorithm", "fs_sleeping", "-o", "p.csv"])
    assert code == cli.EXIT_NUMERIC
    assert [r["t"] for r in rows(outdir / "p.csv")] == ["1", "2"]


def test_bad_inputs_exit_2(outdir):
    assert cli.main(["run", "--segments", "5@0.1", "--members", "xx:1"]) == cli.EXIT_INPUT
    assert cli.main(["run", "--segments", "5@0.1", "--prior", "0.2,0.3,0.5"]) == cli.EXIT_INPUT
    assert cli.main(["run", "--data", str(outdir / "missing.csv")]) == cli.EXIT_INPUT
    assert cli.main(["run"]) == cli.EXIT_INPUT
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--alpha", "2"])
    assert info.value.code == 2


def test_reproduce_fig2(outdir):
    assert cli.main(["reproduce-fig2", "--out-dir", "figs"]) == 0
    for name in ("sleeping", "freezing"):
        data = rows(outdir / "figs" / f"fig2_{name}.csv")
        assert len(data) == 1000
        assert list(data[0]) == ["t", "stbe", "ll_freezing", "ll_sleeping"]
        for col in ("stbe", "ll_freezing", "ll_sleeping"):
            vals = [float(r[col]) for r in data]
            assert all(b >= a for a, b in zip(vals, vals[1:]))
    last = {k: float(v) for k, v in rows(outdir / "figs" / "fig2_sleeping.csv")[-1].items()}
    assert last["ll_sleeping"] < min(last["ll_freezing"], last["stbe"])
    last = {k: float(v) for k, v in rows(outdir / "figs" / "fig2_freezing.csv")[-1].items()}
    assert last["ll_freezing"] < min(last["ll_sleeping"], last["stbe"])


def test_check_bounds_exhaustive(outdir):
    assert cli.main(["check-bounds", "--random-data", "8", "--seed", "1", "--scheme", "freezing",
                     "-o", "cb.csv"]) == 0
    report = rows(outdir / "cb.csv")
    assert len(report) == 2 * 3 ** 7
    assert list(report[0]) == ["segmentation", "labels", "reference_loss", "switching_term",
                               "selection_term", "rhs", "algorithm_loss", "slack"]
    assert min(float(r["slack"]) for r in report) >= -1e-9


def test_check_bounds_single_segmentation(outdir):
    args = ["check-bounds", "--random-data", "12", "--segmentation", "1-12", "--labels", "1"]
    assert cli.main(args + ["-o", "one.csv"]) == 0
    (row,) = rows(outdir / "one.csv")
    assert row["segmentation"] == "1-12" and row["labels"] == "1"
    assert cli.main(["check-bounds", "--random-data", "12"]) == cli.EXIT_INPUT


def test_check_bounds_alpha_star_minimizes_switching(outdir):
    seg = "1-3,4-9,10-10"
    alpha_star = 2 / 9
    terms = {}
    for a in (0.05, 0.1, 0.15, alpha_star, 0.3, 0.5):
        cli.main(["check-bounds", "--random-data", "10", "--segmentation", seg, "--labels", "0,1,0",
                  "--alpha", repr(a), "-o", "a.csv"])
        terms[a] = float(rows(outdir / "a.csv")[0]["switching_term"])
    assert min(terms, key=terms.get) == alpha_star


def test_check_bounds_violation_exit_4(outdir, monkeypatch):
    monkeypatch.setattr(cli, "sweep_bounds", _fake_sweep)
    assert cli.main(["check-bounds", "--random-data", "3", "-o", "v.csv"]) == cli.EXIT_BOUND


def _fake_sweep(*args, **kwargs):
    from fixshare.core import Labelling, Segmentation
    from fixshare.reference import BoundReport
    seg = Segmentation.parse("1-3")
    yield seg, Labelling(seg, (0,)), BoundReport(1.0, 0.0, 0.0, 1.0, 2.0, -1.0, 0.0)


@pytest.mark.parametrize("args", [
    ["--oracle", "seg-mixture", "--random-data", "10", "--algorithm", "fs_freezing"],
    ["--oracle", "seg-mixture", "--random-data", "10", "--algorithm", "fs_sleeping", "--alpha", "0.3"],
    ["--oracle", "path-sum", "--random-data", "4", "--algorithm", "bayes", "--members", "gauss:0,gauss:1"],
    ["--oracle", "seg-mixture", "--random-data", "8", "--algorithm", "fs_freezing", "--alpha", "0"],
    ["--oracle", "path-sum", "--random-data", "4", "--algorithm", "fs", "--members", "dm:0.1,bayes:2"],
])
def test_verify_passes(args, capsys):
    assert cli.main(["verify"] + args) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")


def test_verify_guards(capsys):
    assert cli.main(["verify", "--oracle", "seg-mixture", "--random-data", "15",
                     "--algorithm", "fs_freezing"]) == cli.EXIT_INPUT
    assert cli.main(["verify", "--oracle", "path-sum", "--random-data", "30",
                     "--max-paths", "1000"]) == cli.EXIT_INPUT
    assert cli.main(["verify", "--oracle", "seg-mixture", "--random-data", "5",
                     "--algorithm", "bayes"]) == cli.EXIT_INPUT
