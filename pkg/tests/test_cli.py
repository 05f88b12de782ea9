import json
import sys

import pytest

from pidaudit.attribution import AttributionConfig, potential_contributions
from pidaudit.cli import main, read_config
from pidaudit.datasets import GENERATORS, analytic_distribution
from pidaudit.pid import decompose
from pidaudit.report import ReportEnvelope, contributions_text

ECHO = f"exec:{sys.executable} -m pidaudit.echo_model"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def load_report(path):
    return json.loads((path / "report.json").read_text())


def test_audit_canonical1_distributional(tmp_path, capsys):
    code, out, _ = run(capsys, "audit", "--generate", "canonical1", "--mode", "distributional",
                       "--out-dir", tmp_path)
    assert code == 0
    rep = load_report(tmp_path)
    assert rep["schema_version"] == 1
    pf = rep["report"]["distributional"]["per_feature"]
    assert pf["X1"] == pytest.approx(0.25, abs=1e-6) and pf["X2"] == pytest.approx(0.25, abs=1e-6)
    assert "0.2500" in out
    assert (tmp_path / "contributions.txt").read_text() == out


def test_audit_canonical3_interventional(tmp_path, capsys):
    code, out, _ = run(capsys, "audit", "--generate", "canonical3", "--mode", "interventional",
                       "--oracle", "builtin:xor", "--out-dir", tmp_path)
    assert code == 0
    pf = load_report(tmp_path)["report"]["interventional"]["per_feature"]
    assert (pf["X1"], pf["X2"]) == pytest.approx((0.5, -0.5), abs=1e-12)
    lines = [l.split() for l in out.splitlines()[2:4]]
    assert lines == [["X1", "0.5000"], ["X2", "-0.5000"]]


def test_audit_case_study_ranking(tmp_path, capsys):
    code, out, err = run(capsys, "audit", "--generate", "case_study", "--samples", 10000,
                         "--mode", "distributional", "--epsilon", 0.001, "--out-dir", tmp_path)
    assert code == 0
    rep = load_report(tmp_path)
    pf = rep["report"]["distributional"]["per_feature"]
    assert max(pf, key=pf.get) == "X2" and pf["X3"] > 0
    assert rep["report"]["distributional"]["subset_table"]["epsilon"] == 0.001
    assert "note: truncation" in err


def test_text_matches_json_to_displayed_precision(tmp_path, capsys):
    _, out, _ = run(capsys, "audit", "--generate", "case_study", "--mode", "both",
                    "--oracle", "builtin:sum", "--out-dir", tmp_path)
    rep = load_report(tmp_path)["report"]
    shown = {}
    for block in out.split("# ")[1:]:
        mode = block.split()[0]
        for line in block.splitlines()[2:]:
            name, value = line.rsplit(None, 1)
            shown[(mode, name)] = value
    for mode, r in rep.items():
        for f, v in r["per_feature"].items():
            assert shown[(mode, f)] == f"{v:.4f}"
        assert shown[(mode, "total I(Z;Y)")] == f"{r['total_disparity']:.4f}"


def test_plot_data_files(tmp_path, capsys):
    code, _, _ = run(capsys, "audit", "--generate", "case_study", "--plot-data", "--out-dir", tmp_path)
    assert code == 0
    subsets = (tmp_path / "distributional_subsets.csv").read_text().splitlines()
    assert subsets[0] == "subset,size,value_bits,truncated"
    assert len(subsets) == 1 + 8
    assert (tmp_path / "distributional_features.csv").read_text().startswith("feature,contribution_bits")
    for png in ("distributional_subsets.png", "distributional_features.png"):
        assert (tmp_path / png).read_bytes()[:4] == b"\x89PNG"


def test_generated_csv_reaudited(tmp_path, capsys):
    path = tmp_path / "c2.csv"
    assert run(capsys, "generate", "canonical2", "--samples", 4000, "--seed", 1, "-o", path)[0] == 0
    code, _, _ = run(capsys, "audit", "--input", path, "--protected", "Z", "--decision", "Y",
                     "--features", "X1,X2", "--mode", "interventional", "--oracle", "builtin:diff",
                     "--out-dir", tmp_path)
    assert code == 0
    pf = load_report(tmp_path)["report"]["interventional"]["per_feature"]
    # sampled data: Contri is exact only at the population law
    assert pf["X1"] == pytest.approx(0.75, abs=0.02) and pf["X2"] == pytest.approx(0.25, abs=0.02)


def test_generated_pmf_reaudited_exactly(tmp_path, capsys):
    path = tmp_path / "c2.csv"
    run(capsys, "generate", "canonical2", "--analytic", "-o", path)
    code, _, _ = run(capsys, "audit", "--input", path, "--protected", "Z", "--decision", "Y",
                     "--features", "X1,X2", "--mode", "both", "--oracle", "builtin:diff",
                     "--out-dir", tmp_path)
    rep = load_report(tmp_path)["report"]
    for mode in ("distributional", "interventional"):
        pf = rep[mode]["per_feature"]
        assert (pf["X1"], pf["X2"]) == pytest.approx((0.75, 0.25), abs=1e-6)


def test_generate_is_seeded(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        run(capsys, "generate", "case_study", "--samples", 10000, "--seed", 7, "-o", p)
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 10001


def test_generate_analytic_pmf(tmp_path, capsys):
    p = tmp_path / "pe.csv"
    run(capsys, "generate", "pid_example", "--analytic", "-o", p)
    lines = p.read_text().splitlines()
    assert lines[0] == "Z,A,B,probability"
    assert len(lines) == 1 + 16
    assert all(float(l.rsplit(",", 1)[1]) == 1 / 16 for l in lines[1:])


def test_pid_worked_example(capsys):
    code, out, _ = run(capsys, "pid", "--generate", "pid_example", "--json")
    assert code == 0
    r = json.loads(out)["report"]["pid"]
    got = (r["uni_a_given_b"], r["uni_b_given_a"], r["red"], r["syn"])
    assert got == pytest.approx((1, 0, 1, 1), abs=1e-6)


def test_pid_text_has_residuals(tmp_path, capsys):
    p = tmp_path / "and.csv"
    p.write_text("Z,A,B,probability\n0,0,0,0.25\n0,0,1,0.25\n0,1,0,0.25\n1,1,1,0.25\n")
    code, out, _ = run(capsys, "pid", "--input", p, "--z", "Z", "--a", "A", "--b", "B")
    assert code == 0
    values = dict(l.split() for l in out.splitlines())
    assert values["red"] == "0.3113" and values["syn"] == "0.5000"
    assert float(values["residual_total"]) < 1e-6


def test_pid_independent_source(tmp_path, capsys):
    # A is a fair coin independent of (Z, B)
    rows = ["Z,A,B"] + [f"{z},{a},{z}" for z in (0, 1) for a in (0, 1)]
    p = tmp_path / "ind.csv"
    p.write_text("\n".join(rows) + "\n")
    _, out, _ = run(capsys, "pid", "--input", p, "--z", "Z", "--a", "A", "--b", "B")
    values = dict(l.split() for l in out.splitlines())
    assert values["uni_a_given_b"] == "0.0000" and values["red"] == "0.0000"


def test_pid_grouped_b(capsys):
    code, out, _ = run(capsys, "pid", "--generate", "canonical2", "--z", "Z", "--a", "Y",
                       "--b", "X1,X2", "--json")
    r = json.loads(out)["report"]["pid"]
    assert r["red"] == pytest.approx(1.0, abs=1e-6)


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "audit.cfg"
    cfg.write_text("# manifest\nmode = interventional\noracle = builtin:first\nepsilon = 0.5\n"
                   "generate = canonical1\n")
    code, _, _ = run(capsys, "audit", "--config", cfg, "--mode", "distributional", "--out-dir", tmp_path)
    rep = load_report(tmp_path)
    assert code == 0
    assert rep["mode"] == "distributional"
    assert rep["config"]["epsilon"] == 0.5 and rep["config"]["oracle"] == "builtin:first"


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    with pytest.raises(ValueError, match="bad.cfg:1"):
        read_config(cfg)


def test_external_oracle_via_config(tmp_path, capsys):
    cfg = tmp_path / "audit.cfg"
    cfg.write_text(f"mode = interventional\noracle = {ECHO} --rule xor --batch 3\n")
    code, _, _ = run(capsys, "audit", "--generate", "canonical3", "--config", cfg,
                     "--check-determinism", "--out-dir", tmp_path)
    assert code == 0
    pf = load_report(tmp_path)["report"]["interventional"]["per_feature"]
    assert (pf["X1"], pf["X2"]) == (0.5, -0.5)


def test_nondeterministic_model_exits_with_warning(tmp_path, capsys):
    model = tmp_path / "coin.py"
    model.write_text(
        "import json, random, sys\n"
        "for line in sys.stdin:\n"
        "    r = json.loads(line)\n"
        "    print(json.dumps({'id': r['id'], 'decision': random.randint(0, 1)}), flush=True)\n")
    code, _, err = run(capsys, "audit", "--generate", "canonical1", "--mode", "interventional",
                       "--oracle", f"exec:{sys.executable} {model}", "--check-determinism",
                       "--out-dir", tmp_path)
    assert code == 2
    assert "warning:" in err
    assert load_report(tmp_path)["warnings"]


@pytest.mark.parametrize("argv,needle", [
    (["audit", "--generate", "canonical1", "--mode", "interventional"], "--oracle"),
    (["audit", "--input", "missing.csv", "--protected", "Z", "--decision", "Y", "--features", "X"],
     "missing.csv"),
    (["audit"], "exactly one"),
    (["audit", "--bogus"], "unrecognized"),
    (["audit", "--generate", "canonical1", "--epsilon", "-1"], "epsilon"),
])
def test_errors_exit_1_with_json(tmp_path, capsys, argv, needle):
    code, _, err = run(capsys, *argv, "--out-dir", tmp_path)
    assert code == 1
    obj = json.loads(err.strip().splitlines()[-1])
    assert needle in obj["message"]


def test_csv_error_location(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("Z,X,Y\n0,0,0\n1,zz,1\n")
    code, _, err = run(capsys, "audit", "--input", p, "--protected", "Z", "--decision", "Y",
                       "--features", "X", "--bins", "X=2", "--out-dir", tmp_path)
    obj = json.loads(err)
    assert code == 1 and obj["line"] == 3 and obj["column"] == "X"


def test_report_round_trip():
    d = analytic_distribution("case_study")
    r = potential_contributions(d, GENERATORS["case_study"].schema, AttributionConfig(epsilon=0.01))
    env = ReportEnvelope(mode="distributional", config={"epsilon": 0.01}, reports={"distributional": r},
                         warnings=["w"], timings={"solve": 0.1})
    assert ReportEnvelope.loads(env.dumps()) == env
    pid_env = ReportEnvelope(mode="pid", config={}, reports={"pid": decompose(d, "Z", "Y", ["X2"])})
    assert ReportEnvelope.loads(pid_env.dumps()) == pid_env


def test_report_rejects_other_schema_version():
    env = ReportEnvelope(mode="pid", config={}, reports={}).to_dict()
    env["schema_version"] = 2
    with pytest.raises(ValueError):
        ReportEnvelope.from_dict(env)


def test_contributions_sorted_descending():
    d = analytic_distribution("case_study")
    r = potential_contributions(d, GENERATORS["case_study"].schema)
    names = [l.split()[0] for l in contributions_text(r).splitlines()[2:5]]
    assert names == ["X2", "X3", "X1"]
