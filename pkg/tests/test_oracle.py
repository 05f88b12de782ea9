import sys

import pytest

from pidaudit.oracle import (ExternalProcessOracle, LinearOracle, LookupTableOracle, OracleError,
                             builtin_oracle, normalize_decision, parse_oracle)

ECHO = [sys.executable, "-m", "pidaudit.echo_model"]


def script(tmp_path, body):
    path = tmp_path / "model.py"
    path.write_text("import json, sys\n" + body)
    return [sys.executable, str(path)]


def test_table_identity():
    o = LookupTableOracle(("X",), {(0,): 0, (1,): 1})
    assert o.evaluate_batch([(0,), (1,), (0,)]) == [0, 1, 0]
    assert o.backend == "lookup_table"


def test_table_accepts_dict_rows():
    o = LookupTableOracle(("A", "B"), {(0, 1): "yes"}, default="no")
    assert o.evaluate_batch([{"B": 1, "A": 0}, {"A": 1, "B": 1}]) == ["yes", "no"]


def test_table_must_cover_alphabet_without_default():
    with pytest.raises(ValueError):
        LookupTableOracle(("X",), {(0,): 0}, alphabets={"X": (0, 1)})
    LookupTableOracle(("X",), {(0,): 0}, default=1, alphabets={"X": (0, 1)})


def test_table_miss_is_an_error():
    o = LookupTableOracle(("X",), {(0,): 0})
    with pytest.raises(OracleError, match="row 1"):
        o.evaluate_batch([(0,), (2,)])


def test_missing_feature_in_row():
    o = builtin_oracle("sum", ("A", "B"))
    with pytest.raises(OracleError, match="'B'"):
        o.evaluate_batch([{"A": 1}])


def test_linear_difference_with_mean_imputation():
    o = builtin_oracle("diff", ("X1", "X2"))
    assert o.evaluate_batch([(2, 0.5)]) == [1.5]
    assert o.backend == "linear_expression"


def test_linear_snaps_to_decision_alphabet():
    o = LinearOracle(("X",), [0.4], decision_alphabet=[0, 1])
    assert o.evaluate_batch([(0,), (1,), (2,)]) == [0, 0, 1]


def test_linear_rejects_nonfinite_coefficients():
    with pytest.raises(ValueError):
        LinearOracle(("X",), [float("inf")])


def test_xor_defined_on_reals():
    o = builtin_oracle("xor", ("X1", "X2"))
    assert o.evaluate_batch([(0, 1), (1, 1), (0.5, 1)]) == [1, 0, 1.5]


def test_normalize_decision():
    assert normalize_decision(1.0) == 1 and isinstance(normalize_decision(1.0), int)
    assert normalize_decision(0.1 + 0.2) == 0.3
    assert normalize_decision(True) == 1
    assert normalize_decision("a") == "a"
    with pytest.raises(OracleError):
        normalize_decision([1])


def test_parse_oracle_variants(tmp_path):
    assert isinstance(parse_oracle("builtin:first", ("X",)), LinearOracle)
    table = tmp_path / "t.csv"
    table.write_text("X,decision\n0,a\n1,b\n")
    assert parse_oracle(f"table:{table}", ("X",)).evaluate_batch([(1,)]) == ["b"]
    with pytest.raises(ValueError):
        parse_oracle("python:foo", ("X",))
    with pytest.raises(ValueError):
        parse_oracle("builtin:nope", ("X",))


def test_echo_round_trip_preserves_order():
    rows = [(i, i % 7) for i in range(1000)]
    with ExternalProcessOracle(ECHO + ["--rule", "echo", "--batch", "16"], ("X1", "X2")) as o:
        assert o.backend == "external_process"
        assert o.evaluate_batch(rows) == [r[0] for r in rows]
        # the process is reused across batches
        assert o.evaluate_batch(rows[:3]) == [0, 1, 2]


def test_external_matches_builtin():
    rows = [(a, b) for a in (0, 1, 0.5, 2) for b in (0, 1, 0.5)]
    for rule in ("first", "diff", "sum", "xor"):
        with ExternalProcessOracle(ECHO + ["--rule", rule, "--batch", "5"], ("X1", "X2")) as o:
            assert o.evaluate_batch(rows) == builtin_oracle(rule, ("X1", "X2")).evaluate_batch(rows)


def test_external_crash_reports_row_range(tmp_path):
    cmd = script(tmp_path, "sys.stdin.readline()\nsys.stderr.write('boom')\nsys.exit(3)\n")
    with ExternalProcessOracle(cmd, ("X",)) as o:
        with pytest.raises(OracleError, match=r"code 3 on rows 0-4.*boom"):
            o.evaluate_batch([(i,) for i in range(5)])


def test_external_timeout(tmp_path):
    cmd = script(tmp_path, "import time\nsys.stdin.readline()\ntime.sleep(30)\n")
    with ExternalProcessOracle(cmd, ("X",), timeout=0.5) as o:
        with pytest.raises(OracleError, match="timed out"):
            o.evaluate_batch([(1,)])


def test_external_malformed_line(tmp_path):
    cmd = script(tmp_path, "sys.stdin.readline()\nprint('not json', flush=True)\nsys.stdin.read()\n")
    with ExternalProcessOracle(cmd, ("X",)) as o:
        with pytest.raises(OracleError, match="'not json'"):
            o.evaluate_batch([(1,)])


def test_external_unexpected_id(tmp_path):
    body = ("sys.stdin.readline()\n"
            "print(json.dumps({'id': 99, 'decision': 0}), flush=True)\nsys.stdin.read()\n")
    with ExternalProcessOracle(script(tmp_path, body), ("X",)) as o:
        with pytest.raises(OracleError, match="99"):
            o.evaluate_batch([(1,)])


def test_external_missing_executable():
    with pytest.raises(OracleError, match="cannot start"):
        ExternalProcessOracle(["/nonexistent/model"], ("X",)).evaluate_batch([(1,)])
