from dataclasses import replace

import pytest

from relsdp import cli, sdp
from relsdp.relexpr import replace_values


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_state(tmp_path, *lines):
    p = tmp_path / "state.txt"
    p.write_text("\n".join(["objects Box: b1", "objects Truck: t1", *lines]) + "\n")
    return str(p)


def test_solve_horizon_zero_prints_reward(capsys):
    code, out, _ = run(capsys, "solve", "boxworld.rmdp", "--horizon", "0")
    assert code == 0
    assert "[max B:Box] { BIn(B,paris) : 10 ; ~BIn(B,paris) : 0 }" in out


def test_solve_goal_horizon_one(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "boxworld.rmdp", "--horizon", "1", "--mode", "goal",
                       "--out", str(tmp_path))
    assert code == 0
    value = (tmp_path / "value.txt").read_text()
    assert "{ BIn(B,paris) : 10 ; (On(B,T) & TIn(T,paris) & ~BIn(B,paris)) : 9 ;" in value
    assert (tmp_path / "policy.txt").read_text() in out


def test_output_is_deterministic(capsys):
    first = run(capsys, "solve", "boxworld.rmdp", "--horizon", "2")
    second = run(capsys, "solve", "boxworld.rmdp", "--horizon", "2")
    assert first == second


def test_solve_infinite_horizon(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "boxworld.rmdp", "--horizon", "inf", "--eps", "1e-4",
                       "--out", str(tmp_path))
    assert code == 0
    rules = [l for l in (tmp_path / "policy.txt").read_text().splitlines()
             if l.startswith(("if ", "else "))]
    assert len(rules) == 6
    assert "# converged: true" in out


def test_check_commands(capsys):
    code, out, _ = run(capsys, "check", "boxworld.rmdp", "--sizes", "Box=2,Truck=1,City=2",
                       "--horizon", "3")
    assert code == 0 and "max deviation: 0 " in out
    code, out, _ = run(capsys, "check", "boxworld_additive.rmdp", "--sizes",
                       "Box=2,Truck=1,City=2", "--horizon", "1", "--bare-exo-backup")
    assert code == 0 and "lower-bound violations: 0" in out


def test_check_requires_sizes(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["check", "boxworld.rmdp", "--horizon", "1"])
    assert err.value.code == cli.EXIT_USAGE


def test_eval(capsys, tmp_path):
    cases = [(("BIn(b1, paris)",), "10 (~10.0000)"), ((), "0 (~0.0000)"),
             (("On(b1, t1)", "TIn(t1, paris)"), "9 (~9.0000)")]
    for atoms, expected in cases:
        path = write_state(tmp_path, *atoms)
        code, out, _ = run(capsys, "eval", "boxworld.rmdp", "--state", path, "--horizon", "1",
                           "--mode", "goal")
        assert code == 0 and out.strip() == expected


def test_eval_rejects_unknown_object(capsys, tmp_path):
    path = write_state(tmp_path, "BIn(b9, paris)")
    code, _, err = run(capsys, "eval", "boxworld.rmdp", "--state", path)
    assert code == cli.EXIT_INPUT and "b9" in err


def test_exit_codes(capsys, tmp_path, monkeypatch):
    assert run(capsys, "solve", str(tmp_path / "missing.rmdp"))[0] == cli.EXIT_INPUT
    bad = tmp_path / "bad.rmdp"
    bad.write_text("sort Box\npred P(Box\n")
    assert run(capsys, "solve", str(bad))[0] == cli.EXIT_INPUT
    assert run(capsys, "solve", "boxworld.rmdp", "--horizon", "3",
               "--max-cases", "2")[0] == cli.EXIT_SOLVER
    assert run(capsys, "solve", "boxworld_additive.rmdp", "--horizon", "2")[0] == cli.EXIT_UNSUPPORTED
    assert run(capsys, "check", "boxworld.rmdp", "--sizes", "Box=3,Truck=3,City=3")[0] == cli.EXIT_ORACLE
    assert run(capsys, "solve", "boxworld.rmdp", "--bare-exo-backup")[0] == cli.EXIT_USAGE

    real = sdp.solve

    def corrupted(*args, **kwargs):
        v = real(*args, **kwargs)
        return replace(v, expression=replace_values(v.expression, lambda x: x + 1))

    monkeypatch.setattr(sdp, "solve", corrupted)
    code, out, _ = run(capsys, "check", "boxworld.rmdp", "--sizes", "Box=1,Truck=1,City=2")
    assert code == cli.EXIT_MISMATCH and "result: FAIL" in out
