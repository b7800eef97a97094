import json
from fractions import Fraction

import pandas as pd
import pytest

from conftest import Q
from stablebo.cli import main
from stablebo.guard import GuardError
from stablebo.harness import (
    CSV_COLUMNS,
    SCATTER_COLUMNS,
    Indicators,
    SpecError,
    load_instances,
    load_spec,
    matrix_summary,
    read_table,
    run_bo_only,
    run_matrix,
    run_solve,
    scatter_export,
    spec_from_dict,
)
from stablebo.instances import hat, pyramid
from stablebo.model import dump_model, save_model


def write_instance(directory, name, builder=hat, **extra):
    model, domain = builder()
    save_model(model, str(directory / f"{name}.model.json"))
    spec = {
        "model": f"{name}.model.json",
        "domain": domain.to_dict(),
        "guard": {"kind": "abs", "radius": "1/10"},
        "epsilon": "1/10",
        **extra,
    }
    path = directory / f"{name}.json"
    path.write_text(json.dumps(spec))
    return str(path)


@pytest.fixture
def hat_spec_path(tmp_path):
    return write_instance(tmp_path, "hat")


def test_load_spec(hat_spec_path):
    spec = load_spec(hat_spec_path)
    assert spec.model.relu_count == 2
    assert spec.guard.radius == Q("0.1")
    assert spec.solver.epsilon == Q("0.1")
    assert spec.solver.use_bo_candidates and spec.solver.use_bo_counterexamples
    spec = load_spec(hat_spec_path, {"seed": 9, "use_bo_candidates": False, "epsilon": "1/4"})
    assert spec.solver.seed == 9
    assert not spec.solver.use_bo_candidates
    assert spec.solver.epsilon == Q("0.25")


def test_spec_numbers_from_json(tmp_path):
    path = write_instance(tmp_path, "hat", budget_s=2.5, bo={"length_scale": 0.5, "seed": 3}, certifier={"timeout_s": 1.5})
    spec = load_spec(path)
    assert spec.solver.budget_s == 2.5
    assert spec.solver.bo.length_scale == 0.5
    assert spec.solver.seed == 3
    assert spec.solver.certifier.timeout_s == 1.5


def test_inline_model():
    model, domain = hat()
    spec = spec_from_dict({"model": dump_model(model), "domain": domain.to_dict(), "guard": {"kind": "abs", "radius": "0.1"}})
    assert spec.model == model
    assert spec.model_path is None


@pytest.mark.parametrize(
    "patch",
    [
        {"epsilonn": "0.1"},
        {"guard": None},
        {"domain": {"lower": ["-1", "-1"], "upper": ["1", "1"]}},
        {"flags": {"cands": True}},
        {"budget_s": "soon"},
    ],
)
def test_spec_errors(tmp_path, patch):
    path = write_instance(tmp_path, "hat")
    data = json.loads(open(path).read())
    for key, value in patch.items():
        if value is None:
            data.pop(key)
        else:
            data[key] = value
    with pytest.raises(ValueError):
        spec_from_dict(data, str(tmp_path))


def test_spec_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"model": ')
    with pytest.raises(SpecError):
        load_spec(str(path))


def test_rel_guard_on_signed_domain(tmp_path):
    path = write_instance(tmp_path, "hat")
    data = json.loads(open(path).read())
    data["guard"] = {"kind": "rel", "ratio": "0.1"}
    with pytest.raises(GuardError):
        spec_from_dict(data, str(tmp_path))


def test_run_solve_with_bo(tmp_path, hat_spec_path):
    out, csv = tmp_path / "r.json", tmp_path / "r.csv"
    result, indicators = run_solve(load_spec(hat_spec_path), str(out), str(csv), with_reference=False)
    record = json.loads(out.read_text())
    assert record["verified"] is True
    assert Fraction(record["T"]) == result.T
    assert result.T <= Q("0.9") < result.T + Q("0.1")
    assert indicators.N_sa >= 1
    assert indicators.n_cai > 0
    table = read_table(str(csv))
    assert tuple(table.columns) == CSV_COLUMNS
    assert table.loc[0, "run"] == "0:1:1"


def test_run_solve_without_bo(tmp_path, hat_spec_path):
    spec = load_spec(hat_spec_path, {"use_bo_candidates": False, "use_bo_counterexamples": False})
    _, indicators = run_solve(spec, str(tmp_path / "r.json"), with_reference=False)
    assert indicators.n_cai == indicators.n_cci == 0
    assert indicators.n_cap == indicators.n_ce == 0
    assert indicators.N_cap >= 1


def test_no_timings_output_is_reproducible(tmp_path, hat_spec_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run_solve(load_spec(hat_spec_path), str(a), timings=False)
    run_solve(load_spec(hat_spec_path), str(b), timings=False)
    assert a.read_bytes() == b.read_bytes()
    record = json.loads(a.read_text())
    assert record["indicators"]["time"] == "0.000"
    assert record["bo_best"] is not None


def test_indicator_row_round_trip(tmp_path, hat_spec_path):
    csv = tmp_path / "r.csv"
    _, indicators = run_solve(load_spec(hat_spec_path), csv_path=str(csv), timings=False, with_reference=False)
    row = read_table(str(csv)).iloc[0]
    assert Indicators.from_row(row) == indicators


def test_timeout_row_markers():
    ind = Indicators(T=Fraction(1, 2), status="timeout", time=5.2)
    row = ind.to_row("1:0:1", budget_s=5.0)
    assert row["T"] == "≥1/2"
    assert row["time"] == ">5"
    back = Indicators.from_row(row)
    assert back.status == "timeout" and back.T == Fraction(1, 2)


def test_matrix_rows(tmp_path):
    write_instance(tmp_path, "hat")
    out = tmp_path / "matrix.csv"
    table = run_matrix(load_instances(str(tmp_path)), str(out), budget_s=120, workers=2, timings=False)
    assert list(table["run"]) == ["1:0:0", "1:0:1", "1:1:0", "1:1:1"]
    assert tuple(read_table(str(out)).columns) == CSV_COLUMNS
    bounds = {Fraction(t) for t in table["T"]}
    assert max(bounds) - min(bounds) < Q("0.1")


def test_matrix_error_rows(tmp_path):
    write_instance(tmp_path, "pyr", builder=pyramid, certifier={"relu_cap": 1})
    table = run_matrix(load_instances(str(tmp_path)), budget_s=60, workers=1)
    assert list(table["T"]) == ["error"] * 4
    assert matrix_summary(table).empty


def test_matrix_summary():
    rows = []
    for c, d, T in ((0, 0, "1/4"), (0, 1, "1/4"), (1, 0, "1/4"), (1, 1, "1/2")):
        ind = Indicators(T=Fraction(T), n_cci=10 * d, n_ce=5 * d, t_ce=1.0 * d, N_ce=2, T_ce=0.5)
        rows.append(ind.to_row(f"1:{c}:{d}"))
    summary = matrix_summary(pd.DataFrame(rows, columns=list(CSV_COLUMNS)))
    assert len(summary) == 4
    last = summary[(summary["c"] == "1") & (summary["d"] == "1")].iloc[0]
    assert last["tries_per_ce"] == pytest.approx(2.0)
    assert last["bo_s_per_ce"] == pytest.approx(0.2)
    assert last["smt_s_per_ce"] == pytest.approx(0.25)
    assert last["best_bound"] == 1
    assert summary["best_bound"].sum() == 1


def test_scatter_empty_has_header(tmp_path):
    out = tmp_path / "s.csv"
    df = scatter_export({"refutations": []}, str(out))
    assert df.empty
    assert out.read_text().strip() == ",".join(SCATTER_COLUMNS)


def test_scatter_gaps_positive(tmp_path, hat_spec_path):
    out = tmp_path / "r.json"
    run_solve(load_spec(hat_spec_path), str(out), with_reference=False)
    df = scatter_export(json.loads(out.read_text()))
    assert (df["gap"] > 0).all()
    assert (df["chebyshev"] <= 0.1 + 1e-9).all()


def test_bo_only_finds_unstable_candidates(hat_spec_path):
    gaps = []
    for seed in range(5):
        record = run_bo_only(load_spec(hat_spec_path, {"seed": seed}), timings=False)
        assert record["certified"] is False
        gaps.extend(scatter_export(record)["gap"])
    assert max(gaps) > 0.05


def test_cli_gen_and_solve(tmp_path, capsys):
    model_path, spec_path, out = tmp_path / "m.json", tmp_path / "s.json", tmp_path / "r.json"
    assert main(["gen", "--kind", "hat", "--out", str(model_path), "--spec-out", str(spec_path)]) == 0
    code = main(["-q", "solve", "--spec", str(spec_path), "--eps", "1/4", "--no-reference", "--out", str(out)])
    assert code == 0
    assert json.loads(out.read_text())["verified"] is True


def test_cli_bad_spec_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"model": "m.json", "colour": 1}')
    code = main(["-q", "solve", "--spec", str(path), "--out", str(tmp_path / "r.json")])
    assert code == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "SpecError" and record["exit_code"] == 2


def test_cli_timeout_exit_code(tmp_path, hat_spec_path, capsys):
    out = tmp_path / "r.json"
    code = main(["-q", "solve", "--spec", hat_spec_path, "--budget-s", "0", "--no-reference", "--out", str(out)])
    assert code == 3
    assert json.loads(out.read_text())["complete"] is False


def test_cli_oracle(hat_spec_path, capsys):
    assert main(["-q", "oracle", "--spec", hat_spec_path, "--pitch", "0.001"]) == 0
    value = json.loads(capsys.readouterr().out.strip().splitlines()[-1])["value"]
    assert value == pytest.approx(0.9, abs=2e-3)


def test_cli_solve_timeout_writes_partial(tmp_path, capsys):
    spec_path = write_instance(tmp_path, "pyr", builder=pyramid)
    out = tmp_path / "r.json"
    argv = ["-q", "solve", "--spec", spec_path, "--bo-candidates", "off", "--bo-counterexamples", "off"]
    argv += ["--solve-timeout-s", "0", "--no-reference", "--out", str(out)]
    assert main(argv) == 3
    record = json.loads(out.read_text())
    assert record["complete"] is False
    assert Fraction(record["T"]) <= Q("0.9")
    assert record["indicators"]["T"].startswith("≥")
    assert record["history"] == []


def test_matrix_timeout_cells_keep_status(tmp_path):
    write_instance(tmp_path, "a_hat")
    write_instance(tmp_path, "b_pyr", builder=pyramid, certifier={"timeout_s": 0})
    out = tmp_path / "matrix.csv"
    table = run_matrix(load_instances(str(tmp_path)), str(out), budget_s=120, workers=2, timings=False)
    hat_rows = table[table["run"].str.startswith("1:")]
    pyr_rows = table[table["run"].str.startswith("2:")]
    assert not hat_rows["T"].str.startswith("≥").any()
    assert pyr_rows["T"].str.startswith("≥").all()
    assert (pyr_rows["time"] == ">120").all()
    assert Indicators.from_row(read_table(str(out)).iloc[4]).status == "timeout"


def test_matrix_csv_is_reproducible(tmp_path):
    write_instance(tmp_path, "hat", seed=4)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    instances = load_instances(str(tmp_path))
    run_matrix(instances, str(a), budget_s=120, workers=2, timings=False)
    run_matrix(instances, str(b), budget_s=120, workers=1, timings=False)
    assert a.read_bytes() == b.read_bytes()


def test_cli_internal_error_exit_code(tmp_path, hat_spec_path, capsys, monkeypatch):
    def broken(*args, **kwargs):
        raise ArithmeticError("증인이 검증에 실패함")

    monkeypatch.setattr("stablebo.harness.optimize", broken)
    code = main(["-q", "solve", "--spec", hat_spec_path, "--no-reference", "--out", str(tmp_path / "r.json")])
    assert code == 5
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ArithmeticError" and record["exit_code"] == 5
