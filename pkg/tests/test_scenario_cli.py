import json
import math

import numpy as np
import pytest

from mergerfees.cli import compile_predicate, main, parse_range
from mergerfees.errors import ScenarioError
from mergerfees.scenario import (
    canonical_json,
    load_scenario,
    parse_scenario,
    render_human,
    run_analysis,
)


def eq7_scenario(b=1e-4, gamma=0.5, beta=0.5):
    return {
        "schema_version": 1,
        "model": {"kind": "eq7", "b": b, "gamma": gamma},
        "bargaining": {"beta": beta, "merging_pair": [1, 2]},
    }


def reduced_scenario():
    return {
        "schema_version": 1,
        "model": {
            "kind": "reduced_form",
            "v": [1.0, 1.0, 1.0],
            "pi": [1.0, 1.0, 10.0],
            "cdf": {"family": "exponential", "lam": 1.0},
        },
        "bargaining": {"beta": 0.5, "merging_pair": [1, 2]},
    }


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------


def test_canonical_json_round_trips_floats():
    payload = {"x": 1 / 3, "y": [1.0, 2, True, None, "s"], "z": {"b": 0.1, "a": -5e-300}}
    text = canonical_json(payload)
    parsed = json.loads(text)
    assert parsed["x"] == 1 / 3  # bit-exact round trip through 17 digits
    assert parsed["z"]["a"] == -5e-300
    assert text == canonical_json(payload)
    assert text.index('"a"') < text.index('"b"')  # keys sorted


def test_canonical_json_rejects_non_finite():
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})
    with pytest.raises(ValueError):
        canonical_json([float("inf")])


# ---------------------------------------------------------------------------
# Scenario validation
# ---------------------------------------------------------------------------


def test_parse_scenario_happy_path():
    scenario = parse_scenario(eq7_scenario())
    assert scenario.merging_pair == (1, 2)
    assert scenario.beta == 0.5


@pytest.mark.parametrize(
    "mutate,path_fragment",
    [
        (lambda s: s.update(schema_version=2), "schema_version"),
        (lambda s: s["model"].update(kind="mystery"), "model.kind"),
        (lambda s: s["model"].pop("gamma"), "model.gamma"),
        (lambda s: s["bargaining"].update(beta=1.5), "bargaining.beta"),
        (lambda s: s["bargaining"].update(merging_pair=[1, 1]), "merging_pair"),
        (lambda s: s["bargaining"].update(merging_pair=[1]), "merging_pair"),
        (lambda s: s.update(optimizer={"bogus": 1}), "optimizer.bogus"),
    ],
)
def test_parse_scenario_errors_carry_field_paths(mutate, path_fragment):
    raw = eq7_scenario()
    mutate(raw)
    with pytest.raises(ScenarioError) as err:
        parse_scenario(raw)
    assert path_fragment in str(err.value)


def test_parse_scenario_reduced_form_cdf_errors():
    raw = reduced_scenario()
    raw["model"]["cdf"] = {"family": "exponential"}
    with pytest.raises(ScenarioError) as err:
        parse_scenario(raw)
    assert "model.cdf.lam" in str(err.value)
    raw["model"]["cdf"] = {"family": "nope"}
    with pytest.raises(ScenarioError) as err:
        parse_scenario(raw)
    assert "model.cdf.family" in str(err.value)


def test_model_invariant_violations_are_validation_errors():
    raw = reduced_scenario()
    raw["model"]["v"] = [1.0, -1.0, 1.0]
    with pytest.raises(ScenarioError):
        parse_scenario(raw)


def test_region_mismatch_is_validation_error():
    raw = eq7_scenario()
    raw["region"] = {"lower": [0.1, 0.1], "upper": [0.9, 0.9]}
    with pytest.raises(ScenarioError) as err:
        parse_scenario(raw)
    assert "region.lower" in str(err.value)
    raw["region"] = {"lower": [0.1] * 3, "upper": [0.9] * 3, "resolution": 1}
    with pytest.raises(ScenarioError):
        parse_scenario(raw)


# ---------------------------------------------------------------------------
# Analysis pipeline
# ---------------------------------------------------------------------------


def test_run_analysis_eq7_small_coupling():
    report = run_analysis(parse_scenario(eq7_scenario()), seed=0)
    assert report["gross_relations"]["overall"] == "strict_gross_complements"
    assert report["profit_relation"]["kind"] == "strict_substitutes"
    assert report["fees"]["gap"] > 0
    assert abs(report["fees"]["sign_identity_residual"]) < 1e-9
    assert len(report["oracle_table"]) == 8


def test_run_analysis_reduced_form_values():
    report = run_analysis(parse_scenario(reduced_scenario()), seed=0)
    assert report["fees"]["t_pre"] == pytest.approx(1.891, abs=1e-3)
    assert report["fees"]["t_post"] == pytest.approx(2.541, abs=1e-3)
    assert report["loss_ratios"]["gap"] == pytest.approx(-0.147, abs=1e-3)
    assert report["spillover"]["kind"] == "strict_substitutes"
    assert report["gross_relations"]["overall"] == "strict_gross_complements"


def test_run_analysis_saturated_cdf_is_fee_neutral():
    raw = reduced_scenario()
    raw["model"]["cdf"] = {"family": "step", "thresholds": [0.0]}
    report = run_analysis(parse_scenario(raw), seed=0)
    assert report["fees"]["gap"] == pytest.approx(0.0, abs=1e-12)
    assert report["profit_relation"]["kind"] == "additive"


def test_report_scenario_echo_reparses_equivalently():
    scenario = parse_scenario(eq7_scenario())
    report = run_analysis(scenario, seed=0)
    again = parse_scenario(report["scenario"])
    assert again == scenario
    report2 = run_analysis(again, seed=0)
    assert canonical_json(report2) == canonical_json(report)


def test_determinism_same_seed_same_bytes():
    scenario = parse_scenario(eq7_scenario(gamma=-0.5, b=-1e-4))
    a = canonical_json(run_analysis(scenario, seed=11))
    b = canonical_json(run_analysis(scenario, seed=11))
    assert a == b


def test_render_human_reads_from_machine_report():
    report = run_analysis(parse_scenario(reduced_scenario()), seed=0)
    text = render_human(report)
    assert "raises total negotiated fees" in text
    assert "loss ratios" in text


def test_shapley_block_present_on_request():
    report = run_analysis(parse_scenario(reduced_scenario()), seed=0, include_shapley=True)
    assert report["shapley"]["pair_total_post"] > report["shapley"]["pair_total_pre"]


def test_custom_ownership_in_scenario():
    raw = reduced_scenario()
    raw["bargaining"]["ownership"] = [[1], [2], [3]]
    report = run_analysis(parse_scenario(raw), seed=0)
    assert report["fees"]["gap"] > 0


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def write_scenario(tmp_path, payload, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_cli_analyze_writes_identical_reports(tmp_path, capsys):
    path = write_scenario(tmp_path, eq7_scenario())
    out1 = tmp_path / "r1.json"
    out2 = tmp_path / "r2.json"
    assert main(["analyze", path, "--out", str(out1), "--seed", "5"]) == 0
    assert main(["analyze", path, "--out", str(out2), "--seed", "5"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    json.loads(out1.read_text())  # canonical output is valid JSON


def test_cli_analyze_validation_exit_code(tmp_path, capsys):
    bad = write_scenario(tmp_path, {"schema_version": 1})
    assert main(["analyze", bad]) == 2
    assert main(["analyze", str(tmp_path / "missing.json")]) == 2
    capsys.readouterr()


def test_cli_analyze_numerical_exit_code(tmp_path, capsys):
    # a step CDF makes the traffic equation jump over its root at the only
    # start point, so the profit oracle cannot be evaluated
    payload = {
        "schema_version": 1,
        "model": {
            "kind": "one_stop",
            "alpha": [1.0, 1.0],
            "beta": [1.0, 1.0],
            "cdf": {"family": "step", "thresholds": [0.3]},
        },
        "bargaining": {"beta": 0.5, "merging_pair": [1, 2]},
        "optimizer": {"multistart": 1},
    }
    path = write_scenario(tmp_path, payload)
    assert main(["analyze", path]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_cli_reproduce_all_suites_pass(capsys):
    for suite in ("appendix-a", "appendix-b", "prop1", "hin"):
        assert main(["reproduce", suite]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out


def test_cli_sweep_single_node_matches_analyze(tmp_path, capsys):
    path = write_scenario(tmp_path, eq7_scenario())
    out = tmp_path / "sweep.json"
    assert main(["sweep", path, "--range", "model.gamma=0.5:0.5:1", "--out", str(out)]) == 0
    capsys.readouterr()
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 1
    report = run_analysis(parse_scenario(eq7_scenario()), seed=0)
    assert rows[0]["gap"] == report["fees"]["gap"]


def test_cli_sweep_gap_changes_sign_with_gamma(tmp_path, capsys):
    path = write_scenario(tmp_path, eq7_scenario())
    out = tmp_path / "sweep.json"
    assert (
        main(
            [
                "sweep", path,
                "--range", "model.gamma=-0.6:0.6:5",
                "--predicate", "gap > 0",
                "--out", str(out),
            ]
        )
        == 0
    )
    capsys.readouterr()
    payload = json.loads(out.read_text())
    gaps = [row["gap"] for row in payload["rows"]]
    assert gaps[0] < 0 < gaps[-1]
    assert payload["matches"] == sum(1 for g in gaps if g > 0)


def test_cli_sweep_concavity_flips_fee_direction(tmp_path, capsys):
    # near-affine shopping costs let the pair's own traffic gains dominate;
    # strong concavity crowds the spillovers and flips the sign
    path = write_scenario(tmp_path, reduced_scenario())
    out = tmp_path / "sweep.json"
    assert (
        main(["sweep", path, "--range", "model.cdf.lam=0.02:1.0:4", "--out", str(out)])
        == 0
    )
    capsys.readouterr()
    gaps = [row["gap"] for row in json.loads(out.read_text())["rows"]]
    assert gaps[0] < 0 < gaps[-1]


def test_cli_sweep_node_failure_recorded_not_fatal(tmp_path, capsys):
    path = write_scenario(tmp_path, eq7_scenario())
    out = tmp_path / "sweep.json"
    # beta = 1.0 at one node fails validation; the sweep keeps going
    assert main(["sweep", path, "--range", "bargaining.beta=0.5:1.0:2", "--out", str(out)]) == 0
    capsys.readouterr()
    rows = json.loads(out.read_text())["rows"]
    assert "gap" in rows[0]
    assert "error" in rows[1]


def test_cli_sweep_max_nodes_cap(tmp_path, capsys):
    path = write_scenario(tmp_path, eq7_scenario())
    code = main(["sweep", path, "--range", "model.gamma=0:0.5:200", "--max-nodes", "10"])
    assert code == 2
    capsys.readouterr()


def test_cli_sweep_output_independent_of_worker_count(tmp_path, monkeypatch, capsys):
    path = write_scenario(tmp_path, eq7_scenario())
    outputs = []
    for workers in ("1", "4"):
        monkeypatch.setenv("MERGERFEES_MAX_WORKERS", workers)
        out = tmp_path / f"sweep_{workers}.json"
        assert main(["sweep", path, "--range", "model.gamma=-0.4:0.4:4", "--out", str(out)]) == 0
        capsys.readouterr()
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_parse_range():
    key, values = parse_range("model.gamma=-0.5:0.5:3")
    assert key == "model.gamma"
    assert np.allclose(values, [-0.5, 0.0, 0.5])
    with pytest.raises(ScenarioError):
        parse_range("model.gamma")
    with pytest.raises(ScenarioError):
        parse_range("model.gamma=1:2")


def test_predicate_safety_and_semantics():
    pred = compile_predicate("gap > 0 and gross == 'strict_gross_complements'")
    assert pred({"gap": 1.0, "gross": "strict_gross_complements"})
    assert not pred({"gap": -1.0, "gross": "strict_gross_complements"})
    with pytest.raises(ScenarioError):
        compile_predicate("__import__('os').system('true')")
    with pytest.raises(ScenarioError):
        compile_predicate("gap.__class__")
    with pytest.raises(ScenarioError):
        compile_predicate("(lambda: 1)()")
