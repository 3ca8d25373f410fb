import copy
import json
import math

import numpy as np
import pytest

from netheat.cli import main
from netheat.scenario import Forcing, ForcingTerm, ScenarioError, TimeFunction, parse_scenario, run, scenario_from_dict

UNIT = {"kind": "constant", "value": 1.0}
MINIMAL = {
    "graph": {"edges": [[1, 2], [2, 3], [3, 1]]},
    "coefficients": {"edges": [{"mu": UNIT, "c": UNIT} for _ in range(3)]},
    "initial": {"kind": "polynomial", "edges": [[0, 1], [1, 1], [2, -2]]},
}


def scenario(**overrides):
    d = copy.deepcopy(MINIMAL)
    d.update(copy.deepcopy(overrides))
    return d


def write(tmp_path, data, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_minimal_defaults(tmp_path):
    sc = parse_scenario(write(tmp_path, MINIMAL))
    assert sc.solver["theta"] == 1.0 and sc.solver["N"] == 31 and sc.solver["dt"] == 0.01
    assert sc.forcing.terms == () and sc.epsilon == 0.1
    assert sc.graph.m == 3


def test_coefficient_length():
    d = scenario()
    d["coefficients"]["edges"] = d["coefficients"]["edges"][:2]
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(d)
    assert info.value.path == "coefficients.length"


def test_samples_not_in_v():
    n = 33
    ramp = list(np.linspace(0, 1, n))
    d = scenario(initial={"kind": "samples", "edges": [ramp, ramp, ramp]})
    with pytest.raises(ScenarioError, match="initial not in V"):
        scenario_from_dict(d)
    ok = scenario(initial={"kind": "samples", "edges": [ramp, ramp[::-1], [0.0] * n]})
    u = scenario_from_dict(ok).initial_state()
    assert u[1] == 1.0


def test_samples_wrong_length():
    d = scenario(initial={"kind": "samples", "edges": [[0, 1]] * 3})
    with pytest.raises(ScenarioError, match="node samples"):
        scenario_from_dict(d)


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d.update(solvr={}), "scenario.solvr"),
    (lambda d: d["graph"].update(edge=[]), "graph.edge"),
    (lambda d: d.update(solver={"dt": 0.1, "tehta": 1}), "solver.tehta"),
    (lambda d: d["coefficients"]["edges"][1].update(b=UNIT), "coefficients.edges[1].b"),
    (lambda d: d.update(analysis={"k": 1}), "analysis.k"),
    (lambda d: d.update(solver={"dt": "x"}), "solver.dt"),
    (lambda d: d.update(forcing={"terms": [{"edge": 4, "poly": [1]}]}), "forcing.terms[0].edge"),
    (lambda d: d.update(initial={"kind": "wave"}), "initial.kind"),
    (lambda d: d.update(initial={"kind": "bump", "edge": 1, "center": 0.1, "width": 0.3}), "initial"),
    (lambda d: d.pop("initial"), "initial"),
])
def test_schema_errors_name_the_field(mutate, path):
    d = scenario()
    mutate(d)
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(d)
    assert info.value.path == path


def test_graph_and_bounds_errors():
    d = scenario(graph={"edges": [[1, 2]], "strict": True})
    d["coefficients"]["edges"] = [{"mu": UNIT, "c": UNIT}]
    d["initial"] = {"kind": "constant"}
    with pytest.raises(ScenarioError, match="degree"):
        scenario_from_dict(d)
    d = scenario()
    d["coefficients"]["edges"][0] = {"mu": {"kind": "affine", "value0": 1.0, "slope": -1.0}, "c": UNIT}
    d["coefficients"]["epsilon"] = 0.5
    with pytest.raises(ScenarioError, match="certificate"):
        scenario_from_dict(d)


def test_named_initial_states():
    sc = scenario_from_dict(scenario(initial={"kind": "eigenmode", "k": 2}, solver={"N": 15}))
    s = sc.system()
    u = sc.initial_state(s)
    r = s.K(0) @ u - (2 * math.pi / 3) ** 2 * (s.M @ u)
    assert np.linalg.norm(r) < 5e-3 * np.linalg.norm(s.K(0) @ u)
    sc = scenario_from_dict(scenario(initial={"kind": "bump", "edge": 2, "center": 0.5, "width": 0.25, "height": 2}))
    u = sc.initial_state()
    vals = sc.mesh.edge_values(u)
    assert vals[1].max() == 2.0 and vals[0].max() == 0.0 and vals[2].max() == 0.0
    sc = scenario_from_dict(scenario(initial={"kind": "constant", "value": 3, "offset": 1}))
    assert np.all(sc.initial_state() == 4.0)


def test_forcing_helpers():
    f = Forcing(3, (ForcingTerm(1, (0.0, 1.0), TimeFunction("exp", a=2.0, k=1.0)),))
    assert f.mass(0.0) == pytest.approx(1.0 / math.sqrt(3))
    assert f.mass_integral(0.0, math.inf) == pytest.approx(2 * 0.5 / math.sqrt(3))
    assert f.norms([0.0])[0] == pytest.approx(2 / math.sqrt(3))  # |2x|_L2 on one edge
    sin = TimeFunction("sin", a=1.0, omega=2.0)
    assert sin.integral(0, math.pi / 2) == pytest.approx(1.0)
    assert TimeFunction("constant", a=3.0).integral(1, 2) == 3.0


def test_commands_write_outputs(tmp_path):
    d = scenario(solver={"N": 15, "t_end": 0.5, "dt": 0.05},
                 analysis={"family": "cycle", "refinement_Ns": [7, 15, 31], "spectral_times": [0.0, 0.5]})
    sc = scenario_from_dict(d)
    rep = run(sc, "validate", tmp_path / "v")
    assert rep.files == [] and not (tmp_path / "v" / "trajectory.csv").exists()
    rep = run(sc, "spectrum", tmp_path / "sp")
    lines = (tmp_path / "sp" / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "t,lambda_1,lambda_2,lambda_3,lambda_4"
    assert float(lines[1].split(",")[2]) == pytest.approx(4.3865, rel=2e-3)
    run(sc, "simulate", tmp_path / "sim")
    rows = (tmp_path / "sim" / "trajectory.csv").read_text().splitlines()
    assert rows[0].split(",")[:3] == ["t", "u0", "u1"] and len(rows) == 12
    rep = run(sc, "convergence", tmp_path / "cv")
    head = (tmp_path / "cv" / "convergence.csv").read_text().splitlines()[0]
    assert head == "N,h,lambda_err,order" and 1.8 <= rep.summary["spatial_order"] <= 2.2


def test_analyze_conservation_scenario(tmp_path):
    # mean-free forcing that dies out faster than the slowest mode
    fast = {"kind": "exp", "a": 1.0, "k": 8.0}
    d = scenario(solver={"N": 15, "dt": 0.002, "t_end": 2.5},
                 forcing={"terms": [{"edge": 1, "poly": [1.0], "time": fast},
                                    {"edge": 2, "poly": [-0.5, 1.0], "time": fast},
                                    {"edge": 3, "poly": [-1.0], "time": fast}]})
    rep = run(scenario_from_dict(d), "analyze", tmp_path)
    report = json.loads((tmp_path / "report.json").read_text())
    for key in ("regime", "lambda2_lower", "fitted_rate", "predicted_rate", "bound_satisfied", "mass_drift",
                "min_value", "equilibrium_residual"):
        assert key in report
    assert report["regime"] == "b_identity"
    assert report["bound_satisfied"] is True
    assert report["mass_drift"] <= 1e-10
    assert rep.summary["lambda2_status"] == "certified"


def test_convergence_needs_target():
    with pytest.raises(ScenarioError):
        run(scenario_from_dict(scenario()), "convergence")


def test_temporal_convergence_output(tmp_path):
    d = scenario(solver={"N": 7, "t_end": 0.5}, analysis={"convergence_dts": [0.1, 0.05, 0.025, 0.0125]})
    rep = run(scenario_from_dict(d), "convergence", tmp_path)
    assert 0.8 <= rep.summary["temporal_order"] <= 1.2
    assert (tmp_path / "convergence_time.csv").read_text().startswith("dt,difference,order")


def test_output_stride(tmp_path):
    d = scenario(solver={"N": 3, "dt": 0.1, "t_end": 1.0}, analysis={"output_stride": 4})
    run(scenario_from_dict(d), "simulate", tmp_path)
    ts = [r.split(",")[0] for r in (tmp_path / "trajectory.csv").read_text().splitlines()[1:]]
    assert ts[0] == "0" and ts[-1] == "1" and len(ts) == 4


def test_cli_exit_codes(tmp_path, capsys):
    good = write(tmp_path, scenario(solver={"N": 7, "t_end": 0.2}))
    assert main(["validate", "--scenario", str(good)]) == 0
    assert json.loads(capsys.readouterr().out)["m"] == 3
    bad = scenario()
    bad["coefficients"]["edges"].pop()
    assert main(["simulate", "--scenario", str(write(tmp_path, bad, "bad.json"))]) == 2
    assert "coefficients.length" in capsys.readouterr().err
    assert main(["spectrum", "--scenario", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["spectrum", "--scenario", str(tmp_path / "broken.json")]) == 2
    with pytest.raises(SystemExit):
        main(["explode", "--scenario", str(good)])


def test_cli_deterministic(tmp_path):
    d = scenario(solver={"N": 15, "t_end": 1.0, "dt": 0.01},
                 coefficients={"epsilon": 0.4, "edges": [{"mu": {"kind": "exp_approach", "a": 1, "b": 1, "k": 1},
                                                          "c": UNIT}] * 3},
                 analysis={"spectral_times": {"start": 0, "stop": 1, "num": 5}, "extend_to_limit": False})
    p = write(tmp_path, d)
    outs = []
    for i in range(2):
        for cmd in ("spectrum", "simulate", "analyze"):
            main([cmd, "--scenario", str(p), "--out", str(tmp_path / f"run{i}" / cmd)])
        outs.append(sorted((f.relative_to(tmp_path / f"run{i}"), f.read_bytes())
                           for f in (tmp_path / f"run{i}").rglob("*.*")))
    assert outs[0] == outs[1] and len(outs[0]) == 6


def test_slow_forcing_breaks_stated_envelope():
    # the forcing integral enters the envelope undamped by the convolution a
    # correct Gronwall argument produces; slowly decaying sources exceed it
    slow = {"kind": "exp", "a": 1.0, "k": 2.0}
    d = scenario(solver={"N": 15, "dt": 0.002, "t_end": 2.5},
                 forcing={"terms": [{"edge": 1, "poly": [1.0], "time": slow},
                                    {"edge": 3, "poly": [-1.0], "time": slow}]})
    rep = run(scenario_from_dict(d), "analyze")
    assert rep.summary["bound_satisfied"] is False
    assert rep.summary["gronwall_worst_relative_margin"] < -1
    assert rep.summary["mass_drift"] <= 1e-12
