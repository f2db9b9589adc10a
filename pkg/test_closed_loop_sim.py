import csv
import math

import numpy as np
import pytest

from closed_loop_sim import (
    DelayBuffer,
    InputStep,
    Scenario,
    ScenarioError,
    SetpointStep,
    SimulationTrace,
    compare_plans,
    iae,
    isci,
    metrics_document,
    simulate,
    simulate_open_loop,
    write_trace_csv,
)
from gain_arrays import rga, rnga
from loop_pairing import recommend
from pid_tuning import tune_plan
from plant_model import normalized_gain, steady_state_gain


def flat_trace(length, error=1.0, control=1.0, points=101):
    time = np.linspace(0.0, length, points)
    return SimulationTrace(
        time=time,
        setpoints=np.full((points, 1), error),
        outputs=np.zeros((points, 1)),
        controls=np.full((points, 1), control),
        output_names=("Y1",),
        input_names=("U1",),
    )


def plan_and_pids(tm, basis):
    lam = rnga(normalized_gain(tm)) if basis == "RNGA" else rga(steady_state_gain(tm))
    plan = recommend(lam)
    by_output = {loop.output: loop.settings for loop in tune_plan(tm, plan)}
    return plan, [by_output[p.output] for p in plan.pairs]


def test_iae_and_isci_of_constant_signals():
    trace = flat_trace(10.0)
    assert iae(trace, 0) == pytest.approx(10.0)
    assert isci(trace, 0) == pytest.approx(10.0)
    assert isci(flat_trace(5.0), 0) == pytest.approx(5.0)
    quiet = flat_trace(10.0, error=0.0, control=0.0)
    assert iae(quiet, 0) == 0.0
    assert isci(quiet, 0) == 0.0
    assert trace.iae_values == (pytest.approx(10.0),)


def test_trace_rejects_misaligned_series():
    with pytest.raises(ValueError, match="time grid"):
        SimulationTrace(np.arange(3.0), np.zeros((3, 1)), np.zeros((2, 1)), np.zeros((3, 1)),
                        ("Y1",), ("U1",))


def test_delay_buffer_interpolates():
    buffer = DelayBuffer(1, 3.0)
    for value in (1.0, 2.0, 3.0):
        buffer.push(np.array([value]))
    inputs = np.array([0, 0, 0, 0])
    read = buffer.read(np.array([0.0, 0.5, 2.0, 5.0]), inputs)
    np.testing.assert_allclose(read, [3.0, 2.5, 1.0, 0.0])


def test_delay_buffer_has_no_ramp_before_first_sample():
    buffer = DelayBuffer(1, 2.0)
    buffer.push(np.array([4.0]))
    np.testing.assert_allclose(buffer.read(np.array([0.0, 0.5, 1.0]), np.array([0, 0, 0])), [4.0, 0.0, 0.0])
    buffer.push(np.array([6.0]))
    np.testing.assert_allclose(buffer.read(np.array([0.5, 1.5]), np.array([0, 0])), [5.0, 0.0])


def test_open_loop_fopdt_step(single_loop):
    trace = simulate_open_loop(single_loop, [InputStep(0)], horizon=20.0, step_size=0.01)
    index = int(round(11.0 / 0.01))
    assert trace.time[index] == pytest.approx(11.0)
    assert trace.outputs[index, 0] == pytest.approx(2.0 * (1.0 - math.exp(-1.0)), abs=1e-3)
    before_delay = trace.time < 1.0
    assert np.max(np.abs(trace.outputs[before_delay, 0])) < 1e-12
    assert trace.outputs[-1, 0] == pytest.approx(2.0 * (1.0 - math.exp(-1.9)), abs=1e-3)


def test_open_loop_superposition(radiator):
    kwargs = dict(horizon=60.0, step_size=0.05)
    first = simulate_open_loop(radiator, [InputStep(0, 1.0)], **kwargs)
    second = simulate_open_loop(radiator, [InputStep(2, 1.0, 5.0)], **kwargs)
    both = simulate_open_loop(radiator, [InputStep(0, 2.0), InputStep(2, -0.5, 5.0)], **kwargs)
    np.testing.assert_allclose(both.outputs, 2.0 * first.outputs - 0.5 * second.outputs, atol=1e-9)


def test_each_cell_waits_for_its_deadtime(radiator):
    trace = simulate_open_loop(radiator, [InputStep(2)], horizon=40.0, step_size=0.05)
    # U3 reaches Y1 after 18.67 s and Y2 after 19.86 s
    assert np.max(np.abs(trace.outputs[trace.time < 18.67, 0])) < 1e-12
    assert np.max(np.abs(trace.outputs[trace.time < 19.86, 1])) < 1e-12
    assert trace.outputs[-1, 0] > 0.0


def test_scenario_validation(radiator):
    plan, pids = plan_and_pids(radiator, "RNGA")
    with pytest.raises(ScenarioError, match="longest dead time"):
        simulate(radiator, plan, pids, Scenario((SetpointStep(0),), horizon=15.0, step_size=0.01))
    with pytest.raises(ScenarioError, match="too coarse"):
        simulate(radiator, plan, pids, Scenario((SetpointStep(0),), horizon=100.0, step_size=1.0))
    with pytest.raises(ScenarioError, match="outside 1..2"):
        simulate(radiator, plan, pids, Scenario((SetpointStep(4),), horizon=100.0))
    with pytest.raises(ScenarioError, match="last step"):
        simulate(radiator, plan, pids, Scenario((SetpointStep(0, time=200.0),), horizon=100.0))
    with pytest.raises(ScenarioError, match="PID settings"):
        simulate(radiator, plan, pids[:1], Scenario((SetpointStep(0),), horizon=100.0))


def test_single_loop_tracks_setpoint(single_loop):
    plan, pids = plan_and_pids(single_loop, "RNGA")
    trace = simulate(single_loop, plan, pids, Scenario((SetpointStep(0),), horizon=100.0))
    assert trace.outputs[-1, 0] == pytest.approx(1.0, abs=1e-2)
    assert trace.setpoints[0, 0] == 1.0
    assert trace.iae_values[0] > 0.0


def test_unpaired_inputs_stay_at_zero(radiator):
    plan, pids = plan_and_pids(radiator, "RNGA")
    trace = simulate(radiator, plan, pids,
                     Scenario((SetpointStep(0),), horizon=60.0, step_size=0.05))
    assert np.all(trace.controls[:, 2:] == 0.0)
    assert np.any(trace.controls[:, 0] != 0.0)


def test_clamp_limits_controls(radiator):
    plan, pids = plan_and_pids(radiator, "RNGA")
    trace = simulate(radiator, plan, pids,
                     Scenario((SetpointStep(0),), horizon=60.0, step_size=0.05, clamp=2.0))
    assert np.max(np.abs(trace.controls)) <= 2.0


def test_exports(radiator, tmp_path):
    plan, pids = plan_and_pids(radiator, "RNGA")
    trace = simulate(radiator, plan, pids,
                     Scenario((SetpointStep(1),), horizon=30.0, step_size=0.05))
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "r1", "r2", "y1", "y2", "u1", "u2", "u3", "u4"]
    assert len(rows) == len(trace.time) + 1
    assert float(rows[1][2]) == 1.0

    doc = metrics_document(trace)
    assert doc["scenario"] == "RNGA Y1-U1/Y2-U2, step Yr2"
    assert list(doc["iae"]) == ["Y1", "Y2"]
    assert list(doc["isci"]) == ["U1", "U2", "U3", "U4"]


def test_compare_plans(radiator):
    sc = Scenario((SetpointStep(0),), horizon=30.0, step_size=0.05)
    runs = []
    for basis in ("RNGA", "RGA"):
        plan, pids = plan_and_pids(radiator, basis)
        runs.append((plan, simulate(radiator, plan, pids, sc)))
    rows = compare_plans(runs)
    assert [row.output_name for row in rows] == ["Y1", "Y2"]
    assert [(basis, inp) for basis, inp, _, _ in rows[0].entries] == [("RNGA", "U1"), ("RGA", "U3")]
    assert rows[1].entries[1][3] == runs[1][1].isci_values[3]


# ---------------- full-horizon runs ----------------

# radiator figures as published (scenario output, basis) -> IAE per output
PUBLISHED_IAE = {
    (0, "RNGA"): (26.67, 9.87), (0, "RGA"): (51.91, 16.15),
    (1, "RNGA"): (6.94, 26.94), (1, "RGA"): (12.10, 35.98),
}
# step in Yr1: ISCI of the inputs paired to Y1 and Y2
PUBLISHED_ISCI = {"RNGA": (768.1, 30.3), "RGA": (1092.0, 49.97)}

# this simulator at h = 0.01 s, horizon 500 s, N = 10, lambda_f = td
SIMULATED_IAE = {(0, "RNGA"): (21.78, 5.07), (0, "RGA"): (29.65, 7.94), (1, "RGA"): (6.06, 29.02)}
SIMULATED_ISCI = {"RNGA": 916.2, "RGA": (1046.0, 36.7)}


@pytest.fixture(scope="module")
def radiator_runs(radiator):
    runs = {}
    for basis in ("RNGA", "RGA"):
        plan, pids = plan_and_pids(radiator, basis)
        for output in (0, 1):
            sc = Scenario((SetpointStep(output),), horizon=500.0, step_size=0.01)
            runs[output, basis] = (plan, simulate(radiator, plan, pids, sc))
    return runs


def paired_isci(run):
    plan, trace = run
    return [trace.isci_values[plan.input_for(loop)] for loop in (0, 1)]


@pytest.mark.slow
def test_rnga_pairing_beats_rga_on_first_setpoint(radiator_runs):
    rnga_run, rga_run = radiator_runs[0, "RNGA"], radiator_runs[0, "RGA"]
    for loop in (0, 1):
        assert rnga_run[1].iae_values[loop] < rga_run[1].iae_values[loop]
        assert paired_isci(rnga_run)[loop] < paired_isci(rga_run)[loop]


@pytest.mark.slow
def test_second_setpoint_orderings(radiator_runs):
    rnga_iae = radiator_runs[1, "RNGA"][1].iae_values
    rga_iae = radiator_runs[1, "RGA"][1].iae_values
    assert rnga_iae[1] == pytest.approx(PUBLISHED_IAE[1, "RNGA"][1], rel=0.15)
    # Y1 interaction error is smaller under the RGA loops for this step
    assert rnga_iae[0] == pytest.approx(PUBLISHED_IAE[1, "RNGA"][0], rel=0.01)
    assert rga_iae[0] < rnga_iae[0]


@pytest.mark.slow
@pytest.mark.parametrize("key", sorted(SIMULATED_IAE))
def test_simulated_iae(radiator_runs, key):
    assert radiator_runs[key][1].iae_values == pytest.approx(SIMULATED_IAE[key], rel=0.01)


@pytest.mark.slow
def test_simulated_isci(radiator_runs):
    rnga_isci = paired_isci(radiator_runs[0, "RNGA"])
    assert rnga_isci[0] == pytest.approx(SIMULATED_ISCI["RNGA"], rel=0.01)
    assert rnga_isci[1] == pytest.approx(PUBLISHED_ISCI["RNGA"][1], rel=0.15)
    assert paired_isci(radiator_runs[0, "RGA"]) == pytest.approx(list(SIMULATED_ISCI["RGA"]), rel=0.01)


@pytest.mark.slow
def test_step_size_convergence(radiator, radiator_runs):
    plan, fine = radiator_runs[0, "RNGA"]
    _, pids = plan_and_pids(radiator, "RNGA")
    coarse = simulate(radiator, plan, pids,
                      Scenario((SetpointStep(0),), horizon=500.0, step_size=0.02))
    np.testing.assert_allclose(coarse.iae_values, fine.iae_values, rtol=1e-3)
    paired = [plan.input_for(loop) for loop in (0, 1)]
    np.testing.assert_allclose([coarse.isci_values[j] for j in paired],
                               [fine.isci_values[j] for j in paired], rtol=1e-3)
