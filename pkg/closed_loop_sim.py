"""
Closed-Loop Simulation
Fixed-step simulation of the full delayed r x s plant under decentralized PID
control (or under prescribed open-loop inputs), with IAE / ISCI scoring.

Every channel is a chain of first-order lags driven by its own delayed copy
of the input; delays are served from a ring buffer of past input samples with
linear interpolation. Plant and controller states are advanced together with
classic RK4. Each delayed input is held constant across a step at its value
for the step midpoint (the start of the step for cells without dead time).
All signals are deviation variables starting from rest.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from loop_pairing import PairingPlan
from pid_tuning import PidSettings
from plant_model import ElementKind, TransferMatrix

logger = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """Scenario settings are inconsistent with each other or with the plant."""


class SimulationDiverged(ArithmeticError):
    """The state became non-finite."""


class UnpairedPolicy(str, Enum):
    HOLD_ZERO = "hold_zero"


@dataclass(frozen=True)
class SetpointStep:
    output: int
    magnitude: float = 1.0
    time: float = 0.0


@dataclass(frozen=True)
class InputStep:
    input: int
    magnitude: float = 1.0
    time: float = 0.0


@dataclass(frozen=True)
class Scenario:
    steps: Tuple[SetpointStep, ...]
    horizon: float = 500.0
    step_size: float = 0.01
    unpaired_policy: UnpairedPolicy = UnpairedPolicy.HOLD_ZERO
    clamp: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "unpaired_policy", UnpairedPolicy(self.unpaired_policy))

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return ", ".join(f"step Yr{s.output + 1}" for s in self.steps) or "no steps"

    def validate(self, tm: TransferMatrix) -> None:
        _check_grid(tm, self.horizon, self.step_size, [s.time for s in self.steps])
        for s in self.steps:
            if not 0 <= s.output < tm.rows:
                raise ScenarioError(f"set-point step on output {s.output + 1} outside 1..{tm.rows}")
        if self.clamp is not None and self.clamp <= 0:
            raise ScenarioError(f"clamp must be > 0, got {self.clamp}")


def _check_grid(tm: TransferMatrix, horizon: float, h: float, event_times: Sequence[float]) -> None:
    if not h > 0:
        raise ScenarioError(f"step size must be > 0, got {h}")
    if not horizon > 0:
        raise ScenarioError(f"horizon must be > 0, got {horizon}")
    if any(t < 0 for t in event_times):
        raise ScenarioError("step times must be >= 0")
    if event_times and horizon <= max(event_times):
        raise ScenarioError(f"horizon {horizon} s does not extend past the last step at {max(event_times)} s")
    delays = [el.deadtime for _, _, el in tm.cells()]
    if horizon <= max(delays):
        raise ScenarioError(f"horizon {horizon} s is shorter than the longest dead time {max(delays)} s")
    positive = [d for d in delays if d > 0]
    if positive and h > min(positive) / 10.0:
        raise ScenarioError(
            f"step size {h} s is too coarse for dead time {min(positive)} s (needs h <= {min(positive) / 10.0:g})"
        )


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    time: np.ndarray
    setpoints: np.ndarray
    outputs: np.ndarray
    controls: np.ndarray
    output_names: Tuple[str, ...]
    input_names: Tuple[str, ...]
    label: str = ""
    iae_values: Tuple[float, ...] = field(default=())
    isci_values: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        n = self.time.shape[0]
        for name in ("setpoints", "outputs", "controls"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} is not on the trace time grid")
        if not self.iae_values:
            object.__setattr__(self, "iae_values",
                               tuple(iae(self, i) for i in range(self.outputs.shape[1])))
        if not self.isci_values:
            object.__setattr__(self, "isci_values",
                               tuple(isci(self, j) for j in range(self.controls.shape[1])))


def iae(trace: SimulationTrace, output: int) -> float:
    """Trapezoidal integral of |r_i - y_i| over the trace."""
    error = np.abs(trace.setpoints[:, output] - trace.outputs[:, output])
    return float(np.trapezoid(error, trace.time))


def isci(trace: SimulationTrace, input_: int) -> float:
    """Trapezoidal integral of u_j^2 over the trace."""
    return float(np.trapezoid(trace.controls[:, input_] ** 2, trace.time))


class DelayBuffer:
    """Ring buffer of past input vectors, read per cell at a fractional lag."""

    def __init__(self, n_inputs: int, max_lag_steps: float):
        self.capacity = int(math.ceil(max_lag_steps)) + 3
        self.data = np.zeros((self.capacity, n_inputs))
        self.count = 0

    def push(self, u: np.ndarray) -> None:
        self.data[self.count % self.capacity] = u
        self.count += 1

    def read(self, lag_steps: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Input `inputs[c]` as it was `lag_steps[c]` samples before the newest one.

        Anything older than the first push is zero (plant at rest), with no
        ramp up to the first sample.
        """
        pos = (self.count - 1) - lag_steps
        lo = np.floor(pos).astype(int)
        frac = pos - lo
        lo_val = np.where(lo >= 0, self.data[lo % self.capacity, inputs], 0.0)
        hi = lo + 1
        hi_val = np.where((hi >= 0) & (frac > 0), self.data[hi % self.capacity, inputs], 0.0)
        return np.where(pos >= 0, lo_val + frac * (hi_val - lo_val), 0.0)


class _PlantModel:
    """Linear state-space layout of the delayed channels.

    Each FOPDT cell owns one lag state, each SOPDT cell two in cascade; the
    first state of a cell is driven by k * u_j(t - td).
    """

    def __init__(self, tm: TransferMatrix):
        taus: List[float] = []
        feeds: List[Tuple[int, int]] = []  # (state, upstream state)
        first_state, last_state, cell_input, cell_gain, cell_delay = [], [], [], [], []
        out_rows: List[int] = []
        for i, j, el in tm.cells():
            first = len(taus)
            taus.append(el.tau)
            if el.kind is ElementKind.SOPDT:
                taus.append(el.tau2)
                feeds.append((first + 1, first))
            first_state.append(first)
            last_state.append(len(taus) - 1)
            out_rows.append(i)
            cell_input.append(j)
            cell_gain.append(el.gain)
            cell_delay.append(el.deadtime)

        n = len(taus)
        self.n_states = n
        self.tau = np.array(taus)
        a = -np.eye(n)
        for state, upstream in feeds:
            a[state, upstream] = 1.0
        self.a = a / self.tau[:, None]
        self.c = np.zeros((tm.rows, n))
        self.c[out_rows, last_state] = 1.0
        self.first_state = np.array(first_state)
        self.cell_input = np.array(cell_input)
        self.cell_drive = np.array(cell_gain) / self.tau[self.first_state]
        self.cell_delay = np.array(cell_delay)

    def drive(self, delayed: np.ndarray) -> np.ndarray:
        b = np.zeros(self.n_states)
        b[self.first_state] = self.cell_drive * delayed
        return b


def _run(tm: TransferMatrix, h: float, horizon: float,
         loops: Sequence[Tuple[int, int, PidSettings]],
         setpoint_at: Callable[[float], np.ndarray],
         open_loop_at: Optional[Callable[[float], np.ndarray]],
         clamp: Optional[float], label: str) -> SimulationTrace:
    plant = _PlantModel(tm)
    r_count, s_count, n = tm.rows, tm.cols, plant.n_states
    n_loops = len(loops)
    out_idx = np.array([o for o, _, _ in loops], dtype=int)
    in_idx = np.array([j for _, j, _ in loops], dtype=int)

    kc = np.array([p.kc for _, _, p in loops])
    tau_i = np.array([p.tau_i for _, _, p in loops])
    has_d = np.array([p.tau_d > 0 for _, _, p in loops], dtype=float)
    ratio = np.array([p.derivative_filter_ratio for _, _, p in loops])
    tf = np.where(has_d > 0, np.array([p.tau_d for _, _, p in loops]) / ratio, 1.0)
    d_gain = has_d * ratio

    # z = [plant states | integral of e | derivative filter], e = r - y on paired outputs
    size = n + 2 * n_loops
    cp = plant.c[out_idx] if n_loops else np.zeros((0, n))
    m = np.zeros((size, size))
    m[:n, :n] = plant.a
    m[n:n + n_loops, :n] = -cp
    m[n + n_loops:, :n] = -(has_d / tf)[:, None] * cp
    m[n + n_loops:, n + n_loops:] = -np.diag(has_d / tf)
    g = np.zeros((size, n_loops))
    g[n:n + n_loops] = np.eye(n_loops)
    g[n + n_loops:] = np.diag(has_d / tf)

    u_from_z = np.zeros((n_loops, size))
    u_from_z[:, :n] = -((kc * (1 + d_gain))[:, None] * cp)
    u_from_z[:, n:n + n_loops] = np.diag(kc / tau_i)
    u_from_z[:, n + n_loops:] = -np.diag(kc * d_gain)
    u_from_r = kc * (1 + d_gain)

    steps = int(round(horizon / h))
    lag = plant.cell_delay / h
    buffer = DelayBuffer(s_count, float(np.max(lag)) if lag.size else 0.0)
    # delayed cells are read at the step midpoint; h <= td/10 keeps that in the stored history
    read_lag = np.where(lag > 0, lag - 0.5, 0.0)
    time = np.arange(steps + 1) * h
    rec_r = np.zeros((steps + 1, r_count))
    rec_y = np.zeros((steps + 1, r_count))
    rec_u = np.zeros((steps + 1, s_count))

    z = np.zeros(size)

    def control(t: float, z: np.ndarray, r: np.ndarray) -> np.ndarray:
        u = open_loop_at(t) if open_loop_at is not None else np.zeros(s_count)
        if n_loops:
            u[in_idx] = u_from_z @ z + u_from_r * r[out_idx]
        if clamp is not None:
            np.clip(u, -clamp, clamp, out=u)
        return u

    for k in range(steps + 1):
        t = time[k]
        r_now = setpoint_at(t)
        u = control(t, z, r_now)
        rec_r[k] = r_now
        rec_y[k] = plant.c @ z[:n]
        rec_u[k] = u
        if k == steps:
            break
        buffer.push(u)
        b = np.zeros(size)
        b[:n] = plant.drive(buffer.read(read_lag, plant.cell_input))

        r_mid = setpoint_at(t + 0.5 * h)[out_idx]
        r_end = setpoint_at(t + h)[out_idx]
        k1 = m @ z + g @ r_now[out_idx] + b
        k2 = m @ (z + 0.5 * h * k1) + g @ r_mid + b
        k3 = m @ (z + 0.5 * h * k2) + g @ r_mid + b
        k4 = m @ (z + h * k3) + g @ r_end + b
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise SimulationDiverged(f"state became non-finite at t = {time[k + 1]:.4f} s ({label})")

    trace = SimulationTrace(time, rec_r, rec_y, rec_u, tm.output_names, tm.input_names, label)
    logger.info("Simulated %s: %d steps of %g s; IAE %s", label, steps, h,
                ", ".join(f"{v:.3f}" for v in trace.iae_values))
    return trace


def _step_signal(size: int, events: Sequence[Tuple[int, float, float]]) -> Callable[[float], np.ndarray]:
    def at(t: float) -> np.ndarray:
        value = np.zeros(size)
        for index, magnitude, start in events:
            if t >= start:
                value[index] += magnitude
        return value
    return at


def simulate(tm: TransferMatrix, plan: PairingPlan, settings: Sequence[PidSettings],
             sc: Scenario) -> SimulationTrace:
    """Closed loop under the plan's decentralized PIDs; unpaired inputs stay at zero."""
    sc.validate(tm)
    if len(settings) != len(plan.pairs):
        raise ScenarioError(f"{len(settings)} PID settings for {len(plan.pairs)} loops")
    for pair in plan.pairs:
        if not (0 <= pair.output < tm.rows and 0 <= pair.input < tm.cols):
            raise ScenarioError(f"loop {pair.label} does not fit a {tm.rows}x{tm.cols} plant")
    loops = [(pair.output, pair.input, pid) for pair, pid in zip(plan.pairs, settings)]
    setpoints = _step_signal(tm.rows, [(s.output, s.magnitude, s.time) for s in sc.steps])
    label = f"{plan.basis.value} {plan.label}, {sc.label}"
    return _run(tm, sc.step_size, sc.horizon, loops, setpoints, None, sc.clamp, label)


def simulate_open_loop(tm: TransferMatrix, input_steps: Sequence[InputStep],
                       horizon: float, step_size: float) -> SimulationTrace:
    """Plant response to prescribed input steps, no controllers."""
    _check_grid(tm, horizon, step_size, [s.time for s in input_steps])
    for s in input_steps:
        if not 0 <= s.input < tm.cols:
            raise ScenarioError(f"input step on input {s.input + 1} outside 1..{tm.cols}")
    inputs = _step_signal(tm.cols, [(s.input, s.magnitude, s.time) for s in input_steps])
    zero = _step_signal(tm.rows, [])
    return _run(tm, step_size, horizon, [], zero, inputs, None, "open loop")


def write_trace_csv(trace: SimulationTrace, path) -> None:
    """CSV with columns t, r1..rr, y1..yr, u1..us."""
    r_count, s_count = trace.outputs.shape[1], trace.controls.shape[1]
    header = (["t"] + [f"r{i}" for i in range(1, r_count + 1)]
              + [f"y{i}" for i in range(1, r_count + 1)]
              + [f"u{j}" for j in range(1, s_count + 1)])
    table = np.hstack([trace.time[:, None], trace.setpoints, trace.outputs, trace.controls])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in table:
            writer.writerow([repr(float(v)) for v in row])


def metrics_document(trace: SimulationTrace) -> Dict:
    return {
        "scenario": trace.label,
        "iae": {name: value for name, value in zip(trace.output_names, trace.iae_values)},
        "isci": {name: value for name, value in zip(trace.input_names, trace.isci_values)},
    }


@dataclass(frozen=True)
class LoopComparison:
    """One output's IAE and the effort of its paired input, per pairing basis."""
    output_name: str
    entries: Tuple[Tuple[str, str, float, float], ...]  # (basis, input name, IAE, ISCI)


def compare_plans(runs: Sequence[Tuple[PairingPlan, SimulationTrace]]) -> List[LoopComparison]:
    """Side-by-side IAE/ISCI per output for the same scenario under several plans."""
    if not runs:
        return []
    names = runs[0][1].output_names
    for _, trace in runs[1:]:
        if trace.output_names != names:
            raise ScenarioError("compared traces come from plants with different outputs")
    rows = []
    for i, name in enumerate(names):
        entries = []
        for plan, trace in runs:
            j = plan.input_for(i)
            entries.append((plan.basis.value, trace.input_names[j],
                            trace.iae_values[i], trace.isci_values[j]))
        rows.append(LoopComparison(name, tuple(entries)))
    return rows
