"""
IMC-PID Tuning
PID settings for FOPDT loops from the IMC design with a first-order Pade
dead-time approximation:

    tau_i = tau + td/2
    tau_d = tau*td / (2*tau + td)
    kc    = (2*tau + td) / (k * (2*lambda_f + td))

The filter time constant lambda_f defaults to the loop dead time.
"""

import logging
from dataclasses import dataclass
from typing import List, Mapping, Optional

from loop_pairing import PairingPlan
from plant_model import ElementKind, TransferElement, TransferMatrix

logger = logging.getLogger(__name__)

DEFAULT_FILTER_RATIO = 10.0


class TuningError(ValueError):
    """The loop cannot be tuned by the FOPDT IMC rule."""


@dataclass(frozen=True)
class PidSettings:
    """Parallel PID kc(1 + 1/(tau_i s) + tau_d s); the derivative is filtered by tau_d/N."""
    kc: float
    tau_i: float
    tau_d: float
    lambda_f: float
    derivative_filter_ratio: float = DEFAULT_FILTER_RATIO

    def __post_init__(self):
        if self.tau_i <= 0:
            raise TuningError(f"tau_i must be > 0, got {self.tau_i}")
        if self.tau_d < 0:
            raise TuningError(f"tau_d must be >= 0, got {self.tau_d}")
        if self.lambda_f <= 0:
            raise TuningError(f"lambda_f must be > 0, got {self.lambda_f}")
        if self.derivative_filter_ratio <= 0:
            raise TuningError(f"derivative filter ratio must be > 0, got {self.derivative_filter_ratio}")


@dataclass(frozen=True)
class TunedLoop:
    output: int
    input: int
    label: str
    settings: PidSettings


def imc_pid_fopdt(el: TransferElement, lambda_f: Optional[float] = None,
                  derivative_filter_ratio: float = DEFAULT_FILTER_RATIO) -> PidSettings:
    if el.kind is not ElementKind.FOPDT:
        raise TuningError("the IMC rule here covers FOPDT channels only")
    if el.gain == 0:
        raise TuningError("cannot tune a channel with zero gain")
    tau, td = el.tau, el.deadtime
    if lambda_f is None:
        if td == 0:
            raise TuningError("zero dead time needs an explicit lambda_f")
        lambda_f = td
    if lambda_f <= 0:
        raise TuningError(f"lambda_f must be > 0, got {lambda_f}")

    tau_i = tau + td / 2.0
    tau_d = tau * td / (2.0 * tau + td)
    kc = (2.0 * tau + td) / (el.gain * (2.0 * lambda_f + td))
    return PidSettings(kc=kc, tau_i=tau_i, tau_d=tau_d, lambda_f=lambda_f,
                       derivative_filter_ratio=derivative_filter_ratio)


def tune_plan(tm: TransferMatrix, plan: PairingPlan,
              lambda_overrides: Optional[Mapping[int, float]] = None,
              derivative_filter_ratio: float = DEFAULT_FILTER_RATIO) -> List[TunedLoop]:
    """One PID per pair, in output order.

    lambda_overrides maps a 0-based output index to its filter time constant.
    """
    overrides = dict(lambda_overrides or {})
    paired_outputs = {pair.output for pair in plan.pairs}
    stray = sorted(set(overrides) - paired_outputs)
    if stray:
        raise TuningError(f"lambda_f given for unpaired output(s) {', '.join(str(i + 1) for i in stray)}")

    loops = []
    for pair in sorted(plan.pairs, key=lambda p: p.output):
        el = tm.element(pair.output, pair.input)
        try:
            settings = imc_pid_fopdt(el, overrides.get(pair.output), derivative_filter_ratio)
        except TuningError as exc:
            raise TuningError(f"loop {pair.label}: {exc}") from exc
        logger.info("Loop %s: kc=%.4f tau_i=%.3f tau_d=%.3f (lambda_f=%.3f)",
                    pair.label, settings.kc, settings.tau_i, settings.tau_d, settings.lambda_f)
        loops.append(TunedLoop(pair.output, pair.input, pair.label, settings))
    return loops
