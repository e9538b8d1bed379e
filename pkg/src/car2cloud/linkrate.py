"""Per-resource-block uplink rate model: truncated Shannon with speed penalty.

Measured LTE uplink rate surfaces are not publicly available, so the default
model is an attenuated Shannon bound truncated at a 64-QAM-class spectral
efficiency ceiling, multiplied by a linear speed penalty that saturates at
the reference speed:

    rate = min(beta * log2(1 + snr_lin), eta_max) * B_rb * phi(v)
    phi(v) = 1 - penalty * min(v, v_ref) / v_ref

Below the snr_min outage cutoff the rate is zero.  Any replacement model is
a plain callable (snr_db, speed) -> bit/s per RB; the scheduler and engine
only rely on that signature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import ConfigError

RateModel = Callable[[float, float], float]


@dataclass(frozen=True)
class RbRateParams:
    rb_bandwidth_hz: float = 180_000.0
    attenuation_beta: float = 0.6
    eta_max: float = 5.55             # bit/s/Hz ceiling
    snr_min_db: float = -10.0         # outage cutoff
    speed_penalty_at_vmax: float = 0.3
    v_ref: float = 36.11              # m/s

    def __post_init__(self) -> None:
        if not 0.0 < self.attenuation_beta <= 1.0:
            raise ConfigError("linkrate.attenuation_beta must be in (0, 1]")
        if self.eta_max <= 0:
            raise ConfigError("linkrate.eta_max must be positive")
        if not 0.0 <= self.speed_penalty_at_vmax < 1.0:
            raise ConfigError("linkrate.speed_penalty_at_vmax must be in [0, 1)")
        if self.rb_bandwidth_hz <= 0:
            raise ConfigError("linkrate.rb_bandwidth_hz must be positive")
        if self.v_ref <= 0:
            raise ConfigError("linkrate.v_ref must be positive")


def rb_rate(snr_db: float, speed: float, params: RbRateParams | None = None) -> float:
    """Achievable uplink rate of one resource block, in bit/s."""
    p = params or RbRateParams()
    if snr_db < p.snr_min_db:
        return 0.0
    snr_lin = 10.0 ** (snr_db / 10.0)
    efficiency = min(p.attenuation_beta * math.log2(1.0 + snr_lin), p.eta_max)
    penalty = 1.0 - p.speed_penalty_at_vmax * min(speed, p.v_ref) / p.v_ref
    return efficiency * p.rb_bandwidth_hz * penalty


def cell_peak_rate(
    n_rb: float, snr_db: float, speed: float, params: RbRateParams | None = None
) -> float:
    """Rate of a user holding n_rb resource blocks alone."""
    if n_rb < 0:
        raise ConfigError("n_rb must be non-negative")
    return n_rb * rb_rate(snr_db, speed, params)


def model_from_params(params: RbRateParams | None = None) -> RateModel:
    """Bind parameters into the callable form the scheduler and engine use."""
    p = params or RbRateParams()

    def model(snr_db: float, speed: float) -> float:
        return rb_rate(snr_db, speed, p)

    return model
