"""Analytic model of the coupler + fiber-loop + click-detector chain.

A light pulse enters port 1 of a variable-ratio coupler.  Port 3 feeds a
binary click detector, ports 2 and 4 are connected through a fiber delay
loop, so a photon that stays in the loop comes back to the coupler once per
round trip.  Detection in round trip k defines time-multiplexed channel k.

The per-channel transmissions are

    h_1 = t0 * theta * t13 * eta
    h_k = t0 * t14 * theta**k * tl**(k-1) * t23 * t24**(k-2) * eta   (k >= 2)

so that from channel 3 on the profile is a geometric series with ratio
theta * tl * t24.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateDeviceError,
    DomainError,
    ParameterError,
    UndefinedRatioError,
)

#: Default channel truncation for analytic work.  The tail ratio is below
#: 0.9 for any accepted parameter set, so mass beyond 30 channels is
#: negligible at realistic losses; the remainder is carried explicitly so
#: normalization stays exact anyway.
DEFAULT_N_CHANNELS = 30

#: Series convergence guard: the geometric tail ratio theta*tl*t24 must stay
#: below 1 by at least this margin.
CONVERGENCE_MARGIN = 1e-9


def _check_unit_interval(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class CouplerSetting:
    """Intensity transmissions t_ij from port i to port j of the coupler.

    The four coefficients are accepted without enforcing unitarity
    (t13 + t14 may differ from 1): the physical coupler is lossy and its
    excess loss is factored into the separate ``theta`` coefficient.

    An idealized coupler is described by the single division ratio r via
    t13 = t24 = r and t14 = t23 = 1 - r; use :meth:`ideal`.
    """

    t13: float
    t14: float
    t23: float
    t24: float
    r: float | None = None  # division ratio when built via ideal()

    def __post_init__(self) -> None:
        for name in ("t13", "t14", "t23", "t24"):
            _check_unit_interval(name, getattr(self, name))
        if self.r is not None:
            _check_unit_interval("r", self.r)

    @classmethod
    def ideal(cls, r: float) -> "CouplerSetting":
        """Idealized single-parameter coupler with division ratio r."""
        _check_unit_interval("r", r)
        return cls(t13=r, t14=1.0 - r, t23=1.0 - r, t24=r, r=r)


@dataclass(frozen=True)
class DeviceParams:
    """All physical coefficients of the loop detector.

    Transmissions and probabilities are dimensionless in [0, 1]; times are
    in nanoseconds.  The loop delay must exceed the detector dead time --
    that is the whole point of the delay line.
    """

    t0: float = 0.92  # input coupling transmission
    theta: float = 0.955  # coupler excess transmission per pass
    tl: float = 0.94  # fiber-loop transmission per round trip
    eta: float = 0.6  # detector quantum efficiency
    coupler: CouplerSetting = field(default_factory=lambda: CouplerSetting.ideal(0.446))
    dark_prob_per_bin: float = 2e-7
    afterpulse_prob: float = 8e-3
    afterpulse_decay_ns: float = 200.0
    dead_time_ns: float = 50.0
    loop_delay_ns: float = 60.0
    bin_width_ns: float = 5.0
    duty_factor_q: float = 0.17

    def __post_init__(self) -> None:
        for name in ("t0", "theta", "tl", "eta", "dark_prob_per_bin",
                     "afterpulse_prob", "duty_factor_q"):
            _check_unit_interval(name, getattr(self, name))
        if self.dead_time_ns <= 0:
            raise ParameterError("dead_time_ns must be positive")
        if self.bin_width_ns <= 0:
            raise ParameterError("bin_width_ns must be positive")
        if self.afterpulse_decay_ns <= 0:
            raise ParameterError("afterpulse_decay_ns must be positive")
        if self.loop_delay_ns <= self.dead_time_ns:
            raise ParameterError(
                "loop_delay_ns must exceed dead_time_ns "
                f"({self.loop_delay_ns} <= {self.dead_time_ns})"
            )

    @property
    def tail_ratio(self) -> float:
        """Geometric ratio h_{k+1}/h_k of the channel profile for k >= 2."""
        return self.theta * self.tl * self.coupler.t24

    def with_ratio(self, r: float) -> "DeviceParams":
        """Copy of these parameters with an ideal coupler at division ratio r."""
        return replace(self, coupler=CouplerSetting.ideal(r))


def reference_device(r: float = 0.446, **overrides) -> DeviceParams:
    """The measured reference device profile used throughout the toolkit.

    eta=0.6, theta=0.955, tl=0.94, t0=0.92, dark probability 2e-7 per 5 ns
    bin, afterpulse probability 8e-3, dead time 50 ns, loop delay 60 ns,
    duty factor 0.17.  ``r`` selects the ideal-coupler division ratio.
    """
    return DeviceParams(coupler=CouplerSetting.ideal(r), **overrides)


@dataclass(frozen=True)
class ChannelProfile:
    """Per-channel detection transmissions h_1..h_N plus the geometric tail.

    ``remainder`` carries the transmission mass beyond channel N so that
    sum(h) + remainder equals the total transmission exactly.
    """

    h: np.ndarray
    remainder: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))
        if self.h.ndim != 1 or self.h.size < 1:
            raise ParameterError("profile needs at least one channel")
        if np.any(self.h < 0) or np.any(self.h > 1):
            raise ParameterError("channel transmissions must lie in [0, 1]")
        if self.remainder < 0:
            raise ParameterError("remainder must be nonnegative")

    @property
    def n_channels(self) -> int:
        return int(self.h.size)

    @property
    def total(self) -> float:
        """Total transmission T = sum of all channels including the tail."""
        return float(self.h.sum() + self.remainder)

    def truncated(self, n_channels: int) -> "ChannelProfile":
        """Profile counting only the first ``n_channels``; the rest is
        treated as lost light (folded into the remainder)."""
        if not 1 <= n_channels <= self.n_channels:
            raise ParameterError(
                f"n_channels must be in [1, {self.n_channels}], got {n_channels}"
            )
        dropped = float(self.h[n_channels:].sum())
        return ChannelProfile(self.h[:n_channels].copy(), self.remainder + dropped)


def _check_convergence(params: DeviceParams) -> None:
    c = params.coupler
    if c.t14 * c.t23 == 0.0:
        # No light ever reaches channels k >= 2, so the series is finite
        # regardless of the tail ratio.
        return
    if params.tail_ratio >= 1.0 - CONVERGENCE_MARGIN:
        raise DomainError(
            "channel series does not converge: theta*tl*t24 = "
            f"{params.tail_ratio!r} is too close to or above 1"
        )


def channel_transmissions(params: DeviceParams,
                          n_channels: int = DEFAULT_N_CHANNELS) -> ChannelProfile:
    """Per-channel transmissions h_1..h_N and the closed-form tail beyond N."""
    if n_channels < 1:
        raise ParameterError(f"n_channels must be >= 1, got {n_channels}")
    _check_convergence(params)
    c = params.coupler
    k = np.arange(2, n_channels + 1, dtype=float)
    h = np.empty(n_channels)
    h[0] = params.t0 * params.theta * c.t13 * params.eta
    if n_channels > 1:
        h[1:] = (params.t0 * c.t14 * params.theta ** k
                 * params.tl ** (k - 1.0) * c.t23 * c.t24 ** (k - 2.0)
                 * params.eta)
    # Tail: for k >= 2 the profile is geometric with ratio rho, so the mass
    # beyond N is h_{N+1} / (1 - rho).
    rho = params.tail_ratio
    if c.t14 * c.t23 == 0.0:
        return ChannelProfile(h, 0.0)
    if n_channels == 1:
        h_next = (params.t0 * c.t14 * params.theta ** 2 * params.tl
                  * c.t23 * params.eta)
    else:
        h_next = h[-1] * rho
    remainder = h_next / (1.0 - rho)
    return ChannelProfile(h, remainder)


def total_transmission(params: DeviceParams) -> float:
    """Closed-form total transmission T = sum over all channels.

    Equals the infinite channel sum; requires theta*tl*t24 < 1.
    """
    _check_convergence(params)
    c = params.coupler
    if c.t14 * c.t23 == 0.0:
        # Channels beyond the first carry no light.
        return params.eta * params.t0 * params.theta * c.t13
    if c.t24 == 0.0:
        # Only channels 1 and 2 exist; the closed form below is singular.
        return (params.eta * params.t0 * params.theta
                * (c.t13 + c.t14 * params.theta * params.tl * c.t23))
    bracket = (params.theta * (c.t13 * c.t24 - c.t14 * c.t23) / c.t24
               - c.t14 * c.t23 * params.theta
               / (c.t24 * (params.tl * c.t24 * params.theta - 1.0)))
    return params.eta * params.t0 * bracket


def total_transmission_simplified(r: float, params: DeviceParams,
                                  first_term_only: bool = False) -> float:
    """Simplified total transmission for the ideal coupler at ratio r.

    The first term alone, eta*t0*(2*tl*theta - 1)/tl, is the r-independent
    part used by the loss calibration; the second term carries the weak r
    dependence.
    """
    _check_unit_interval("r", r)
    a = params.tl * params.theta
    if r * a >= 1.0 - CONVERGENCE_MARGIN and not first_term_only:
        raise DomainError(f"r*tl*theta = {r * a!r} too close to or above 1")
    first = params.eta * params.t0 * (2.0 * a - 1.0) / params.tl
    if first_term_only:
        return first
    second = params.eta * params.t0 * (a - 1.0) ** 2 / (params.tl * (r * a - 1.0))
    return first - second


def normalized_channels(profile: ChannelProfile) -> np.ndarray:
    """Normalized channel probabilities H_k = h_k / T.

    Together with the normalized remainder these sum to 1 exactly.
    """
    total = profile.total
    if total <= 0.0:
        raise DegenerateDeviceError("total transmission is zero")
    return profile.h / total


def channel_ratio_statistic(H, k_min: int = 2, k_max: int = 6) -> float:
    """Mean over k of H_{k+1} / (H_k * H_1).

    For the ideal-coupler model this statistic is nearly independent of r
    and k and approximates 2*theta*tl - 1, which is what the loss
    calibration inverts.  ``k_min``/``k_max`` select the 1-indexed channels
    entering the mean (k and k+1 must both be available).
    """
    H = np.asarray(H, dtype=float)
    if H.size < 3:
        raise UndefinedRatioError("need at least 3 channels")
    k_hi = min(k_max, H.size - 1)
    if k_hi < k_min:
        raise UndefinedRatioError("channel range is empty")
    ks = np.arange(k_min, k_hi + 1)
    denom = H[ks - 1] * H[0]
    if H[0] == 0.0 or np.any(denom == 0.0):
        raise UndefinedRatioError("zero-valued channel in denominator")
    return float(np.mean(H[ks] / denom))
