"""Heralded postselection with perfectly correlated photon pairs.

A pair source emits n photons into each of two arms with the source's
photon-number statistics.  The herald arm is measured by the loop detector;
pulses whose herald outcome satisfies the accept rule keep their signal-arm
partner.  The conditioned photon-number pmf is

    pmf_out(n)  propto  pmf_in(n) * P(accept | n photons into herald arm)

and the figure of merit is w_M = c_M(out) / c_M(in).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clickstats import (
    PhotonSource,
    fock_click_distribution,
    poisson_truncation,
)
from .device import ChannelProfile, DeviceParams
from .errors import NoAcceptanceError, ParameterError

#: Supported herald accept rules.
ACCEPT_RULES = ("exactly-one", "one-or-more", "first-channel-only")


def acceptance_probability(rule: str, n: int, profile: ChannelProfile) -> float:
    """P(herald accepted | n photons into the herald arm)."""
    h = profile.h
    total = float(h.sum())
    if rule == "exactly-one":
        return fock_click_distribution(n, profile).p1
    if rule == "one-or-more":
        return 1.0 - (1.0 - total) ** n
    if rule == "first-channel-only":
        # Every photon lost or in channel 1, with at least one in channel 1.
        lost = 1.0 - total
        return (lost + float(h[0])) ** n - lost ** n
    raise ParameterError(f"unknown accept rule {rule!r}; choose from {ACCEPT_RULES}")


@dataclass(frozen=True)
class PostselectResult:
    cm_in: float
    cm_out: float
    w_M: float  # cm_out / cm_in; NaN when cm_in = 0
    herald_rate: float
    conditioned_pmf: np.ndarray


def _thin_pmf(pmf: np.ndarray, transmission: float) -> np.ndarray:
    """Binomial loss applied to a photon-number pmf."""
    if transmission >= 1.0:
        return pmf
    n_max = pmf.size - 1
    out = np.zeros_like(pmf)
    for n, w in enumerate(pmf):
        if w == 0.0:
            continue
        for m in range(n + 1):
            out[m] += w * math.comb(n, m) * transmission ** m \
                * (1.0 - transmission) ** (n - m)
    return out


def _content(pmf: np.ndarray) -> float:
    p_ge1 = float(pmf[1:].sum())
    if p_ge1 <= 0.0:
        return 0.0
    return float(pmf[2:].sum()) / p_ge1


def postselect(source: PhotonSource, herald_profile: ChannelProfile,
               rule: str = "exactly-one",
               signal_transmission: float = 1.0,
               n_max: int | None = None,
               acceptance=None) -> PostselectResult:
    """Condition the signal arm on the herald-arm accept rule.

    ``signal_transmission`` models imperfect collection on the signal arm
    (default 1: ideal pair correlation and unit collection).  ``acceptance``
    may supply an externally estimated P(accept | n) array (e.g. from noisy
    Monte Carlo herald runs), overriding the analytic rule.
    """
    if not 0.0 < signal_transmission <= 1.0:
        raise ParameterError("signal_transmission must lie in (0, 1]")
    if n_max is None:
        n_max = (poisson_truncation(source.mu) if source.kind == "poissonian"
                 else None)
    pmf = source.pmf_array(n_max)
    if acceptance is None:
        accept = np.array([acceptance_probability(rule, n, herald_profile)
                           for n in range(pmf.size)])
    else:
        accept = np.asarray(acceptance, dtype=float)
        if accept.size < pmf.size:
            raise ParameterError(
                f"acceptance table too short: {accept.size} < {pmf.size}")
        accept = accept[: pmf.size]

    joint = pmf * accept
    herald_rate = float(joint.sum())
    if herald_rate <= 0.0:
        raise NoAcceptanceError("accept rule never fires for this source")
    conditioned = joint / herald_rate
    output_pmf = _thin_pmf(conditioned, signal_transmission)

    cm_in = _content(pmf)
    cm_out = _content(output_pmf)
    w_M = cm_out / cm_in if cm_in > 0.0 else math.nan
    return PostselectResult(cm_in=cm_in, cm_out=cm_out, w_M=w_M,
                            herald_rate=herald_rate,
                            conditioned_pmf=output_pmf)


def herald_acceptance_from_mc(params: DeviceParams, n_max: int,
                              rule: str, n_trials: int, seed: int,
                              n_channels: int = 15,
                              workers: int = 1) -> np.ndarray:
    """Empirical P(accept | n) for n = 0..n_max from noisy herald runs.

    Used instead of the analytic Fock statistics when dark counts and
    afterpulses in the herald arm should be taken into account.
    """
    from .montecarlo import empirical_click_distribution, run_simulation

    if rule not in ACCEPT_RULES:
        raise ParameterError(f"unknown accept rule {rule!r}")
    accept = np.zeros(n_max + 1)
    for n in range(n_max + 1):
        result = run_simulation(PhotonSource.fock(n), params, n_trials,
                                seed + n, workers=workers)
        emp = empirical_click_distribution(result, n_channels=n_channels)
        if rule == "exactly-one":
            accept[n] = emp.p1
        elif rule == "one-or-more":
            accept[n] = 1.0 - emp.p0
        else:  # first-channel-only needs the per-channel pattern
            raise ParameterError(
                "first-channel-only is not available on the Monte Carlo path")
    return accept


def wm_curve(mu_grid, herald_profile: ChannelProfile,
             rule: str = "exactly-one",
             signal_transmission: float = 1.0,
             acceptance=None) -> list[dict]:
    """Postselection summary for each mu; failed points become NaN rows."""
    rows = []
    for mu in mu_grid:
        row = {"mu": float(mu)}
        try:
            res = postselect(PhotonSource.poissonian(mu), herald_profile,
                             rule=rule, signal_transmission=signal_transmission,
                             acceptance=acceptance)
            row.update(cm_in=res.cm_in, cm_out=res.cm_out, w_M=res.w_M,
                       herald_rate=res.herald_rate)
        except (NoAcceptanceError, ParameterError):
            row.update(cm_in=math.nan, cm_out=math.nan, w_M=math.nan,
                       herald_rate=math.nan)
        rows.append(row)
    return rows
