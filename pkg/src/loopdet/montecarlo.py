"""Stochastic pulse-by-pulse simulation of the physical loop detector.

Photons are routed pass-by-pass through the coupler and delay loop (rather
than sampled from the analytic channel profile, so the analytic model is
validated independently).  Detector imperfections are applied on top:
photons arriving in the same channel merge into one click, the dead time
paralyzes the detector, dark counts appear uniformly over the acquisition
window, and every registered click may trigger at most one afterpulse at an
exponentially distributed delay (suppressed while the detector is dead).

Reproducibility contract: trials are processed in fixed-size batches and
each batch owns a counter-based random substream keyed by (seed, batch
index), so results are bit-identical for any worker count.
"""

from __future__ import annotations

import heapq
import json
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .clickstats import ClickDistribution, PhotonSource
from .device import DeviceParams
from .errors import ParameterError

ORIGIN_DARK = 0
ORIGIN_AFTERPULSE = -1

#: Fixed batch size; part of the reproducibility contract (results depend on
#: it, so it is a constant rather than a tuning knob).
BATCH_SIZE = 8192


@dataclass(frozen=True)
class SimSettings:
    """Acquisition-window settings of the simulated time-of-flight recorder."""

    time_offset_ns: float = 100.0  # arrival time of channel 1
    n_bins: int = 1024
    max_channels: int = 512  # photons still looping beyond this are dropped

    def __post_init__(self) -> None:
        if self.n_bins < 1 or self.max_channels < 1:
            raise ParameterError("n_bins and max_channels must be >= 1")
        if self.time_offset_ns < 0:
            raise ParameterError("time_offset_ns must be >= 0")


@dataclass(frozen=True)
class PulseOutcome:
    """Registered clicks of a single pulse.

    ``click_channels`` uses 0 for noise clicks (dark counts and
    afterpulses) and k >= 1 for time-multiplexed channel k; ``origins``
    additionally distinguishes afterpulses (-1) from dark counts (0).
    """

    click_times_ns: np.ndarray
    click_channels: np.ndarray
    n_photons_generated: int
    origins: np.ndarray


@dataclass(frozen=True)
class SimulationResult:
    """Flat event record of a full run: one row per registered click."""

    params: DeviceParams
    settings: SimSettings
    seed: int
    n_trials: int
    pulse: np.ndarray      # pulse index of each click
    time_ns: np.ndarray    # click time
    origin: np.ndarray     # channel k >= 1, ORIGIN_DARK, or ORIGIN_AFTERPULSE
    n_photons: np.ndarray  # photons generated per pulse

    def outcome(self, i: int) -> PulseOutcome:
        mask = self.pulse == i
        origins = self.origin[mask]
        return PulseOutcome(
            click_times_ns=self.time_ns[mask],
            click_channels=np.maximum(origins, 0),
            n_photons_generated=int(self.n_photons[i]),
            origins=origins,
        )


@dataclass(frozen=True)
class TofHistogram:
    """Binned time-of-flight click counts."""

    bin_width_ns: float
    counts: np.ndarray
    n_trials: int
    overflow: int = 0

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def probabilities(self) -> np.ndarray:
        """Per-bin detection probability (counts / trials)."""
        return self.counts / float(self.n_trials)


class FalseClickBounds(NamedTuple):
    cm_bound: float  # bound on the afterpulse contribution to c_M
    pm_bound: float  # bound on the afterpulse contribution to p_M


def false_cm_bound(params: DeviceParams, p1: float) -> FalseClickBounds:
    """Upper bounds on afterpulse-induced false multichannel detections.

    An afterpulse can mimic a channel click only when it falls inside one of
    the accepted channel windows, which cover a fraction q of the time axis;
    hence c_M^false < p_ap * q and p_M^false < p1 * p_ap * q.
    """
    cm = params.afterpulse_prob * params.duty_factor_q
    return FalseClickBounds(cm_bound=cm, pm_bound=p1 * cm)


def _batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    key = np.array([seed, batch_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_photon_numbers(source: PhotonSource, rng: np.random.Generator,
                         size: int) -> np.ndarray:
    if source.kind == "poissonian":
        return rng.poisson(source.mu, size)
    if source.kind == "fock":
        return np.full(size, source.n, dtype=np.int64)
    return rng.choice(source.pmf.size, size=size, p=source.pmf)


def _route_photons(params: DeviceParams, rng: np.random.Generator,
                   pulse_of_photon: np.ndarray,
                   max_channels: int) -> tuple[np.ndarray, np.ndarray]:
    """Pass-by-pass routing of every photon; returns (pulse, channel) of
    detected photons."""
    c = params.coupler
    n_photons = pulse_of_photon.size
    alive = rng.random(n_photons) < params.t0
    idx = np.nonzero(alive)[0]

    det_pulse = []
    det_channel = []
    k = 1
    while idx.size and k <= max_channels:
        # Coupler pass: exit toward the detector, stay in the loop, or be
        # lost to excess loss.  Ports differ between the first pass (input
        # port 1) and all later passes (loop port 2).
        p_det = params.theta * (c.t13 if k == 1 else c.t23)
        p_loop = params.theta * (c.t14 if k == 1 else c.t24)
        u = rng.random(idx.size)
        to_det = u < p_det
        to_loop = (~to_det) & (u < p_det + p_loop)

        exiting = idx[to_det]
        if exiting.size:
            detected = rng.random(exiting.size) < params.eta
            hit = exiting[detected]
            det_pulse.append(pulse_of_photon[hit])
            det_channel.append(np.full(hit.size, k, dtype=np.int32))

        looping = idx[to_loop]
        if looping.size:
            survived = rng.random(looping.size) < params.tl
            idx = looping[survived]
        else:
            idx = looping
        k += 1

    if det_pulse:
        return np.concatenate(det_pulse), np.concatenate(det_channel)
    return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32))


def _process_flagged_pulse(times, origins, ap_flags, ap_delays,
                           dead_time: float) -> list[tuple[float, int]]:
    """Sequential dead-time / afterpulse processing of one pulse's candidate
    clicks.  Candidates must be pre-sorted by time; afterpulse candidates are
    injected on the fly.  Afterpulses never chain."""
    order = np.argsort(times, kind="stable")
    queue: list[tuple[float, int, int, bool, float]] = []
    for seq, j in enumerate(order):
        heapq.heappush(queue, (float(times[j]), 0, seq, bool(ap_flags[j]),
                               float(ap_delays[j]), int(origins[j])))
    accepted: list[tuple[float, int]] = []
    last = -np.inf
    seq = len(order)
    while queue:
        t, _, _, ap_flag, ap_delay, origin = heapq.heappop(queue)
        if t - last < dead_time:
            continue  # detector still paralyzed; candidate vanishes
        accepted.append((t, origin))
        last = t
        if ap_flag:
            # tie-break key 1 sorts a coincident afterpulse after real clicks
            heapq.heappush(queue, (t + ap_delay, 1, seq, False, 0.0,
                                   ORIGIN_AFTERPULSE))
            seq += 1
    return accepted


def _simulate_batch(source: PhotonSource, params: DeviceParams,
                    settings: SimSettings, seed: int, batch_index: int,
                    n_pulses: int):
    rng = _batch_rng(seed, batch_index)
    window_ns = settings.n_bins * params.bin_width_ns

    n_photons = _draw_photon_numbers(source, rng, n_pulses)
    pulse_of_photon = np.repeat(np.arange(n_pulses, dtype=np.int64), n_photons)
    ph_pulse, ph_channel = _route_photons(params, rng, pulse_of_photon,
                                          settings.max_channels)

    # Merge photons arriving in the same channel of the same pulse: the
    # detector produces a single avalanche regardless of multiplicity.
    key = ph_pulse * np.int64(settings.max_channels + 1) + ph_channel
    key = np.unique(key)
    ph_pulse = key // (settings.max_channels + 1)
    ph_channel = (key % (settings.max_channels + 1)).astype(np.int32)
    ph_time = (settings.time_offset_ns
               + (ph_channel - 1) * params.loop_delay_ns)

    # Dark counts: per-bin probability, uniform over the acquisition window.
    dark_counts = rng.binomial(settings.n_bins, params.dark_prob_per_bin,
                               n_pulses)
    dk_pulse = np.repeat(np.arange(n_pulses, dtype=np.int64), dark_counts)
    dk_time = rng.uniform(0.0, window_ns, dk_pulse.size)

    # Afterpulse pre-draws for every candidate click.  Flags only take
    # effect if the candidate actually registers.
    ph_ap_flag = rng.random(ph_pulse.size) < params.afterpulse_prob
    ph_ap_delay = rng.exponential(params.afterpulse_decay_ns, ph_pulse.size)
    dk_ap_flag = rng.random(dk_pulse.size) < params.afterpulse_prob
    dk_ap_delay = rng.exponential(params.afterpulse_decay_ns, dk_pulse.size)

    # Fast path: pulses with neither dark counts nor afterpulse candidates.
    # Same-pulse photon clicks sit one loop delay apart, and the loop delay
    # exceeds the dead time by construction, so they all register.
    flagged = np.zeros(n_pulses, dtype=bool)
    flagged[dk_pulse] = True
    flagged[ph_pulse[ph_ap_flag]] = True

    fast = ~flagged[ph_pulse]
    out_pulse = [ph_pulse[fast]]
    out_time = [ph_time[fast]]
    out_origin = [ph_channel[fast].astype(np.int32)]

    if flagged.any():
        cand_pulse = np.concatenate([ph_pulse[~fast], dk_pulse])
        cand_time = np.concatenate([ph_time[~fast], dk_time])
        cand_origin = np.concatenate(
            [ph_channel[~fast].astype(np.int32),
             np.full(dk_pulse.size, ORIGIN_DARK, dtype=np.int32)])
        cand_ap_flag = np.concatenate([ph_ap_flag[~fast], dk_ap_flag])
        cand_ap_delay = np.concatenate([ph_ap_delay[~fast], dk_ap_delay])
        order = np.lexsort((cand_time, cand_pulse))
        cand_pulse = cand_pulse[order]
        bounds = np.searchsorted(cand_pulse,
                                 np.arange(n_pulses + 1, dtype=np.int64))
        t_s, o_s = cand_time[order], cand_origin[order]
        af_s, ad_s = cand_ap_flag[order], cand_ap_delay[order]
        for p in np.nonzero(flagged)[0]:
            lo, hi = bounds[p], bounds[p + 1]
            if lo == hi:
                continue
            accepted = _process_flagged_pulse(
                t_s[lo:hi], o_s[lo:hi], af_s[lo:hi], ad_s[lo:hi],
                params.dead_time_ns)
            if accepted:
                out_pulse.append(np.full(len(accepted), p, dtype=np.int64))
                out_time.append(np.array([a[0] for a in accepted]))
                out_origin.append(np.array([a[1] for a in accepted],
                                           dtype=np.int32))

    pulse = np.concatenate(out_pulse)
    time = np.concatenate(out_time)
    origin = np.concatenate(out_origin)
    order = np.lexsort((origin, time, pulse))
    return pulse[order], time[order], origin[order], n_photons


def _batch_worker(args):
    return _simulate_batch(*args)


def run_simulation(source: PhotonSource, params: DeviceParams,
                   n_trials: int, seed: int, workers: int = 1,
                   settings: SimSettings | None = None) -> SimulationResult:
    """Simulate ``n_trials`` pulses; deterministic for a given seed and
    settings, independent of ``workers``."""
    if n_trials < 1:
        raise ParameterError("n_trials must be >= 1")
    if seed < 0:
        raise ParameterError("seed must be a nonnegative integer")
    settings = settings or SimSettings()

    n_batches = (n_trials + BATCH_SIZE - 1) // BATCH_SIZE
    jobs = [(source, params, settings, seed, b,
             min(BATCH_SIZE, n_trials - b * BATCH_SIZE))
            for b in range(n_batches)]
    if workers > 1 and n_batches > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_worker, jobs, chunksize=4))
    else:
        results = [_batch_worker(job) for job in jobs]

    pulses, times, origins, photons = [], [], [], []
    for b, (p, t, o, nph) in enumerate(results):
        pulses.append(p + b * BATCH_SIZE)
        times.append(t)
        origins.append(o)
        photons.append(nph)
    return SimulationResult(
        params=params, settings=settings, seed=seed, n_trials=n_trials,
        pulse=np.concatenate(pulses), time_ns=np.concatenate(times),
        origin=np.concatenate(origins), n_photons=np.concatenate(photons))


def simulate_pulse(source: PhotonSource, params: DeviceParams,
                   rng: np.random.Generator,
                   settings: SimSettings | None = None) -> PulseOutcome:
    """Single-pulse simulation drawing from the supplied random stream."""
    settings = settings or SimSettings()
    _, time, origin, n_photons = _simulate_batch_with_rng(
        source, params, settings, rng)
    return PulseOutcome(click_times_ns=time,
                        click_channels=np.maximum(origin, 0),
                        n_photons_generated=int(n_photons[0]),
                        origins=origin)


def _simulate_batch_with_rng(source, params, settings, rng):
    """One-pulse variant of the batch engine using an external generator."""
    n_photons = _draw_photon_numbers(source, rng, 1)
    pulse_of_photon = np.zeros(int(n_photons[0]), dtype=np.int64)
    ph_pulse, ph_channel = _route_photons(params, rng, pulse_of_photon,
                                          settings.max_channels)
    key = np.unique(ph_channel)
    ph_channel = key.astype(np.int32)
    ph_pulse = np.zeros(ph_channel.size, dtype=np.int64)
    ph_time = settings.time_offset_ns + (ph_channel - 1) * params.loop_delay_ns

    window_ns = settings.n_bins * params.bin_width_ns
    n_dark = int(rng.binomial(settings.n_bins, params.dark_prob_per_bin))
    dk_time = rng.uniform(0.0, window_ns, n_dark)

    ph_ap_flag = rng.random(ph_channel.size) < params.afterpulse_prob
    ph_ap_delay = rng.exponential(params.afterpulse_decay_ns, ph_channel.size)
    dk_ap_flag = rng.random(n_dark) < params.afterpulse_prob
    dk_ap_delay = rng.exponential(params.afterpulse_decay_ns, n_dark)

    times = np.concatenate([ph_time, dk_time])
    origins = np.concatenate([ph_channel,
                              np.full(n_dark, ORIGIN_DARK, dtype=np.int32)])
    ap_flags = np.concatenate([ph_ap_flag, dk_ap_flag])
    ap_delays = np.concatenate([ph_ap_delay, dk_ap_delay])
    accepted = _process_flagged_pulse(times, origins, ap_flags, ap_delays,
                                      params.dead_time_ns)
    time = np.array([a[0] for a in accepted])
    origin = np.array([a[1] for a in accepted], dtype=np.int32)
    order = np.argsort(time, kind="stable")
    return (np.zeros(time.size, dtype=np.int64), time[order], origin[order],
            n_photons)


def accumulate_histogram(result: SimulationResult) -> TofHistogram:
    """Bin all registered clicks into the acquisition window.

    Clicks beyond the window are tallied as overflow, never silently
    dropped.
    """
    bw = result.params.bin_width_ns
    n_bins = result.settings.n_bins
    bins = np.floor(result.time_ns / bw).astype(np.int64)
    in_window = (bins >= 0) & (bins < n_bins)
    counts = np.bincount(bins[in_window], minlength=n_bins)
    return TofHistogram(bin_width_ns=bw, counts=counts,
                        n_trials=result.n_trials,
                        overflow=int((~in_window).sum()))


@dataclass(frozen=True)
class EmpiricalClickDistribution:
    """Click-count pmf estimated from simulated pulses, with standard errors."""

    distribution: ClickDistribution
    stderr: np.ndarray
    n_trials: int

    @property
    def p0(self) -> float:
        return self.distribution.p0

    @property
    def p1(self) -> float:
        return self.distribution.p1

    @property
    def pM(self) -> float:
        return self.distribution.pM


def empirical_click_distribution(result: SimulationResult,
                                 n_channels: int = 15) -> EmpiricalClickDistribution:
    """Count distinct channel-window clicks per pulse.

    A click is attributed to channel k when it falls within the accepted
    window of width q * loop_delay centered on that channel's arrival time;
    this is how noise clicks can masquerade as channel detections.
    """
    p = result.params
    s = result.settings
    half_width = 0.5 * p.duty_factor_q * p.loop_delay_ns
    rel = (result.time_ns - s.time_offset_ns) / p.loop_delay_ns
    k_near = np.rint(rel).astype(np.int64) + 1
    center = s.time_offset_ns + (k_near - 1) * p.loop_delay_ns
    in_window = ((np.abs(result.time_ns - center) <= half_width)
                 & (k_near >= 1) & (k_near <= n_channels))
    key = result.pulse[in_window] * np.int64(n_channels + 1) + k_near[in_window]
    key = np.unique(key)
    clicks_per_pulse = np.bincount((key // (n_channels + 1)).astype(np.int64),
                                   minlength=result.n_trials)
    pmf_counts = np.bincount(clicks_per_pulse, minlength=n_channels + 1)
    pmf = pmf_counts / float(result.n_trials)
    stderr = np.sqrt(pmf * (1.0 - pmf) / result.n_trials)
    return EmpiricalClickDistribution(distribution=ClickDistribution(pmf),
                                      stderr=stderr, n_trials=result.n_trials)


def histogram_to_csv(hist: TofHistogram, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_index", "time_ns", "count", "probability"])
        for i, count in enumerate(hist.counts):
            writer.writerow([i, f"{i * hist.bin_width_ns:.6g}", int(count),
                             repr(count / hist.n_trials)])


def histogram_to_json(hist: TofHistogram, path, *, seed: int | None = None,
                      params: DeviceParams | None = None) -> None:
    meta = {
        "bin_width_ns": hist.bin_width_ns,
        "n_bins": hist.n_bins,
        "n_trials": hist.n_trials,
        "overflow": hist.overflow,
        "seed": seed,
    }
    if params is not None:
        meta["params"] = {
            "t0": params.t0, "theta": params.theta, "tl": params.tl,
            "eta": params.eta,
            "coupler": {"t13": params.coupler.t13, "t14": params.coupler.t14,
                        "t23": params.coupler.t23, "t24": params.coupler.t24,
                        "r": params.coupler.r},
            "dark_prob_per_bin": params.dark_prob_per_bin,
            "afterpulse_prob": params.afterpulse_prob,
            "afterpulse_decay_ns": params.afterpulse_decay_ns,
            "dead_time_ns": params.dead_time_ns,
            "loop_delay_ns": params.loop_delay_ns,
            "bin_width_ns": params.bin_width_ns,
            "duty_factor_q": params.duty_factor_q,
        }
    payload = {"meta": meta, "counts": [int(c) for c in hist.counts]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
