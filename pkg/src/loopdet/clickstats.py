"""Click-number statistics of the loop detector.

Given input photon statistics and a channel profile, these routines give
the exact distribution of the number of *distinct* channels that click in
one pulse, and the derived quantities p0, p1, pM and the multi-photon
content c_M = pM / (p1 + pM).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .device import ChannelProfile
from .errors import DegenerateDeviceError, DomainError, ParameterError, UndefinedContentError

#: Below this photon number the exact multiset enumeration is used (when the
#: outcome count stays reasonable); above it the sequential-binomial dynamic
#: program takes over.  Both paths are exact; equality at the boundary is
#: covered by tests.
ENUMERATION_MAX_PHOTONS = 12
_ENUMERATION_MAX_OUTCOMES = 200_000


@dataclass(frozen=True)
class PhotonSource:
    """Input photon-number statistics.

    One of a Poissonian pulse of mean ``mu``, a Fock state of ``n`` photons,
    or an explicit pmf over n = 0..n_max.
    """

    kind: str
    mu: float = 0.0
    n: int = 0
    pmf: np.ndarray | None = None

    @classmethod
    def poissonian(cls, mu: float) -> "PhotonSource":
        if mu < 0:
            raise ParameterError(f"mu must be >= 0, got {mu}")
        return cls(kind="poissonian", mu=float(mu))

    @classmethod
    def fock(cls, n: int) -> "PhotonSource":
        if n < 0 or int(n) != n:
            raise ParameterError(f"n must be a nonnegative integer, got {n}")
        return cls(kind="fock", n=int(n))

    @classmethod
    def custom(cls, pmf) -> "PhotonSource":
        pmf = np.asarray(pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ParameterError("pmf must be a nonempty 1-d sequence")
        if np.any(pmf < 0):
            raise ParameterError("pmf has negative entries")
        if abs(pmf.sum() - 1.0) > 1e-9:
            raise ParameterError(f"pmf sums to {pmf.sum()!r}, not 1")
        return cls(kind="custom", pmf=pmf)

    def pmf_array(self, n_max: int | None = None) -> np.ndarray:
        """Photon-number pmf truncated at ``n_max`` (inclusive).

        For a Poissonian source the default truncation mu + 10*sqrt(mu) + 20
        leaves tail mass far below 1e-9.
        """
        if self.kind == "custom":
            return self.pmf if n_max is None else self.pmf[: n_max + 1]
        if self.kind == "fock":
            out = np.zeros((self.n if n_max is None else max(n_max, self.n)) + 1)
            if n_max is None or self.n <= n_max:
                out[self.n] = 1.0
            return out[: (n_max + 1) if n_max is not None else None]
        if n_max is None:
            n_max = poisson_truncation(self.mu)
        ns = np.arange(n_max + 1)
        if self.mu == 0.0:
            out = np.zeros(n_max + 1)
            out[0] = 1.0
            return out
        # Stable Poisson pmf via log-space evaluation.
        logp = ns * math.log(self.mu) - self.mu - np.array(
            [math.lgamma(n + 1.0) for n in ns])
        return np.exp(logp)


def poisson_truncation(mu: float) -> int:
    """Default Fock truncation for Poissonian mixtures."""
    return int(math.ceil(mu + 10.0 * math.sqrt(mu) + 20.0))


@dataclass(frozen=True)
class ClickDistribution:
    """Probability of exactly m distinct channels clicking, m = 0..N."""

    p_click: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "p_click", np.asarray(self.p_click, dtype=float))
        if np.any(self.p_click < -1e-12):
            raise DomainError("negative click probability")
        if abs(self.p_click.sum() - 1.0) > 1e-9:
            raise DomainError(f"click pmf sums to {self.p_click.sum()!r}")

    @property
    def p0(self) -> float:
        return float(self.p_click[0])

    @property
    def p1(self) -> float:
        return float(self.p_click[1]) if self.p_click.size > 1 else 0.0

    @property
    def pM(self) -> float:
        return float(self.p_click[2:].sum())


def poisson_click_distribution(mu: float, profile: ChannelProfile) -> ClickDistribution:
    """Exact click-count pmf for a Poissonian pulse of mean ``mu``.

    Poissonian thinning makes the channels independent: channel k clicks
    with probability 1 - exp(-mu*h_k), and the number of distinct clicking
    channels follows the Poisson-binomial distribution of those N
    independent events.
    """
    if mu < 0:
        raise ParameterError(f"mu must be >= 0, got {mu}")
    c = -np.expm1(-mu * profile.h)
    p = np.array([1.0])
    for ck in c:
        p = np.convolve(p, [1.0 - ck, ck])
    return ClickDistribution(p)


def _fock_click_dp(n: int, h: np.ndarray) -> np.ndarray:
    """Distinct-channel click pmf for an n-photon pulse, exact.

    Processes channels in order; conditioned on the photons not captured by
    earlier channels, the count in channel j is binomial with the
    renormalized probability h_j / (1 - sum of earlier h).  The state keeps
    (photons remaining, channels clicked so far).
    """
    N = h.size
    # dp[nr, m] = probability of nr photons left and m channels clicked
    dp = np.zeros((n + 1, N + 1))
    dp[n, 0] = 1.0
    rem = 1.0
    for hj in h:
        pj = 0.0 if rem <= 0.0 else min(hj / rem, 1.0)
        rem -= hj
        new = np.zeros_like(dp)
        for nr in range(n + 1):
            col = dp[nr]
            if not col.any():
                continue
            # binomial pmf over the count c captured by this channel
            for c_cnt in range(nr + 1):
                b = math.comb(nr, c_cnt) * pj ** c_cnt * (1.0 - pj) ** (nr - c_cnt)
                if b == 0.0:
                    continue
                if c_cnt == 0:
                    new[nr] += col * b
                else:
                    new[nr - c_cnt, 1:] += col[:-1] * b
        dp = new
    return dp.sum(axis=0)


def _fock_click_enum(n: int, h: np.ndarray) -> np.ndarray:
    """Distinct-channel click pmf by explicit multiset enumeration.

    Sums multinomial weights over all occupation patterns of n photons in
    the N channels plus a loss bin.  Only viable for small n and N.
    """
    N = h.size
    q_lost = 1.0 - h.sum()
    out = np.zeros(N + 1)

    def recurse(j: int, left: int, weight: float, clicked: int) -> None:
        if j == N:
            out[clicked] += weight * q_lost ** left
            return
        for c_cnt in range(left + 1):
            w = weight * math.comb(left, c_cnt) * h[j] ** c_cnt
            if w == 0.0 and c_cnt > 0:
                continue
            recurse(j + 1, left - c_cnt, w, clicked + (1 if c_cnt else 0))

    recurse(0, n, 1.0, 0)
    return out


def fock_click_distribution(n: int, profile: ChannelProfile) -> ClickDistribution:
    """Exact distinct-channel click pmf for an n-photon Fock input.

    Each photon independently lands in channel k with probability h_k or is
    lost; p_click[m] = 0 for m > n.
    """
    if n < 0 or int(n) != n:
        raise ParameterError(f"n must be a nonnegative integer, got {n}")
    n = int(n)
    h = profile.h
    if n <= ENUMERATION_MAX_PHOTONS and math.comb(n + h.size, h.size) <= _ENUMERATION_MAX_OUTCOMES:
        p = _fock_click_enum(n, h)
    else:
        p = _fock_click_dp(n, h)
    return ClickDistribution(p)


def custom_click_distribution(source: PhotonSource,
                              profile: ChannelProfile,
                              n_max: int | None = None) -> ClickDistribution:
    """Click pmf for an arbitrary source: Fock mixture with source weights."""
    pmf = source.pmf_array(n_max)
    out = np.zeros(profile.n_channels + 1)
    for n, w in enumerate(pmf):
        if w == 0.0:
            continue
        out += w * fock_click_distribution(n, profile).p_click
    total = out.sum()
    if total <= 0.0:
        raise ParameterError("source pmf carries no mass within the truncation")
    # Renormalize away the sliver of tail mass lost to pmf truncation.
    out /= total
    return ClickDistribution(out)


def multi_photon_content(dist: ClickDistribution) -> float:
    """c_M = pM / (p1 + pM): probability that a non-vacuum detection event
    involved more than one channel."""
    denom = dist.p1 + dist.pM
    if denom <= 0.0:
        raise UndefinedContentError("all-vacuum signal: p1 + pM = 0")
    return dist.pM / denom


def source_multi_photon_content(source: PhotonSource) -> float:
    """Multi-photon content of the bare source: P(n >= 2) / P(n >= 1)."""
    if source.kind == "poissonian":
        if source.mu == 0.0:
            raise UndefinedContentError("vacuum-only source")
        p_ge1 = -math.expm1(-source.mu)
        return (p_ge1 - source.mu * math.exp(-source.mu)) / p_ge1
    pmf = source.pmf_array()
    p_ge1 = float(pmf[1:].sum())
    if p_ge1 <= 0.0:
        raise UndefinedContentError("vacuum-only source")
    return float(pmf[2:].sum()) / p_ge1


def device_multi_photon_content(mu: float, profile: ChannelProfile,
                                n_channels: int | None = None) -> float:
    """Device-measured c_M for a Poissonian pulse, optionally counting only
    the first ``n_channels`` (clicks in later channels treated as lost)."""
    if n_channels is not None:
        profile = profile.truncated(n_channels)
    return multi_photon_content(poisson_click_distribution(mu, profile))


def infer_mu(p_nonvacuum: float, total_transmission: float) -> float:
    """Mean photon number from the measured non-vacuum probability.

    Inverts p = 1 - exp(-T*mu) for a Poissonian signal detected with total
    transmission T.
    """
    if not 0.0 <= p_nonvacuum < 1.0:
        if p_nonvacuum == 1.0:
            raise DomainError("p_nonvacuum = 1 implies infinite mu")
        raise ParameterError(f"p_nonvacuum must lie in [0, 1), got {p_nonvacuum}")
    if total_transmission <= 0.0:
        raise DegenerateDeviceError("total transmission must be positive")
    return -math.log1p(-p_nonvacuum) / total_transmission
