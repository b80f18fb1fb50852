"""Synthetic sender behavior: Poisson input traffic and Zipf sending profiles."""

from dataclasses import dataclass

import numpy as np

from .rng import make_rng

PROB_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SendingProfile:
    """Column-stochastic ``M x N`` matrix; ``probs[j, i]`` is P(sender i -> receiver j)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("profile must be a 2-D matrix")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("profile entries must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=0) - 1.0) > PROB_TOL):
            raise ValueError("every sender column must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_receivers(self):
        return self.probs.shape[0]

    @property
    def n_senders(self):
        return self.probs.shape[1]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))


@dataclass(frozen=True, eq=False)
class TrafficTrace:
    """Per-round input counts; ``counts[r, i]`` messages from sender ``i`` in round ``r``."""

    counts: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.counts)
        if x.ndim != 2:
            raise ValueError("counts must be a rounds x senders matrix")
        if not np.issubdtype(x.dtype, np.integer):
            if np.any(x != np.round(x)):
                raise ValueError("counts must be integers")
        x = x.astype(np.int64)
        if np.any(x < 0):
            raise ValueError("counts must be non-negative")
        lam = np.array(self.rates, dtype=float).ravel()
        if lam.size != x.shape[1]:
            raise ValueError("one rate per sender required")
        if np.any(lam <= 0):
            raise ValueError("rates must be positive")
        x.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "counts", x)
        object.__setattr__(self, "rates", lam)

    @property
    def n_rounds(self):
        return self.counts.shape[0]

    @property
    def n_senders(self):
        return self.counts.shape[1]

    def empirical_rates(self):
        return self.counts.mean(axis=0)


def gen_poisson_traffic(rates, rho, seed):
    """i.i.d. Poisson counts, one column per sender."""
    lam = np.asarray(rates, dtype=float).ravel()
    if rho < 1:
        raise ValueError("need at least one round")
    if lam.size == 0 or np.any(lam <= 0):
        raise ValueError("rates must be positive")
    rng = make_rng(seed, "poisson")
    return TrafficTrace(rng.poisson(lam, size=(int(rho), lam.size)), lam)


def gen_zipf_profile(n_senders, n_receivers, friends, exponent=1.0, seed=0):
    """Each sender picks ``friends`` distinct receivers uniformly at random.

    The rank-``k`` friend (1-based, in draw order) receives probability
    proportional to ``1 / k**exponent``.
    """
    if not 1 <= friends <= n_receivers:
        raise ValueError(f"friends={friends} must be in [1, {n_receivers}]")
    if exponent < 0:
        raise ValueError("Zipf exponent must be non-negative")
    rng = make_rng(seed, "zipf")
    weights = 1.0 / np.arange(1, friends + 1, dtype=float) ** exponent
    weights /= weights.sum()
    probs = np.zeros((n_receivers, n_senders))
    for i in range(n_senders):
        probs[rng.choice(n_receivers, size=friends, replace=False), i] = weights
    return SendingProfile(probs)


def sharpness(p):
    """Per-sender concentration ``sum_j p[j, i]**2``; 1 means a single friend."""
    probs = p.probs if isinstance(p, SendingProfile) else np.asarray(p, dtype=float)
    return np.sum(probs ** 2, axis=0)
