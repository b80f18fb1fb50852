"""Timed-mix forward model.

A message entering in round ``r`` with delay ``k`` leaves at the timer
expiry closing round ``r + k``. Viewed on per-round counts the mix is an
FIR filter: ``E[Y | X] = D X P`` where ``D`` is the lower-triangular
Toeplitz (convolution) matrix of the delay characteristic.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal

from .characteristic import DelayCharacteristic
from .rng import make_rng
from .traffic import SendingProfile, TrafficTrace


@dataclass(frozen=True, eq=False)
class ObservationPair:
    """What the adversary sees: inputs ``X`` (rounds x senders) and outputs ``Y`` (rounds x receivers)."""

    inputs: TrafficTrace
    outputs: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.outputs)
        if y.ndim != 2:
            raise ValueError("outputs must be a rounds x receivers matrix")
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("outputs must be non-negative integers")
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "outputs", y)


@dataclass
class MixState:
    """Messages held inside a running mix.

    ``pending`` holds ``(recipient, remaining_delay)`` pairs. At each timer
    expiry messages with zero remaining delay are flushed and the rest
    count down by one round.
    """

    pending: list = field(default_factory=list)
    round: int = 0

    def admit(self, recipients, delays):
        for j, k in zip(recipients, delays):
            if k < 0:
                raise ValueError("negative delay")
            self.pending.append((int(j), int(k)))

    def expire(self):
        """Close the current round; return recipients of flushed messages."""
        out = [j for j, k in self.pending if k == 0]
        self.pending = [(j, k - 1) for j, k in self.pending if k > 0]
        self.round += 1
        return out


def _taps(f):
    return f.taps if isinstance(f, DelayCharacteristic) else np.asarray(f, dtype=float)


def convolution_matrix(f, rho):
    """``rho x rho`` matrix with ``D[r, s] = f[r - s]`` for ``r >= s``."""
    taps = _taps(f)
    if taps.size > rho:
        raise ValueError(f"filter length {taps.size} exceeds horizon {rho}")
    col = np.zeros(rho)
    col[: taps.size] = taps
    row = np.zeros(rho)
    row[0] = col[0]
    return linalg.toeplitz(col, row)


def apply_delay(f, x):
    """``D @ x`` without forming ``D`` (column-wise causal FIR filtering)."""
    x = np.asarray(x, dtype=float)
    return signal.lfilter(_taps(f), [1.0], x, axis=0)


def _check_dims(x, p):
    if x.n_senders != p.n_senders:
        raise ValueError(
            f"trace has {x.n_senders} senders, profile has {p.n_senders}")


def expected_output(x, p, f):
    """``D X P`` as a rounds x receivers matrix (``P`` stored receivers x senders)."""
    _check_dims(x, p)
    if len(_taps(f)) > x.n_rounds:
        raise ValueError("filter longer than the trace horizon")
    return apply_delay(f, x.counts) @ p.probs.T


def noise_covariance(x, f, q):
    """Covariance of ``Y - D X P`` summed over receivers.

    ``diag(D X 1) - D diag(X q) D^T`` with ``q`` the per-sender sharpness.
    """
    q = np.asarray(q, dtype=float).ravel()
    if q.size != x.n_senders:
        raise ValueError("one sharpness value per sender required")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("sharpness must lie in [0, 1]")
    d = convolution_matrix(f, x.n_rounds)
    counts = x.counts.astype(float)
    return np.diag(d @ counts.sum(axis=1)) - (d * (counts @ q)) @ d.T


def simulate_mix(x, p, f, seed, horizon=None):
    """Per-message simulation of the mix over ``x``.

    Every message independently draws its recipient from its sender's
    column of ``p`` and its delay from ``f``. Departures are counted for
    rounds ``0 .. horizon-1`` (default: the trace length); later ones stay
    unobserved.
    """
    _check_dims(x, p)
    taps = _taps(f)
    rho = x.n_rounds
    horizon = rho if horizon is None else int(horizon)
    m = p.n_receivers
    rng = make_rng(seed, "mix")

    flat = x.counts.ravel()
    n = int(flat.sum())
    cells = np.repeat(np.arange(flat.size), flat)
    rounds, senders = np.divmod(cells, x.n_senders)

    recipients = np.empty(n, dtype=np.int64)
    u = rng.random(n)
    cdf = np.cumsum(p.probs, axis=0)
    for i in range(x.n_senders):
        sel = senders == i
        recipients[sel] = np.searchsorted(cdf[:, i], u[sel], side="right")
    np.minimum(recipients, m - 1, out=recipients)

    delays = np.searchsorted(np.cumsum(taps), rng.random(n), side="right")
    np.minimum(delays, taps.size - 1, out=delays)

    leave = rounds + delays
    seen = leave < horizon
    y = np.bincount(leave[seen] * m + recipients[seen], minlength=horizon * m)
    return ObservationPair(x, y.reshape(horizon, m))


def simulate_mix_stepwise(x, p, f, seed, horizon=None):
    """Round-by-round reference simulation driven through :class:`MixState`."""
    _check_dims(x, p)
    taps = _taps(f)
    horizon = x.n_rounds if horizon is None else int(horizon)
    rng = make_rng(seed, "mix-stepwise")
    state = MixState()
    y = np.zeros((horizon, p.n_receivers), dtype=np.int64)
    for r in range(horizon):
        if r < x.n_rounds:
            for i in range(x.n_senders):
                c = int(x.counts[r, i])
                if c:
                    state.admit(rng.choice(p.n_receivers, size=c, p=p.probs[:, i]),
                                rng.choice(taps.size, size=c, p=taps))
        for j in state.expire():
            y[r, j] += 1
    return ObservationPair(x, y)
