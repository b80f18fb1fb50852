"""Delay characteristics: per-message delay pmfs over rounds.

A delay characteristic ``f`` is a causal FIR filter with non-negative taps
summing to one. ``f[k]`` is the probability that the mix holds a message
for ``k`` rounds. Everything the asymptotic theory needs from ``f`` is
summarized by three statistics (see :func:`gamma_stats`).
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

PMF_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DelayCharacteristic:
    """Finite delay pmf; ``taps[k]`` is the probability of a ``k``-round delay."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=float).ravel()
        if taps.size < 1:
            raise ValueError("a delay characteristic needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("taps must be finite")
        if np.any(taps < 0):
            raise ValueError(f"negative tap {taps.min():.3g}")
        total = taps.sum()
        if abs(total - 1.0) > PMF_TOL:
            raise ValueError(f"taps sum to {total!r}, expected 1")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @classmethod
    def delta(cls, k=0):
        """All mass on a ``k``-round delay."""
        taps = np.zeros(k + 1)
        taps[k] = 1.0
        return cls(taps)

    @classmethod
    def uniform(cls, length):
        return cls(np.full(length, 1.0 / length))

    @property
    def length(self):
        return self.taps.size

    def __len__(self):
        return self.taps.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.taps, dtype=dtype)

    def __repr__(self):
        return f"DelayCharacteristic(length={self.length}, mean={mean_delay(self):.6g})"

    def padded(self, n):
        """Taps zero-padded to length ``n``."""
        if n < self.length:
            raise ValueError(f"cannot pad length {self.length} to {n}")
        out = np.zeros(n)
        out[: self.length] = self.taps
        return out

    def trimmed(self):
        """Copy without trailing zero taps (keeps at least one tap)."""
        nz = np.flatnonzero(self.taps)
        end = nz[-1] + 1 if nz.size else 1
        return DelayCharacteristic(self.taps[:end])


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible filters: length at most ``horizon``, mean delay at most ``max_mean_delay``."""

    horizon: int
    max_mean_delay: float

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        if not self.max_mean_delay >= 0:
            raise ValueError("max_mean_delay must be non-negative")
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "max_mean_delay", float(self.max_mean_delay))

    @property
    def delay_vacuous(self):
        """True when the average-delay cap can never bind."""
        return self.max_mean_delay >= self.horizon - 1


@dataclass(frozen=True)
class GammaStats:
    gamma1: float
    gamma2: float
    gamma3: float


@dataclass(frozen=True, eq=False)
class SpectralView:
    """``n``-point DFT of a zero-padded characteristic."""

    coefficients: np.ndarray

    @property
    def size(self):
        return self.coefficients.size

    def power(self):
        return np.abs(self.coefficients) ** 2

    def power_db(self, floor=1e-300):
        return 10.0 * np.log10(np.maximum(self.power(), floor))


@dataclass(frozen=True)
class Violation:
    clause: str
    residual: float


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple = field(default_factory=tuple)
    mean: float = float("nan")

    def __bool__(self):
        return self.feasible


def _taps(f):
    if isinstance(f, DelayCharacteristic):
        return f.taps
    return np.asarray(f, dtype=float).ravel()


def validate(f, c):
    """Check ``f`` against the constraint set ``c``.

    ``f`` may be a :class:`DelayCharacteristic` or a raw tap vector; raw
    vectors can violate non-negativity and normalization, which are then
    reported with their residuals instead of raising.
    """
    taps = _taps(f)
    violations = []
    if taps.size and taps.min() < 0:
        violations.append(Violation("nonnegativity", float(-taps.min())))
    total = float(taps.sum())
    if abs(total - 1.0) > PMF_TOL:
        violations.append(Violation("normalization", total - 1.0))
    if taps.size > c.horizon:
        violations.append(Violation("length", float(taps.size - c.horizon)))
    mean = float(np.arange(taps.size) @ taps)
    if mean > c.max_mean_delay + PMF_TOL:
        violations.append(Violation("mean_delay", mean - c.max_mean_delay))
    return FeasibilityReport(not violations, tuple(violations), mean)


def mean_delay(f):
    """Average delay in rounds."""
    taps = _taps(f)
    return float(np.arange(taps.size) @ taps)


def dft(f, n):
    """``n``-point DFT of the taps, zero-padded to ``n``."""
    taps = _taps(f)
    if taps.size > n:
        raise ValueError(f"filter length {taps.size} exceeds DFT length {n}")
    return SpectralView(np.fft.fft(taps, n))


def autocorrelation(f):
    """Two-sided autocorrelation ``R[k] = sum_r f[r] f[r+k]``, lags ``-(L-1)..L-1``."""
    taps = _taps(f)
    if taps.size < 64:
        return np.correlate(taps, taps, mode="full")
    return signal.correlate(taps, taps, mode="full", method="fft")


def gamma_stats(f, lags="all"):
    """Filter statistics entering the asymptotic MSE.

    gamma1 is the filter power and gamma3 the cubic power. gamma2 is the
    summed squared autocorrelation; with ``lags="all"`` every lag (both
    signs) is included, which is what the second-order expansion of the
    estimator covariance produces. ``lags="nonnegative"`` keeps lags
    ``k >= 0`` only.
    """
    taps = _taps(f)
    r = autocorrelation(taps)
    if lags == "all":
        g2 = float(r @ r)
    elif lags == "nonnegative":
        rpos = r[taps.size - 1:]
        g2 = float(rpos @ rpos)
    else:
        raise ValueError(f"unknown lags reading {lags!r}")
    return GammaStats(float(taps @ taps), g2, float(np.sum(taps ** 3)))


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    r = np.flatnonzero(u - css / ind > 0)[-1] + 1
    theta = css[r - 1] / r
    return np.maximum(v - theta, 0.0)


def _project_array(v, max_mean_delay):
    n = v.size
    k = np.arange(n, dtype=float)
    if max_mean_delay <= 0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    w = project_simplex(v)
    if max_mean_delay >= n - 1 or k @ w <= max_mean_delay:
        return w

    # Mean cap active: w = max(0, v - mu - nu*k) with nu > 0. The projected
    # mean is non-increasing and piecewise linear in nu, so a bracketed
    # Newton iteration on nu terminates after a few support changes.
    lo, hi = 0.0, np.inf
    nu = 0.0
    tol = 1e-14 * max(1.0, max_mean_delay)
    for _ in range(200):
        w = project_simplex(v - nu * k)
        gap = k @ w - max_mean_delay
        if abs(gap) <= tol:
            break
        if gap > 0:
            lo = nu
        else:
            hi = nu
        s = w > 0
        ks = k[s]
        var = ks @ ks - ks.sum() ** 2 / ks.size
        step = nu + gap / var if var > 0 else np.inf
        if np.isfinite(hi):
            nu = step if lo < step < hi else 0.5 * (lo + hi)
            if not lo < nu < hi:
                break
        else:
            nu = step if np.isfinite(step) and step > lo else max(2.0 * lo, 1.0)
    if k @ w - max_mean_delay > tol and np.isfinite(hi):
        w = project_simplex(v - hi * k)

    # Exact solve on the identified support.
    s = w > 0
    a00, a01, a11 = s.sum(), k[s].sum(), (k[s] ** 2).sum()
    det = a00 * a11 - a01 * a01
    if det > 0:
        b0 = v[s].sum() - 1.0
        b1 = k[s] @ v[s] - max_mean_delay
        mu = (a11 * b0 - a01 * b1) / det
        nu = (a00 * b1 - a01 * b0) / det
        cand = v - mu - nu * k
        if nu >= 0 and np.all(cand[s] >= 0) and np.all(cand[~s] <= 1e-12):
            return np.maximum(cand, 0.0)
    return w


def project_to_constraints(v, c):
    """Nearest point (Euclidean) of the feasible set ``c`` to the vector ``v``."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != c.horizon:
        raise ValueError(f"vector length {v.size} != horizon {c.horizon}")
    w = _project_array(v, c.max_mean_delay)
    return DelayCharacteristic(w / w.sum())


def dumps(f):
    """Text record: ``length=L`` then one ``k value`` line per tap."""
    taps = _taps(f)
    lines = [f"length={taps.size}"]
    lines += [f"{k} {x:.17g}" for k, x in enumerate(taps)]
    return "\n".join(lines) + "\n"


def loads(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("length="):
        raise ValueError("missing 'length=' header")
    n = int(lines[0].split("=", 1)[1])
    if len(lines) - 1 != n:
        raise ValueError(f"header says {n} taps, found {len(lines) - 1}")
    taps = np.zeros(n)
    for ln in lines[1:]:
        k, x = ln.split()
        taps[int(k)] = float(x)
    return DelayCharacteristic(taps)


def save(f, path):
    Path(path).write_text(dumps(f))


def load(path):
    return loads(Path(path).read_text())
