"""Asymptotic adversary MSE and the design objectives derived from it.

For i.i.d. Poisson inputs and a long observation window the adversary's
MSE depends on the delay characteristic only through
``gamma1 = sum f^2``, ``gamma2`` (summed squared autocorrelation) and
``gamma3 = sum f^3``. Two regimes follow:

* senders spread over many receivers (sharpness ~ 0): MSE ~ 1 / gamma1
* senders with a single receiver (sharpness ~ 1): MSE ~ (gamma1 - gamma2) / gamma1^2

A short observation window instead rewards pushing the high-frequency
DFT bins of the filter to zero (``objective_shortterm``).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .characteristic import DelayCharacteristic, GammaStats, autocorrelation, gamma_stats


@dataclass(frozen=True)
class ClosedFormReport:
    mse_total: float
    term_filter_dependent: float
    term_filter_independent: float
    gammas: GammaStats
    assumption_flags: tuple = field(default_factory=tuple)

    def to_text(self):
        """Flat ``key=value`` block."""
        rows = [
            ("mse_total", self.mse_total),
            ("term_filter_dependent", self.term_filter_dependent),
            ("term_filter_independent", self.term_filter_independent),
            ("gamma1", self.gammas.gamma1),
            ("gamma2", self.gammas.gamma2),
            ("gamma3", self.gammas.gamma3),
        ]
        lines = [f"{k}={v:.12g}" for k, v in rows]
        lines.append("assumption_flags=" + ",".join(self.assumption_flags))
        return "\n".join(lines) + "\n"


def _taps(f):
    return f.taps if isinstance(f, DelayCharacteristic) else np.asarray(f, dtype=float)


def _rate_aggregates(rates, q):
    lam = np.asarray(rates, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if lam.size != q.size:
        raise ValueError("rates and sharpness must have one entry per sender")
    s = lam.sum()
    return lam, q, s, np.sum(lam ** 2), np.sum(lam * q), np.sum(lam ** 2 * q)


def closed_form_mse(rates, q, f, rho, lags="all"):
    """Asymptotic overall MSE (weights ``rate**2``) of the least-squares adversary.

    Valid for rho >> N and sum(rates) >> 1; when either fails the value is
    still returned and the report carries a flag.
    """
    lam, q, s, s2, slq, sl2q = _rate_aggregates(rates, q)
    if np.any(lam <= 0):
        raise ValueError("rates must be positive")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("sharpness must lie in [0, 1]")
    g = gamma_stats(f, lags=lags)
    first = ((g.gamma1 * s - g.gamma2 * slq + g.gamma3) / g.gamma1 ** 2
             * (s - s2 / s) / rho)
    second = ((s2 / s ** 2 + 1.0) * slq - sl2q / s) / rho
    flags = []
    if rho < 10 * lam.size:
        flags.append("rho_not_much_larger_than_senders")
    if s < 10:
        flags.append("total_rate_not_much_larger_than_one")
    return ClosedFormReport(first + second, first, second, g, tuple(flags))


# -- appendix building blocks (internal) ---------------------------------------

def _rxx(lam, g1):
    return np.outer(lam, lam) + g1 * np.diag(lam)


def _rxx_inverse(lam, g1):
    """Sherman-Morrison inverse of ``lam lam' + g1 diag(lam)``."""
    n = lam.size
    return (np.diag(1.0 / lam) - np.ones((n, n)) / (g1 + lam.sum())) / g1


def _rxyx_prime(lam, g):
    s = lam.sum()
    return (np.outer(lam, lam) * (2 * g.gamma1 + s)
            + np.diag(lam) * (g.gamma3 + g.gamma1 * s))


def _rxyx_double_prime(lam, q, g):
    slq = np.sum(lam * q)
    lq = lam * q
    return (np.outer(lam, lam) * slq
            + g.gamma1 * (np.outer(lq, lam) + np.outer(lam, lq))
            + g.gamma2 * np.diag(lam) * slq
            + g.gamma1 ** 2 * np.diag(lq))


def _asymptotic_mse(rates, q, f, rho, lags="all"):
    """Trace form ``tr(M Rxx^-1 Rxyx Rxx^-1 M) / rho`` without the S + gamma1 ~ S step."""
    lam = np.asarray(rates, dtype=float)
    q = np.asarray(q, dtype=float)
    g = gamma_stats(f, lags=lags)
    inv = _rxx_inverse(lam, g.gamma1)
    mid = _rxyx_prime(lam, g) - _rxyx_double_prime(lam, q, g)
    m = np.diag(lam)
    return float(np.trace(m @ inv @ mid @ inv @ m)) / rho


# -- design objectives ----------------------------------------------------------

def objective_sharp0(f):
    """``1 / gamma1``; to maximize."""
    t = _taps(f)
    return 1.0 / float(t @ t)


def grad_sharp0(f):
    t = _taps(f)
    g1 = float(t @ t)
    return -2.0 * t / g1 ** 2


def objective_sharp1(f, lags="all"):
    """``(gamma1 - gamma2) / gamma1^2``; to maximize."""
    g = gamma_stats(f, lags=lags)
    return (g.gamma1 - g.gamma2) / g.gamma1 ** 2


def _gamma2_grad(t, lags):
    n = t.size
    r = autocorrelation(t)
    if lags == "all":
        return 4.0 * signal.convolve(t, r)[n - 1: 2 * n - 1]
    rp = r[n - 1:]
    fwd = signal.convolve(t[::-1], rp)[n - 1:: -1][:n]
    back = signal.convolve(rp, t)[:n]
    return 2.0 * (fwd + back)


def grad_sharp1(f, lags="all"):
    t = _taps(f)
    g = gamma_stats(t, lags=lags)
    dg1 = 2.0 * t
    dg2 = _gamma2_grad(t, lags)
    return (dg1 - dg2) / g.gamma1 ** 2 - 2.0 * (g.gamma1 - g.gamma2) * dg1 / g.gamma1 ** 3


def stopband(n_senders, rho):
    """Boolean mask of the suppressed DFT bins.

    Even ``N``: bins ``N/2+1 .. rho-N/2-1``, conjugate-symmetric around
    ``rho/2``. Odd ``N`` widens the passband by one bin on each side.
    """
    if n_senders >= rho:
        raise ValueError(f"need fewer senders ({n_senders}) than rounds ({rho})")
    half = n_senders // 2 if n_senders % 2 == 0 else n_senders // 2 + 1
    k = np.arange(rho)
    return (k >= half + 1) & (k <= rho - half - 1)


def objective_shortterm(f, n_senders, rho):
    """Stopband energy ``sum |F_k|^2``; to minimize."""
    t = _taps(f)
    if t.size > rho:
        raise ValueError("filter longer than the DFT length")
    mask = stopband(n_senders, rho)
    spec = np.fft.fft(t, rho)
    return float(np.sum(np.abs(spec[mask]) ** 2))


def grad_shortterm(f, n_senders, rho):
    t = _taps(f)
    mask = stopband(n_senders, rho)
    spec = np.fft.fft(t, rho)
    return 2.0 * rho * np.real(np.fft.ifft(spec * mask))[: t.size]


def effective_characteristic(f, g):
    """Characteristic seen by the adversary when inputs are colored by ``g``."""
    from .network import cascade
    return cascade([f, g])
