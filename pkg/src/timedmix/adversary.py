"""Global passive adversary: least-squares estimation of the sending profile.

The adversary fits ``Y ~ D X P`` by least squares. Its error is scored as
``tr(M Ce M)`` with ``M = diag(rates)``, i.e. each sender's squared error
is weighted by ``rate**2``. ``weighting="rate"`` switches to a plain
``rate`` weight.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .mix import apply_delay, simulate_mix
from .rng import derive_seed
from .traffic import SendingProfile, gen_poisson_traffic

WEIGHTINGS = ("rate_squared", "rate")


class SingularDesignError(np.linalg.LinAlgError):
    """Normal equations are singular and no ridge was requested."""

    def __init__(self, conditioning, trial=None):
        self.conditioning = conditioning
        self.trial = trial
        where = "" if trial is None else f" in trial {trial}"
        super().__init__(
            f"singular normal equations{where}: smallest singular value of DX "
            f"is {conditioning:.3e}")


@dataclass(frozen=True, eq=False)
class EstimateReport:
    p_hat: np.ndarray
    error: np.ndarray
    overall_mse: float
    per_sender_mse: np.ndarray
    conditioning: float = float("nan")


@dataclass(frozen=True, eq=False)
class MCResult:
    mean: float
    stderr: float
    values: np.ndarray
    seeds: tuple
    conditioning: np.ndarray

    def write_csv(self, path):
        """One row per trial, then ``mean`` and ``stderr`` summary rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "seed", "overall_mse", "conditioning"])
            for t, (s, v, c) in enumerate(zip(self.seeds, self.values, self.conditioning)):
                w.writerow([t, s, f"{v:.12g}", f"{c:.12g}"])
            w.writerow(["mean", "", f"{self.mean:.12g}", f"{np.min(self.conditioning):.12g}"])
            w.writerow(["stderr", "", f"{self.stderr:.12g}", ""])


def _solve(dx, y, ridge):
    sv = np.linalg.svd(dx, compute_uv=False)
    cond = float(sv[-1])
    if ridge == 0:
        if cond <= sv[0] * max(dx.shape) * np.finfo(float).eps:
            raise SingularDesignError(cond)
        beta, *_ = np.linalg.lstsq(dx, y, rcond=None)
    else:
        gram = dx.T @ dx + ridge * np.eye(dx.shape[1])
        beta = np.linalg.solve(gram, dx.T @ y)
    return beta.T, cond


def ls_estimate(obs, f, ridge=0.0, return_conditioning=False):
    """Least-squares profile estimate, receivers x senders.

    Solves ``(X'D'DX + ridge I) P_hat' = X'D'Y``. Columns are not
    projected back onto the simplex.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    x = obs.inputs
    y = np.asarray(obs.outputs, dtype=float)
    rho = x.n_rounds
    if rho < x.n_senders:
        raise ValueError(f"need at least as many rounds ({rho}) as senders ({x.n_senders})")
    if y.shape[0] != rho:
        y = y[:rho]
    dx = apply_delay(f, x.counts)
    p_hat, cond = _solve(dx, y, ridge)
    return (p_hat, cond) if return_conditioning else p_hat


def empirical_mse(p_hat, p, rates, weighting="rate_squared", conditioning=float("nan")):
    """Weighted squared error of ``p_hat`` against the true profile."""
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    probs = p.probs if isinstance(p, SendingProfile) else np.asarray(p, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    if p_hat.shape != probs.shape:
        raise ValueError(f"shape mismatch {p_hat.shape} vs {probs.shape}")
    lam = np.asarray(rates, dtype=float).ravel()
    weights = lam ** 2 if weighting == "rate_squared" else lam
    err = p_hat - probs
    per_sender = weights * np.sum(err ** 2, axis=0)
    return EstimateReport(p_hat, err, math.fsum(per_sender), per_sender, conditioning)


def aggregate_trials(values):
    """Mean and standard error with exactly rounded (order-independent) sums."""
    v = np.asarray(values, dtype=float)
    n = v.size
    mean = math.fsum(v) / n
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def run_trial(profile, rates, f, rho, trial_seed, weighting="rate_squared",
              ridge=0.0, rate_source="true"):
    """One Monte-Carlo trial: fresh traffic, fresh mix, estimate, score."""
    x = gen_poisson_traffic(rates, rho, trial_seed)
    obs = simulate_mix(x, profile, f, trial_seed)
    p_hat, cond = ls_estimate(obs, f, ridge, return_conditioning=True)
    lam = x.rates if rate_source == "true" else x.empirical_rates()
    return empirical_mse(p_hat, profile, lam, weighting, cond)


def mc_mse(profile, rates, f, rho, trials, seed, weighting="rate_squared",
           ridge=0.0, rate_source="true", workers=None, csv_path=None):
    """Monte-Carlo estimate of the adversary's overall MSE.

    Trial ``t`` uses the sub-seed ``derive_seed(seed, "trial", t)``; the
    result does not depend on ``workers``.
    """
    if trials < 2:
        raise ValueError("need at least two trials for a standard error")
    if rate_source not in ("true", "empirical"):
        raise ValueError("rate_source must be 'true' or 'empirical'")
    seeds = tuple(derive_seed(seed, "trial", t) for t in range(trials))

    def one(t):
        try:
            return run_trial(profile, rates, f, rho, seeds[t], weighting, ridge, rate_source)
        except SingularDesignError as exc:
            raise SingularDesignError(exc.conditioning, trial=t) from None

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            reports = list(pool.map(one, range(trials)))
    else:
        reports = [one(t) for t in range(trials)]
    values = np.array([r.overall_mse for r in reports])
    conds = np.array([r.conditioning for r in reports])
    mean, stderr = aggregate_trials(values)
    result = MCResult(mean, stderr, values, seeds, conds)
    if csv_path is not None:
        result.write_csv(csv_path)
    return result
