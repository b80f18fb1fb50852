"""Delay characteristics realized by networks of delay nodes.

Nodes in cascade convolve their characteristics; a message routed to one
of several nodes with fixed probabilities sees the weighted mixture. The
exponential (geometric) mix is the first-order recursive case: a unit
delay node with a switch that releases a message with probability
``alpha`` each round and otherwise feeds it back.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import characteristic as ch
from .characteristic import DelayCharacteristic, project_simplex
from .rng import make_rng


def _taps(f):
    return f.taps if isinstance(f, DelayCharacteristic) else np.asarray(f, dtype=float)


def cascade(fs):
    """Characteristic of nodes traversed in sequence (linear convolution)."""
    fs = list(fs)
    if not fs:
        raise ValueError("cascade of zero filters")
    out = _taps(fs[0])
    for f in fs[1:]:
        out = np.convolve(out, _taps(f))
    return DelayCharacteristic(out / out.sum())


def parallel(fs, weights):
    """Mixture: a message takes branch ``i`` with probability ``weights[i]``."""
    fs = list(fs)
    w = np.asarray(weights, dtype=float).ravel()
    if len(fs) != w.size or not fs:
        raise ValueError(f"{len(fs)} filters but {w.size} weights")
    if np.any(w < 0) or abs(w.sum() - 1.0) > ch.PMF_TOL:
        raise ValueError("weights must be a probability vector")
    n = max(len(_taps(f)) for f in fs)
    out = np.zeros(n)
    for wi, f in zip(w, fs):
        t = _taps(f)
        out[: t.size] += wi * t
    return DelayCharacteristic(out / out.sum())


@dataclass(frozen=True)
class Leaf:
    filter: DelayCharacteristic

    def characteristic(self):
        return self.filter


@dataclass(frozen=True)
class Cascade:
    children: tuple

    def characteristic(self):
        return cascade(c.characteristic() for c in self.children)


@dataclass(frozen=True, eq=False)
class Parallel:
    children: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.children) != w.size:
            raise ValueError("one weight per branch required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > ch.PMF_TOL:
            raise ValueError("weights must be a probability vector")

    def characteristic(self):
        return parallel([c.characteristic() for c in self.children], self.weights)


FilterNetwork = Leaf | Cascade | Parallel


def exponential_mix(alpha, length, tail="lump"):
    """Geometric characteristic ``alpha (1 - alpha)^k`` truncated to ``length`` taps.

    ``tail="lump"`` puts the residual mass ``(1 - alpha)^(length-1)`` on
    the last tap; ``tail="renormalize"`` rescales the truncated taps.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if length < 1:
        raise ValueError("length must be positive")
    k = np.arange(length)
    taps = alpha * (1.0 - alpha) ** k
    if tail == "lump":
        taps[-1] = (1.0 - alpha) ** (length - 1)
    elif tail == "renormalize":
        taps /= taps.sum()
    else:
        raise ValueError(f"unknown tail policy {tail!r}")
    return DelayCharacteristic(taps)


@dataclass(frozen=True, eq=False)
class DelayHistogram:
    counts: np.ndarray      # counts[d] = messages released after d rounds
    censored: int           # still inside after max_rounds
    node_load: np.ndarray   # message-rounds spent at each node

    @property
    def n_messages(self):
        return int(self.counts.sum()) + self.censored

    def pmf(self):
        return self.counts / self.n_messages

    def mean(self):
        """Mean delay and its standard error over uncensored messages."""
        d = np.arange(self.counts.size)
        n = self.counts.sum()
        m = float(d @ self.counts) / n
        var = float(((d - m) ** 2) @ self.counts) / (n - 1)
        return m, np.sqrt(var / n)


def simulate_decentralized(n_nodes, alpha, n_messages, max_rounds, seed):
    """Random walk over identical unit-delay nodes with exit probability ``alpha``.

    Every message starts at a uniformly chosen node. At each round end it
    leaves for its recipient with probability ``alpha``; otherwise it moves
    to a node drawn uniformly from all ``n_nodes`` (itself included).
    """
    if n_nodes < 1 or n_messages < 1:
        raise ValueError("need at least one node and one message")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    rng = make_rng(seed, "decentralized")
    where = rng.integers(n_nodes, size=n_messages)
    counts = np.zeros(max_rounds, dtype=np.int64)
    load = np.zeros(n_nodes, dtype=np.int64)
    for d in range(max_rounds):
        if where.size == 0:
            break
        load += np.bincount(where, minlength=n_nodes)
        leave = rng.random(where.size) < alpha
        counts[d] = leave.sum()
        where = rng.integers(n_nodes, size=int((~leave).sum()))
    return DelayHistogram(counts, int(where.size), load)


def total_variation(p, q):
    n = max(len(p), len(q))
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(p)] = p
    b[: len(q)] = q
    return 0.5 * float(np.abs(a - b).sum())


# -- cascade decomposition -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CascadeDecomposition:
    stages: list
    achieved: DelayCharacteristic
    error: float
    sweeps: int


def _tap_error(achieved, target):
    n = max(achieved.size, target.size)
    a = np.zeros(n)
    b = np.zeros(n)
    a[: achieved.size] = achieved
    b[: target.size] = target
    return float(np.sum((a - b) ** 2))


def truncation_baseline(target, length):
    """Best single node of ``length`` taps: simplex projection of the leading taps."""
    t = _taps(target)
    head = np.zeros(length)
    head[: min(length, t.size)] = t[:length]
    h = project_simplex(head)
    return DelayCharacteristic(h), _tap_error(h, t)


def _conv_matrix(g, length):
    rows = g.size + length - 1
    out = np.zeros((rows, length))
    for c in range(length):
        out[c: c + g.size, c] = g
    return out


def _simplex_ls(a, b, h0, iters):
    """min ||a h - b||^2 over the simplex, accelerated projected gradient."""
    ata = a.T @ a
    atb = a.T @ b
    step = 1.0 / max(np.linalg.eigvalsh(ata)[-1], 1e-300)
    h, z, t = h0.copy(), h0.copy(), 1.0
    for _ in range(iters):
        h_new = project_simplex(z - step * (ata @ z - atb))
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = h_new + ((t - 1) / t_new) * (h_new - h)
        if np.max(np.abs(h_new - h)) < 1e-15:
            h = h_new
            break
        h, t = h_new, t_new
    def obj(v):
        r = a @ v - b
        return r @ r
    return h if obj(h) <= obj(h0) else h0


def _starts(target, stages, length, rng, n_random):
    mean = ch.mean_delay(target)
    per = mean / stages
    alpha = 1.0 / (1.0 + per)
    geo = _taps(exponential_mix(alpha, length))
    width = int(min(length, max(1, round(2 * per + 1))))
    box = np.zeros(length)
    box[:width] = 1.0 / width
    starts = [[geo.copy() for _ in range(stages)], [box.copy() for _ in range(stages)]]
    for _ in range(n_random):
        starts.append([rng.dirichlet(np.ones(length)) for _ in range(stages)])
    return starts


def decompose_cascade(target, stages, per_stage_len, max_sweeps=100, inner_iters=100,
                      n_random=2, seed=0, tol=1e-9):
    """Fit ``stages`` node characteristics whose cascade approximates ``target``.

    Block-coordinate descent on the squared tap error: each sweep re-solves
    one stage at a time (a simplex-constrained least-squares problem) with
    the others held fixed. Several starts are tried and the best kept.
    """
    if stages < 1 or per_stage_len < 1:
        raise ValueError("stages and per_stage_len must be positive")
    t = _taps(target)
    nz = np.flatnonzero(t)
    t = t[: nz[-1] + 1] if nz.size else t[:1]
    total = stages * (per_stage_len - 1) + 1
    if total < t.size:
        raise ValueError(
            f"{stages} stages of {per_stage_len} taps reach length {total} < target {t.size}")
    b = np.zeros(total)
    b[: t.size] = t
    rng = make_rng(seed, "decompose")

    best = None
    for start in _starts(t, stages, per_stage_len, rng, n_random):
        hs = [h / h.sum() for h in start]
        err = _tap_error(_full(hs), b)
        sweeps = 0
        for sweeps in range(1, max_sweeps + 1):
            prev = err
            for s in range(stages):
                others = [hs[i] for i in range(stages) if i != s]
                g = _full(others) if others else np.array([1.0])
                a = _conv_matrix(g, per_stage_len)
                hs[s] = _simplex_ls(a, b, hs[s], inner_iters)
            err = _tap_error(_full(hs), b)
            if prev - err <= tol * max(prev, 1e-300):
                break
        if best is None or err < best[1]:
            best = (hs, err, sweeps)
    hs, err, sweeps = best
    stage_filters = [DelayCharacteristic(h / h.sum()) for h in hs]
    achieved = cascade(stage_filters)
    return CascadeDecomposition(stage_filters, achieved, _tap_error(achieved.taps, b), sweeps)


def _full(hs):
    out = np.array([1.0])
    for h in hs:
        out = np.convolve(out, h)
    return out


def save_stages(stage_filters, directory):
    """Write ``stage_XX.txt`` characteristic files and a cascade manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for i, f in enumerate(stage_filters):
        name = f"stage_{i:02d}.txt"
        ch.save(f, d / name)
        names.append(name)
    (d / "manifest.txt").write_text("composition=cascade\n" + "\n".join(names) + "\n")


def load_stages(directory):
    d = Path(directory)
    lines = [ln.strip() for ln in (d / "manifest.txt").read_text().splitlines() if ln.strip()]
    if lines[0] != "composition=cascade":
        raise ValueError(f"unsupported manifest header {lines[0]!r}")
    return [ch.load(d / name) for name in lines[1:]]
