"""CSV schemas for traces, profiles, observations and delay histograms.

All floats are written with 12 significant digits.

==============  ===========================
file            header
==============  ===========================
trace           ``round,sender,count``
profile         ``receiver,sender,prob``
outputs         ``round,receiver,count``
histogram       ``delay,count``
==============  ===========================
"""

import csv
from pathlib import Path

import numpy as np

from .mix import ObservationPair
from .traffic import SendingProfile, TrafficTrace


def fmt(x):
    return f"{x:.12g}"


def _write_long(path, header, matrix, value_fmt=str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for (a, b), v in np.ndenumerate(matrix):
            w.writerow([a, b, value_fmt(v)])


def _read_long(path, header, dtype):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != list(header):
        raise ValueError(f"{path}: expected header {','.join(header)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no data rows")
    a = np.array([int(r[0]) for r in body])
    b = np.array([int(r[1]) for r in body])
    v = np.array([dtype(r[2]) for r in body])
    out = np.zeros((a.max() + 1, b.max() + 1), dtype=np.asarray(v).dtype)
    np.add.at(out, (a, b), v)
    return out


def write_trace_csv(trace, path):
    _write_long(path, ["round", "sender", "count"], trace.counts)


def read_trace_csv(path, rates=None):
    """Load a trace; without ``rates`` the per-sender sample means are used."""
    counts = _read_long(path, ("round", "sender", "count"), int)
    if rates is None:
        rates = counts.mean(axis=0)
        if np.any(rates <= 0):
            raise ValueError(f"{path}: a sender never transmits; pass explicit rates")
    return TrafficTrace(counts, rates)


def write_profile_csv(profile, path):
    """Accepts a :class:`SendingProfile` or a raw (e.g. estimated) matrix."""
    probs = profile.probs if isinstance(profile, SendingProfile) else np.asarray(profile)
    _write_long(path, ["receiver", "sender", "prob"], probs, fmt)


def read_profile_csv(path):
    return SendingProfile(_read_long(path, ("receiver", "sender", "prob"), float))


def write_observation(obs, directory, run_id):
    """``<run_id>_inputs.csv`` and ``<run_id>_outputs.csv`` in ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_trace_csv(obs.inputs, d / f"{run_id}_inputs.csv")
    _write_long(d / f"{run_id}_outputs.csv", ["round", "receiver", "count"], obs.outputs)


def read_observation(directory, run_id, rates=None):
    d = Path(directory)
    x = read_trace_csv(d / f"{run_id}_inputs.csv", rates)
    y = _read_long(d / f"{run_id}_outputs.csv", ("round", "receiver", "count"), int)
    return ObservationPair(x, y)


def write_histogram_csv(hist, path):
    """``delay,count`` rows, then a ``censored`` row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay", "count"])
        for d, c in enumerate(hist.counts):
            w.writerow([d, int(c)])
        w.writerow(["censored", hist.censored])


def write_rows(path, header, rows):
    """Plain CSV; floats formatted with :func:`fmt`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
