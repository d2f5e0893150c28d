"""Exact simulation of the up/down tick streams by thinning.

Random-number contract: a numpy ``Generator`` (PCG64) seeded from
``SeedSequence(seed)``; replications use ``SeedSequence(seed).spawn(n)``.
Each proposal consumes, in order, one uniform for the waiting time
(``w = -log(1 - U) / bound``) and one uniform for acceptance
(accept iff ``U * bound < lambda_total(t-)``); each accepted point consumes one
more uniform to pick its stream (first ``i`` with ``U * total < cumsum(lambda)_i``).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numba
import numpy as np

from .model import (
    EventLog,
    ModelError,
    Params,
    require_stable,
)


class SimulationError(RuntimeError):
    pass


@numba.njit(cache=True, nogil=True)
def _thinning(rng, mu, src, dst, alpha, beta, t0, horizon, fixed_bound):
    """Core loop.  Returns (times, 0-based streams, bound_violated)."""
    n_streams = mu.shape[0]
    n_kernels = alpha.shape[0]
    state = np.zeros(n_kernels)
    lam = np.empty(n_streams)
    cap = 1024
    times = np.empty(cap)
    streams = np.empty(cap, dtype=np.int64)
    n = 0
    t = t0
    bound = mu.sum()
    violated = False
    while True:
        if fixed_bound > 0.0:
            bound = fixed_bound
        w = -np.log1p(-rng.random()) / bound
        t += w
        if t > horizon:
            break
        for k in range(n_kernels):
            state[k] *= np.exp(-beta[k] * w)
        for i in range(n_streams):
            lam[i] = mu[i]
        for k in range(n_kernels):
            lam[dst[k]] += state[k]
        total = lam.sum()
        if total > bound:
            violated = True
        if rng.random() * bound < total:
            target = rng.random() * total
            acc = 0.0
            chosen = n_streams - 1
            for i in range(n_streams):
                acc += lam[i]
                if target < acc:
                    chosen = i
                    break
            for k in range(n_kernels):
                if src[k] == chosen:
                    state[k] += alpha[k]
            if t >= 0.0:
                if n == cap:
                    cap *= 2
                    new_times = np.empty(cap)
                    new_streams = np.empty(cap, dtype=np.int64)
                    new_times[:n] = times[:n]
                    new_streams[:n] = streams[:n]
                    times = new_times
                    streams = new_streams
                times[n] = t
                streams[n] = chosen
                n += 1
            bound = total
            for k in range(n_kernels):
                if src[k] == chosen:
                    bound += alpha[k]
        else:
            bound = total
    return times[:n], streams[:n], violated


def _kernel_arrays(params: Params):
    mu, alpha, beta = params.system()
    dst, src = np.nonzero(alpha)
    return (mu.astype(np.float64), src.astype(np.int64), dst.astype(np.int64),
            alpha[dst, src].astype(np.float64), beta[dst, src].astype(np.float64))


def default_burn_in(params: Params) -> float:
    """``20`` relaxation times of the mean intensity, ``20 / (beta_min (1 - radius))``.

    For the univariate model this is ``20 / (beta - alpha)``.
    """
    radius = require_stable(params)
    _, alpha, beta = params.system()
    active = beta[alpha > 0]
    beta_min = float(active.min()) if active.size else float(beta.min())
    return 20.0 / (beta_min * (1.0 - radius))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def simulate(params: Params, horizon: float, seed=0, burn_in: Optional[float] = None,
             fixed_bound: Optional[float] = None) -> EventLog:
    """Simulate on ``[-burn_in, horizon]`` and return the events in ``[0, horizon]``.

    Events before 0 are not returned but excite the returned ones.  With
    ``burn_in=0`` the process starts empty at time 0.  ``burn_in=None`` uses
    :func:`default_burn_in`.

    ``fixed_bound`` switches to thinning against a constant proposal rate;
    a :class:`SimulationError` is raised afterwards if the total intensity ever
    exceeded it.
    """
    require_stable(params)
    if not horizon > 0:
        raise ModelError("horizon must be > 0")
    if burn_in is None:
        burn_in = default_burn_in(params)
    if burn_in < 0:
        raise ModelError("burn_in must be >= 0")
    mu, src, dst, alpha, beta = _kernel_arrays(params)
    rng = make_rng(seed)
    fb = float(fixed_bound) if fixed_bound is not None else 0.0
    if fixed_bound is not None and fb <= mu.sum():
        raise ModelError("fixed_bound must exceed the total baseline intensity")
    times, streams, violated = _thinning(rng, mu, src, dst, alpha, beta,
                                         -float(burn_in), float(horizon), fb)
    if violated:
        raise SimulationError(f"total intensity exceeded the fixed bound {fb}")
    return EventLog(times, streams + 1, horizon, n_streams=params.n_streams,
                    meta={"burn_in": float(burn_in)})


def spawn_seeds(seed, n: int):
    return np.random.SeedSequence(seed).spawn(n)


def simulate_days(params: Params, horizon: float, n_days: int, seed=0,
                  burn_in: Optional[float] = None, jobs: int = 1) -> list:
    """Independent replications (one per day) with child seeds of ``seed``."""
    seeds = spawn_seeds(seed, n_days)

    def run(s):
        return simulate(params, horizon, s, burn_in)

    if jobs <= 1:
        return [run(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, seeds))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_event_log_csv(log: EventLog, path) -> None:
    """Write ``time,stream`` rows plus a JSON sidecar holding horizon and stream count.

    Times use the shortest exact decimal form, so reading back is lossless.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "stream"])
        for t, s in zip(log.times.tolist(), log.streams.tolist()):
            w.writerow([repr(t), s])
    meta = {"horizon": log.horizon, "n_streams": log.n_streams, "n_events": len(log)}
    meta.update({k: v for k, v in log.meta.items() if k not in meta})
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_event_log_csv(path, horizon: Optional[float] = None,
                       n_streams: Optional[int] = None) -> EventLog:
    """Read a ``time,stream`` file; missing horizon/stream count come from the sidecar."""
    path = Path(path)
    meta = {}
    if _sidecar(path).exists():
        meta = json.loads(_sidecar(path).read_text())
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time", "stream"]:
            raise ModelError(f"{path}: expected header time,stream")
        rows = [r for r in reader if r]
    try:
        times = np.array([float(r[0]) for r in rows])
        streams = np.array([int(r[1]) for r in rows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ModelError(f"{path}: malformed row ({exc})") from None
    horizon = horizon if horizon is not None else meta.get("horizon")
    if horizon is None:
        raise ModelError(f"{path}: horizon unknown (no sidecar and none given)")
    if n_streams is None:
        n_streams = meta.get("n_streams", 4 if streams.size and streams.max() > 2 else 2)
    extra = {k: v for k, v in meta.items() if k not in ("horizon", "n_streams", "n_events")}
    return EventLog(times, streams, horizon, n_streams=n_streams, meta=extra)


__all__ = [
    "SimulationError",
    "read_event_log_csv",
    "write_event_log_csv",
    "default_burn_in",
    "make_rng",
    "simulate",
    "simulate_days",
    "spawn_seeds",
]
