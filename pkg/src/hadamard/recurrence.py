"""Periodicity and almost-periodicity detection for orbits and scalar traces.

Every routine accepts either an :class:`~hadamard.maps.Orbit`, a sequence of
points, or a 1-D array of reals (a scalar trace); in the last case the metric
is ``|a - b|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import GeometryError, Point, SpaceDescriptor
from .maps import MapDescriptor, Orbit, apply


class HorizonError(ValueError):
    """The horizon cannot accommodate the requested window lengths."""


def _as_sequence(seq):
    """Return (dist, coords) for an orbit, point list or scalar array."""
    if isinstance(seq, Orbit):
        return seq.space.model.dist, seq.coords
    if len(seq) and isinstance(seq[0], Point):
        space = seq[0].space
        return space.model.dist, np.stack([p.coords for p in seq])
    arr = np.asarray(seq, dtype=float)
    if arr.ndim != 1:
        raise GeometryError("expected an orbit, a point list or a 1-D scalar trace")
    return (lambda a, b: np.abs(np.asarray(a) - np.asarray(b))), arr


def lag_deviations(seq, p: int, horizon: int | None = None) -> np.ndarray:
    """d(x_{n+p}, x_n) for n = 0 .. horizon - p."""
    dist, x = _as_sequence(seq)
    h = len(x) - 1 if horizon is None else horizon
    if p < 1 or p > h:
        return np.empty(0)
    return dist(x[p : h + 1], x[: h + 1 - p])


def detect_period(seq, tolerance: float = 1e-9, max_period: int | None = None) -> int | None:
    """Smallest p with max_n d(x_{n+p}, x_n) <= tolerance, or None.

    Only periods seen at least twice within the data (2p <= length) are
    considered.
    """
    dist, x = _as_sequence(seq)
    limit = len(x) // 2
    if max_period is not None:
        limit = min(limit, max_period)
    for p in range(1, limit + 1):
        if np.max(dist(x[p:], x[:-p])) <= tolerance:
            return p
    return None


def scalar_trace(orbit, probe: Point) -> np.ndarray:
    """The real sequence d(x_n, probe)."""
    dist, x = _as_sequence(orbit)
    if isinstance(orbit, Orbit) and orbit.space != probe.space:
        raise GeometryError("probe and orbit live in different spaces")
    return dist(x, probe.coords)


@dataclass
class AlmostPeriodReport:
    """Outcome of an almost-period search.

    For each window start k the arrays hold the witness p in (k, k+L) and
    max_{N <= n <= horizon-p} d(x_{n+p}, x_n); p = -1 marks a window without
    witness.
    """

    epsilon: float
    L: int
    N: int
    window_k: np.ndarray
    window_p: np.ndarray
    window_deviation: np.ndarray
    verified_horizon: int
    success: bool

    @property
    def windows(self) -> list[tuple[int, int, float]]:
        return list(zip(self.window_k.tolist(), self.window_p.tolist(), self.window_deviation.tolist()))

    def rows(self):
        yield ("k", "p", "max_deviation")
        yield from self.windows


def _default_n_grid(horizon: int) -> list[int]:
    return sorted({0, horizon // 16, horizon // 8, horizon // 4})


def find_almost_period(
    seq,
    epsilon: float,
    horizon: int | None = None,
    L_max: int | None = None,
    N_grid: Sequence[int] | None = None,
) -> AlmostPeriodReport:
    """Search (N, L) such that every window (k, k+L) holds an epsilon-almost period.

    ``p`` qualifies for a given N when d(x_{n+p}, x_n) < epsilon for all
    N <= n <= horizon - p. N runs over a coarse grid (smallest first) and L
    over 2..L_max; windows are scanned exhaustively for k = 0 .. horizon-N-L,
    so every candidate has at least one index checked.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    dist, x = _as_sequence(seq)
    H = len(x) - 1 if horizon is None else int(horizon)
    if H > len(x) - 1:
        raise HorizonError(f"horizon {H} exceeds the available {len(x) - 1} steps")
    N_grid = sorted(set(int(n) for n in (N_grid if N_grid is not None else _default_n_grid(H))))
    L_max = int(L_max if L_max is not None else max(2, H // 4))
    if L_max < 2 or L_max + N_grid[-1] > H:
        raise HorizonError(f"horizon {H} too small for L_max={L_max} with N up to {N_grid[-1]}")

    # maxdev[i, p] = max over N_grid[i] <= n <= H - p of d(x_{n+p}, x_n)
    maxdev = np.full((len(N_grid), H + 1), np.inf)
    for p in range(1, H - N_grid[0] + 1):
        dev = dist(x[p : H + 1], x[: H + 1 - p])
        suffix = np.maximum.accumulate(dev[::-1])[::-1]
        for i, N in enumerate(N_grid):
            if N <= H - p:
                maxdev[i, p] = suffix[N]

    best = None
    for i, N in enumerate(N_grid):
        span = H - N  # candidate p range is 1..span
        good = maxdev[i, : span + 1] < epsilon
        good[0] = False
        # next_good[j] = smallest good p >= j (span + 1 if none)
        next_good = np.full(span + 2, span + 1)
        idx = np.flatnonzero(good)
        if len(idx):
            pos = np.searchsorted(idx, np.arange(span + 2))
            has = pos < len(idx)
            next_good[has] = idx[pos[has]]
        # window (k, k+L) needs next_good[k+1] <= k + L - 1
        ks = np.arange(0, span - 1)
        need = next_good[ks + 1] - ks + 1
        need_prefix = np.maximum.accumulate(need) if len(need) else need
        for L in range(2, L_max + 1):
            last_k = span - L
            if last_k < 0:
                break
            if need_prefix[last_k] <= L:
                k = np.arange(0, last_k + 1)
                p = next_good[k + 1]
                best = AlmostPeriodReport(epsilon, L, N, k, p, maxdev[i, p], H, True)
                break
        if best is not None:
            return best

    # failure: report the N = N_grid[0], L = L_max windows with missing witnesses
    N = N_grid[0]
    span = H - N
    good = maxdev[0, : span + 1] < epsilon
    good[0] = False
    k = np.arange(0, span - L_max + 1)
    p = np.full(len(k), -1)
    dev = np.full(len(k), np.nan)
    for j, kk in enumerate(k):
        cand = np.flatnonzero(good[kk + 1 : kk + L_max]) + kk + 1
        if len(cand):
            p[j] = cand[0]
            dev[j] = maxdev[0, cand[0]]
    return AlmostPeriodReport(epsilon, L_max, N, k, p, dev, H, False)


@dataclass
class EpsNet:
    """Greedy epsilon-net; ``centers`` holds input indices in insertion order."""

    epsilon: float
    centers: list[int]
    covered: bool = True

    def __len__(self):
        return len(self.centers)

    def count_upto(self, m: int) -> int:
        """Centers of the greedy net built from the first m points."""
        return int(np.searchsorted(self.centers, m))


def eps_net(points, epsilon: float) -> EpsNet:
    """Scan in order; a point becomes a center iff no center is within epsilon.

    The greedy net is prefix-consistent, so :meth:`EpsNet.count_upto` gives the
    net size of every prefix at no extra cost.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    dist, x = _as_sequence(points)
    centers = []
    buf = np.empty((min(len(x), 1024),) + x.shape[1:])
    for i in range(len(x)):
        c = len(centers)
        if c == 0 or np.min(dist(buf[:c], x[i])) >= epsilon:
            if c == len(buf):
                buf = np.concatenate([buf, np.empty_like(buf)])
            buf[c] = x[i]
            centers.append(i)
    return EpsNet(float(epsilon), centers, True)


def omega_isometry_slack(m: MapDescriptor, tail: Sequence[Point]) -> float:
    """max over pairs of |d(Tu, Tv) - d(u, v)| on a late stretch of an orbit."""
    tail = list(tail)
    if len(tail) < 2:
        raise ValueError("tail needs at least two points")
    space: SpaceDescriptor = tail[0].space
    dist = space.model.dist
    x = np.stack([p.coords for p in tail])
    tx = np.stack([apply(m, p).coords for p in tail])
    d0 = dist(x[:, None], x[None, :])
    d1 = dist(tx[:, None], tx[None, :])
    return float(np.max(np.abs(d1 - d0)))
