"""Karcher means of orbit windows and almost-convergence measurement."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .frechet import MeanResult, SolverConfig, SolverError, WeightedPoints, karcher_mean
from .geometry import Point, distance
from .maps import MapDescriptor, Orbit, fixed_point_residual


def geometric_grid(n_max: int, start: int = 25) -> list[int]:
    """{start, 2 start, 4 start, ...} capped by and ending at n_max."""
    grid = []
    n = start
    while n < n_max:
        grid.append(n)
        n *= 2
    grid.append(n_max)
    return grid


@dataclass(eq=False)
class ErgodicTable:
    """sigma_n^k for every (n, k) on the grid: the mean of x_k, ..., x_{k+n-1}."""

    orbit: Orbit
    n_values: list[int]
    k_values: list[int]
    grid: dict[tuple[int, int], MeanResult]
    warm_start: bool = True

    def mean(self, n: int, k: int) -> Point:
        return self.grid[(n, k)].mean

    @property
    def nonconverged(self) -> list[tuple[int, int]]:
        return [key for key, res in self.grid.items() if not res.converged]

    def rows(self):
        """CSV rows: one per cell."""
        shape = self.orbit.space.coord_shape
        ncoord = int(np.prod(shape))
        yield ("n", "k", *[f"c{i}" for i in range(ncoord)], "objective", "gradient_norm", "iterations", "converged")
        for n in self.n_values:
            for k in self.k_values:
                r = self.grid[(n, k)]
                yield (n, k, *r.mean.coords.ravel().tolist(), r.objective, r.gradient_norm, r.iterations, int(r.converged))


def ergodic_table(
    orbit: Orbit,
    n_values: Sequence[int],
    k_values: Sequence[int],
    cfg: SolverConfig | None = None,
    warm_start: bool = True,
    workers: int = 1,
) -> ErgodicTable:
    """Compute sigma_n^k over the grid.

    With ``warm_start`` each cell starts from the previous n's mean at the same
    k; turning it off gives the order-independent verification mode. Columns
    of fixed k never share state, so ``workers > 1`` spreads them over threads
    without changing any result.
    """
    n_values = sorted(set(int(n) for n in n_values))
    k_values = sorted(set(int(k) for k in k_values))
    if not n_values or not k_values or n_values[0] < 1 or k_values[0] < 0:
        raise ValueError("n-grid must be positive and k-grid non-negative")
    if n_values[-1] + k_values[-1] > len(orbit):
        raise IndexError(
            f"window k={k_values[-1]}, n={n_values[-1]} overruns an orbit of {len(orbit)} points"
        )
    space = orbit.space
    x = orbit.coords

    def column(k):
        out = []
        prev = None
        for n in n_values:
            w = WeightedPoints.uniform(space, x[k : k + n])
            res = karcher_mean(w, cfg, init=prev if warm_start else None)
            out.append(res)
            prev = res.mean
        return out

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            columns = list(pool.map(column, k_values))
    else:
        columns = [column(k) for k in k_values]
    grid = {}
    for k, col in zip(k_values, columns):
        for n, res in zip(n_values, col):
            grid[(n, k)] = res
    return ErgodicTable(orbit, n_values, k_values, grid, warm_start)


@dataclass
class AlmostConvergenceReport:
    reference: Point
    sup_deviation: dict[int, float]
    fixed_point_residual: float
    tail_slope: float
    residual_by_n: dict[int, float] = field(default_factory=dict)
    reference_spread: float = 0.0
    burn_in: int = 0
    monotone_after_burn_in: bool = True
    excluded: list[tuple[int, int]] = field(default_factory=list)

    def rows(self):
        yield ("n", "sup_deviation", "fixed_point_residual")
        for n, dev in self.sup_deviation.items():
            yield (n, dev, self.residual_by_n.get(n, float("nan")))


def _loglog_slope(ns, devs) -> float:
    ns = np.asarray(ns, dtype=float)
    devs = np.asarray(devs, dtype=float)
    keep = devs > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ns[keep]), np.log(devs[keep]), 1)[0])


def almost_convergence_report(table: ErgodicTable, m: MapDescriptor, burn_in: int = 100) -> AlmostConvergenceReport:
    """Measure sup_k d(sigma_n^k, reference) with reference = sigma_{n_max}^{k_min}.

    Non-converged cells are excluded from the sups and listed in ``excluded``.
    The tail slope is a log-log fit over n >= burn_in, excluding n_max (whose
    deviation is measured against itself).
    """
    n_max = table.n_values[-1]
    k0 = table.k_values[0]
    ref_cell = table.grid[(n_max, k0)]
    if not ref_cell.converged:
        raise SolverError("the reference cell did not converge")
    ref = ref_cell.mean
    excluded = table.nonconverged
    sup_dev = {}
    residual_by_n = {}
    for n in table.n_values:
        devs = [distance(table.grid[(n, k)].mean, ref) for k in table.k_values if (n, k) not in excluded]
        sup_dev[n] = max(devs) if devs else float("nan")
        residual_by_n[n] = fixed_point_residual(m, table.grid[(n, k0)].mean)
    spread = max(distance(table.grid[(n_max, k)].mean, ref) for k in table.k_values)
    tail = [n for n in table.n_values if burn_in <= n < n_max]
    slope = _loglog_slope(tail, [sup_dev[n] for n in tail])
    after = [sup_dev[n] for n in table.n_values if n >= burn_in]
    monotone = all(b <= a for a, b in zip(after, after[1:]))
    return AlmostConvergenceReport(
        reference=ref,
        sup_deviation=sup_dev,
        fixed_point_residual=fixed_point_residual(m, ref),
        tail_slope=slope,
        residual_by_n=residual_by_n,
        reference_spread=spread,
        burn_in=burn_in,
        monotone_after_burn_in=monotone,
        excluded=excluded,
    )
