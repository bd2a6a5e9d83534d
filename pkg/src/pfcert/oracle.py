import dataclasses
import itertools
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
import pandas as pd

from pfcert.acpf import (
    OperationalLimits,
    VoltageState,
    continuation_solve,
    eval_operational,
    min_slack,
    random_valid_state,
    solve_from_starts,
)
from pfcert.exceptions import ModelError, NoConvergence
from pfcert.netmodel import Network
from pfcert.region import RegionSpec
from pfcert.util import WorkerPool

logger = logging.getLogger(__name__)

RANDOM_STARTS = 8


class CellVerdict(str, Enum):
    STRICT = "strictly-feasible"
    NO_SOLUTION = "no-solution"
    VIOLATING = "constraint-violating"


@dataclasses.dataclass(frozen=True, eq=False)
class FeasibilityMap:
    """Verdicts on a grid over one or two injection coordinates.

    ``verdicts`` and ``min_slack`` have the grid's shape; ``voltages`` adds
    a trailing bus axis and holds NaN where no solution was found.
    """

    axes: tuple[int, ...]
    grids: tuple[np.ndarray, ...]
    base: np.ndarray
    verdicts: np.ndarray
    min_slack: np.ndarray
    voltages: np.ndarray
    seed: int = 0
    labels: tuple[str, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(grid) for grid in self.grids)

    @property
    def empty(self) -> bool:
        return any(len(grid) == 0 for grid in self.grids)

    def cells(self):
        return itertools.product(*(range(len(grid)) for grid in self.grids))

    def injection(self, cell: tuple[int, ...]) -> np.ndarray:
        s = self.base.copy()
        for axis, grid, pos in zip(self.axes, self.grids, cell):
            s[axis] = grid[pos]
        return s

    def to_frame(self) -> pd.DataFrame:
        names = ["x", "y"][: len(self.axes)]
        rows = []
        for cell in self.cells():
            row: dict[str, Any] = {
                name: grid[pos] for name, grid, pos in zip(names, self.grids, cell)
            }
            row["verdict"] = self.verdicts[cell]
            row["min_slack"] = self.min_slack[cell]
            rows.append(row)
        return pd.DataFrame(rows, columns=names + ["verdict", "min_slack"])

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False)


def _solve_cell(
    net: Network,
    lims: OperationalLimits,
    s: np.ndarray,
    neighbours: Sequence[tuple[np.ndarray, np.ndarray]],
    seed: int,
    cell_index: int,
) -> tuple[str, float, Optional[np.ndarray]]:
    """Continuation from solved neighbours, then flat start, then random starts."""
    constraints = lims.constraints(net)
    best: Optional[tuple[VoltageState, float]] = None

    for s_nb, voltage_nb in neighbours:
        try:
            V = continuation_solve(
                net, s_nb, VoltageState.from_rectangular(voltage_nb), s, steps=2
            )
        except NoConvergence:
            continue
        margin = min_slack(eval_operational(net, lims, V, constraints))
        if best is None or margin > best[1]:
            best = (V, margin)
        if margin > 0:
            break

    if best is None or not best[1] > 0:
        rng = np.random.default_rng([seed, cell_index])

        def starts():
            yield VoltageState.flat(net)
            for _ in range(RANDOM_STARTS):
                yield random_valid_state(net, rng)

        found = solve_from_starts(net, lims, s, starts())
        if found is not None and (best is None or found[1] > best[1]):
            best = found

    if best is None:
        return CellVerdict.NO_SOLUTION.value, -math.inf, None
    verdict = CellVerdict.STRICT if best[1] > 0 else CellVerdict.VIOLATING
    return verdict.value, best[1], best[0].voltage


async def map_feasible_set(
    net: Network,
    lims: OperationalLimits,
    axes: Sequence[int],
    ranges: Sequence[tuple[float, float]],
    resolution: int,
    base: Optional[np.ndarray] = None,
    seed: int = 0,
    jobs: int = 1,
) -> FeasibilityMap:
    """Brute-force strict feasibility over a grid of injections.

    Cells are solved in wavefronts of constant index sum so that every cell
    can continue from solutions of its already-solved 4-neighbours; cells of
    one wavefront are independent and run in parallel.
    """
    axes = tuple(int(a) for a in axes)
    if not 1 <= len(axes) <= 2:
        raise ModelError("a feasibility map needs one or two axes")
    if len(ranges) != len(axes):
        raise ModelError("one range is required per axis")
    for axis in axes:
        if not 0 <= axis < net.k:
            raise ModelError(f"axis {axis} outside injection vector of length {net.k}")

    base = net.nominal_injection() if base is None else np.asarray(base, dtype=float)
    count = max(0, int(resolution))
    grids = tuple(
        np.linspace(lo, hi, count) if lo <= hi else np.zeros(0) for lo, hi in ranges
    )
    shape = tuple(len(grid) for grid in grids)

    verdicts = np.full(shape, CellVerdict.NO_SOLUTION.value, dtype=object)
    slacks = np.full(shape, -math.inf)
    voltages = np.full(shape + (len(net.buses),), np.nan, dtype=complex)
    fmap = FeasibilityMap(
        axes=axes,
        grids=grids,
        base=base,
        verdicts=verdicts,
        min_slack=slacks,
        voltages=voltages,
        seed=seed,
        labels=tuple(net.injection_labels()[a] for a in axes),
    )
    if fmap.empty:
        return fmap

    waves: dict[int, list[tuple[int, ...]]] = {}
    for cell in fmap.cells():
        waves.setdefault(sum(cell), []).append(cell)

    def flat_index(cell: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(cell, shape))

    def neighbours(cell: tuple[int, ...]) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for dim in range(len(cell)):
            for step in (-1, 1):
                other = list(cell)
                other[dim] += step
                other_cell = tuple(other)
                if not 0 <= other[dim] < shape[dim] or sum(other_cell) >= sum(cell):
                    continue
                voltage = voltages[other_cell]
                if not np.any(np.isnan(voltage)):
                    out.append((fmap.injection(other_cell), voltage))
        return out

    async with WorkerPool(jobs) as pool:
        for level in sorted(waves):
            cells = waves[level]
            results = await pool.map(
                _solve_cell,
                [
                    (net, lims, fmap.injection(c), neighbours(c), seed, flat_index(c))
                    for c in cells
                ],
            )
            for cell, (verdict, margin, voltage) in zip(cells, results):
                verdicts[cell] = verdict
                slacks[cell] = margin
                if voltage is not None:
                    voltages[cell] = voltage

    strict = int(np.sum(verdicts == CellVerdict.STRICT.value))
    logger.info(
        "feasibility map: %d of %d cells strictly feasible", strict, verdicts.size
    )
    return fmap


@dataclasses.dataclass(frozen=True)
class ContainmentReport:
    contained: bool
    n_inside: int
    violated: tuple[tuple[tuple[float, ...], str], ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "contained": self.contained,
            "n_inside": self.n_inside,
            "violated": [
                {"point": list(point), "verdict": verdict}
                for point, verdict in self.violated
            ],
        }


def check_containment(
    fmap: FeasibilityMap, region: RegionSpec, tol: float = 1e-12
) -> ContainmentReport:
    """Grid cells inside the region's slice through its center along the
    map axes that are not strictly feasible."""
    violated = []
    inside = 0
    for cell in fmap.cells():
        point = region.center.copy()
        coords = []
        for axis, grid, pos in zip(fmap.axes, fmap.grids, cell):
            point[axis] = grid[pos]
            coords.append(float(grid[pos]))
        if not region.contains(point, tol=tol):
            continue
        inside += 1
        if fmap.verdicts[cell] != CellVerdict.STRICT.value:
            violated.append((tuple(coords), str(fmap.verdicts[cell])))
    return ContainmentReport(
        contained=not violated, n_inside=inside, violated=tuple(violated)
    )
