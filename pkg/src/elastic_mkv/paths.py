"""Grid-sampled cadlag paths, the Skorokhod reflection map, and path metrics.

Every process in this package lives on a uniform time grid and is
interpreted as right-continuous between nodes.  Loss curves are grid
restrictions of nondecreasing [0, 1]-valued distribution functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeGrid",
    "GridPath",
    "LossCurve",
    "skorokhod_reflect",
    "sup_distance",
    "levy_metric",
    "jump_detect",
]

LEVY_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_end] with nodes k * dt, k = 0..n_steps."""

    t_end: float
    n_steps: int

    def __post_init__(self) -> None:
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_nodes)


def _as_node_values(grid: TimeGrid, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (grid.n_nodes,):
        raise ValueError(
            f"expected {grid.n_nodes} node values, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("path values must be finite")
    return arr


@dataclass(frozen=True)
class GridPath:
    """A cadlag path sampled at the grid nodes."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_node_values(self.grid, self.values))


@dataclass(frozen=True)
class LossCurve:
    """Nondecreasing [0, 1]-valued curve on the grid; value at 0- is 0."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    pre_value: float = 0.0

    def __post_init__(self) -> None:
        arr = _as_node_values(self.grid, self.values)
        if self.pre_value != 0.0:
            raise ValueError("pre_value must be 0")
        if arr[0] < 0.0 or arr[-1] > 1.0:
            raise ValueError("loss values must lie in [0, 1]")
        if np.any(np.diff(arr) < 0.0):
            raise ValueError("loss values must be nondecreasing")
        object.__setattr__(self, "values", arr)

    @classmethod
    def zero(cls, grid: TimeGrid) -> "LossCurve":
        return cls(grid, np.zeros(grid.n_nodes))


def _require_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise ValueError(f"mismatched grids: {a.grid} vs {b.grid}")


def skorokhod_reflect(y: GridPath) -> tuple[GridPath, GridPath]:
    """Reflect a path at zero: x = y + l with l the minimal pushing term.

    l_k = max(0, -min_{j<=k} y_j), so l is nondecreasing, x >= 0, and l
    increases at k only when x_k = 0 (exactly, also in floating point,
    because l_k then equals -y_k bit for bit).
    """
    running_min = np.minimum.accumulate(y.values)
    l = np.maximum(0.0, -running_min)
    x = y.values + l
    return GridPath(y.grid, x), GridPath(y.grid, l)


def sup_distance(a, b) -> float:
    """Uniform distance max_k |a_k - b_k| on a shared grid."""
    _require_same_grid(a, b)
    return float(np.max(np.abs(a.values - b.values)))


def _step_eval(times: np.ndarray, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    # Right-continuous step evaluation with constant extension past t_end.
    idx = np.searchsorted(times, t, side="right") - 1
    return values[np.clip(idx, 0, len(values) - 1)]


def levy_metric(a: LossCurve, b: LossCurve) -> float:
    """Levy distance between two loss curves on a shared grid.

    d(F, G) = inf{eps > 0 : F(t - eps) - eps <= G(t) <= F(t + eps) + eps
    for all t}, with the curves extended by 0 to the left of 0 and
    constantly to the right of t_end.  Computed by bisection on eps to
    absolute tolerance 1e-9.
    """
    _require_same_grid(a, b)
    times = a.grid.times()
    fa, fb = a.values, b.values

    def satisfied(eps: float) -> bool:
        shifted = times + eps
        return bool(
            np.all(fa <= _step_eval(times, fb, shifted) + eps)
            and np.all(fb <= _step_eval(times, fa, shifted) + eps)
        )

    hi = sup_distance(a, b)
    if hi == 0.0:
        return 0.0
    lo = 0.0
    while hi - lo > LEVY_TOL:
        mid = 0.5 * (lo + hi)
        if satisfied(mid):
            hi = mid
        else:
            lo = mid
    return hi


def jump_detect(l: LossCurve, threshold: float) -> list[tuple[int, float]]:
    """Nodes where the loss increment is at least `threshold`.

    The increment at node 0 is measured against the pre-value 0, so an
    initial jump is reported at k = 0.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    increments = np.diff(l.values, prepend=l.pre_value)
    nodes = np.flatnonzero(increments >= threshold)
    return [(int(k), float(increments[k])) for k in nodes]
