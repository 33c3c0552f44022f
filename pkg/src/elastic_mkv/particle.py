"""N-particle system with elastic feedback and physical cascade resolution.

The simulator works in the absorbing reformulation: particle i carries a
headroom h_i = Y_t^i + xi_i (distance to elastic killing), initialised to
X_0^i + xi_i, and dies when its headroom reaches 0.  Cascades are resolved
per step as the least fixed point of the empirical kill-count map, which
is the discrete analog of the physical jump condition.

Because the elastic simulator and the absorbing simulator run the exact
same headroom arithmetic on the exact same draws, their kill nodes and
loss curves agree bit for bit whenever kappa > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .paths import LossCurve, TimeGrid
from .sampling import ModelParams, RngStream, sample_exponential, sample_initial

__all__ = [
    "ParticleSystemState",
    "SimOutput",
    "Histogram",
    "resolve_cascade",
    "simulate_elastic",
    "simulate_absorbing",
    "empirical_density",
    "gaussian_increments",
]

# Sub-stream tags: every consumer of randomness gets a fixed slot so that
# the same seed replays the same draws across kappa, alpha, and solvers.
STREAM_INITIAL = 0
STREAM_THRESHOLD = 1
STREAM_GAUSS = 2
STREAM_BRIDGE = 3


@dataclass
class ParticleSystemState:
    """Per-particle state at a grid node, after cascade resolution.

    Dead particles carry headroom +inf so they never re-enter a cascade.
    """

    time_index: int
    headroom: np.ndarray
    alive: np.ndarray
    loss: float
    kill_node: np.ndarray


@dataclass
class SimOutput:
    loss_curve: LossCurve
    kill_nodes: np.ndarray  # -1 for particles alive at t_end
    n_cascades: int
    largest_jump: float
    final_state: ParticleSystemState
    mean_reflected: Optional[np.ndarray] = None
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    masses: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))


def resolve_cascade(headrooms: np.ndarray, alpha: float, n_total: int):
    """Least fixed point of F(x) = (1/N) #{i : h_i <= alpha x} from x = 0.

    `headrooms` are post-diffusion values of the currently alive
    particles (entries of +inf are ignored, which lets callers pass a
    full array with dead particles masked out).  Returns the jump size D
    (an exact multiple of 1/N) and the indices of the killed particles.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    h = np.asarray(headrooms)
    if h.size == 0 or not np.any(h <= 0.0):
        return 0.0, np.empty(0, dtype=np.int64)
    # Only headrooms below alpha * (alive fraction) can ever be killed.
    cap = alpha * (h.size / n_total)
    cand = np.flatnonzero(h <= cap)
    hs = np.sort(h[cand])
    j = int(np.searchsorted(hs, 0.0, side="right"))
    while True:
        j_next = int(np.searchsorted(hs, alpha * (j / n_total), side="right"))
        if j_next == j:
            break
        j = j_next
    d = j / n_total
    killed = cand[h[cand] <= alpha * d]
    return d, killed


def gaussian_increments(stream_base: RngStream, step: int, n: int) -> np.ndarray:
    """Standard-normal increments for step k, one entry per particle.

    Indexed only by (seed, step, particle index): the same Brownian
    drivers are replayed across kappa, alpha, and solver variants, and a
    permutation of particle indices permutes the draws.
    """
    return stream_base.child(STREAM_GAUSS, step).generator().standard_normal(n)


def _simulate_core(
    x0: np.ndarray,
    xi: Optional[np.ndarray],
    alpha: float,
    grid: TimeGrid,
    gauss: Callable[[int], np.ndarray],
    *,
    use_running_minimum: bool = False,
    snapshot_nodes: Iterable[int] = (),
    track_reflected_mean: bool = False,
) -> SimOutput:
    """Time-step the particle system.  xi=None means no elastic killing."""
    n = x0.size
    n_nodes = grid.n_nodes
    sdt = np.sqrt(grid.dt)
    killable = xi is not None
    snapshot_nodes = frozenset(int(k) for k in snapshot_nodes)
    track_y = bool(
        (not killable) or use_running_minimum or snapshot_nodes or track_reflected_mean
    )

    if killable and not use_running_minimum:
        h = x0 + xi
    else:
        h = None
    if use_running_minimum:
        xi = xi.astype(float).copy()  # killed entries are parked at +inf
    if track_y:
        y = x0.astype(float).copy()
        y_min = y.copy()
    alive = np.ones(n, dtype=bool)
    kill_node = np.full(n, -1, dtype=np.int64)
    dead = 0
    loss_vals = np.empty(n_nodes)
    mean_reflected = np.empty(n_nodes) if track_reflected_mean else None
    snapshots: dict[int, np.ndarray] = {}
    n_cascades = 0
    largest = 0.0

    def resolve_node(k: int) -> None:
        nonlocal dead, n_cascades, largest
        if not killable:
            return
        hvals = h if h is not None else y + xi
        d, killed = resolve_cascade(hvals, alpha, n)
        shift = alpha * d
        if use_running_minimum:
            # Direct bookkeeping of the reflection term: apply the jump
            # drift first, then kill on accumulated pushing >= threshold.
            if d > 0.0:
                np.subtract(y, shift, out=y)
                np.minimum(y_min, y, out=y_min)
            pushed = np.maximum(0.0, -y_min)
            killed = np.flatnonzero(alive & (pushed >= xi))
            d = killed.size / n
        if killed.size:
            alive[killed] = False
            kill_node[killed] = k
            dead += killed.size
            n_cascades += 1
            largest = max(largest, d)
            if h is not None:
                h[killed] = np.inf
            if use_running_minimum:
                xi[killed] = np.inf
        if d > 0.0 and not use_running_minimum:
            if h is not None:
                np.subtract(h, shift, out=h)
            if track_y:
                np.subtract(y, shift, out=y)
                np.minimum(y_min, y, out=y_min)

    def record(k: int) -> None:
        loss_vals[k] = dead / n
        if track_reflected_mean or k in snapshot_nodes:
            reflected = y + np.maximum(0.0, -y_min)
            if track_reflected_mean:
                mean_reflected[k] = float(np.sum(reflected[alive])) / n
            if k in snapshot_nodes:
                snapshots[k] = reflected[alive].copy()

    resolve_node(0)
    record(0)
    for k in range(1, n_nodes):
        z = gauss(k)
        inc = sdt * z
        if h is not None:
            h += inc
        if track_y:
            y += inc
            np.minimum(y_min, y, out=y_min)
        resolve_node(k)
        record(k)

    final = ParticleSystemState(
        time_index=n_nodes - 1,
        headroom=h if h is not None else (y + xi if killable else np.full(n, np.inf)),
        alive=alive,
        loss=dead / n,
        kill_node=kill_node,
    )
    return SimOutput(
        loss_curve=LossCurve(grid, loss_vals),
        kill_nodes=kill_node,
        n_cascades=n_cascades,
        largest_jump=largest,
        final_state=final,
        mean_reflected=mean_reflected,
        snapshots=snapshots,
    )


def simulate_elastic(
    params: ModelParams,
    stream_base: RngStream,
    *,
    use_running_minimum: bool = False,
    snapshot_nodes: Iterable[int] = (),
    track_reflected_mean: bool = False,
) -> SimOutput:
    """Euler simulation of the elastic-feedback particle system.

    Per step: alive particles diffuse by sqrt(dt) * Z, then the cascade
    at the node is resolved as a least fixed point and the jump drift
    -alpha * D is applied to the survivors.  kappa = 0 disables killing
    entirely, so the loss stays 0 and the tracked reflected paths equal
    the Skorokhod reflection of X_0 + B nodewise.
    """
    n = params.n_particles
    x0 = sample_initial(params.law, n, stream_base.child(STREAM_INITIAL))
    if params.kappa > 0:
        xi = sample_exponential(params.kappa, n, stream_base.child(STREAM_THRESHOLD))
    else:
        xi = None
    return _simulate_core(
        x0,
        xi,
        params.alpha,
        params.grid,
        lambda k: gaussian_increments(stream_base, k, n),
        use_running_minimum=use_running_minimum and xi is not None,
        snapshot_nodes=snapshot_nodes,
        track_reflected_mean=track_reflected_mean,
    )


def simulate_absorbing(
    params: ModelParams,
    stream_base: RngStream,
    *,
    shift: Optional[float] = None,
    snapshot_nodes: Iterable[int] = (),
    track_reflected_mean: bool = False,
) -> SimOutput:
    """Absorbing reformulation: q_i = X_0^i + xi_i + B^i - alpha Lambda^N,
    killed at q <= 0.

    Draws (initials, thresholds, increments) come from the same stream
    slots as `simulate_elastic`, so running both on one seed gives
    identical kill nodes and loss curves, exactly.  With kappa = 0 an
    explicit `shift` replaces the threshold sample (shift=0.0 gives the
    plain absorbing model).
    """
    n = params.n_particles
    x0 = sample_initial(params.law, n, stream_base.child(STREAM_INITIAL))
    if params.kappa > 0:
        q0 = x0 + sample_exponential(params.kappa, n, stream_base.child(STREAM_THRESHOLD))
    elif shift is not None:
        q0 = x0 + shift
    else:
        raise ValueError("kappa = 0 requires an explicit shift for the absorbing model")
    return _simulate_core(
        q0,
        np.zeros(n),
        params.alpha,
        params.grid,
        lambda k: gaussian_increments(stream_base, k, n),
        snapshot_nodes=snapshot_nodes,
        track_reflected_mean=track_reflected_mean,
    )


def empirical_density(output: SimOutput, node: int, bin_width: float) -> Histogram:
    """Histogram of the reflected positions of the alive particles at a node.

    Masses are counts / N, so they sum to the survival fraction
    1 - Lambda^N at the node (up to float accumulation across bins).
    Requires the node to have been stored via `snapshot_nodes`.
    """
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    if node not in output.snapshots:
        raise ValueError(
            f"node {node} was not stored; pass it via snapshot_nodes when simulating"
        )
    values = output.snapshots[node]
    n = output.kill_nodes.size
    if values.size == 0:
        return Histogram(edges=np.array([0.0, bin_width]), masses=np.zeros(1))
    n_bins = max(1, int(np.ceil(np.max(values) / bin_width)))
    edges = bin_width * np.arange(n_bins + 1)
    if edges[-1] < np.max(values):  # guard against float rounding at the top edge
        edges = np.append(edges, edges[-1] + bin_width)
    counts, edges = np.histogram(values, bins=edges)
    return Histogram(edges=edges, masses=counts / n)
