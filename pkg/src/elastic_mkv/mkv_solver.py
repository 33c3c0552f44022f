"""Solvers for the loss function itself: the first-passage operator, its
Picard iterates from zero, analytic oracles, and the blow-up criterion.

The operator maps a loss curve l to the distribution function of the
first time X_0 + xi + B - alpha * l drops to 0 or below.  Its iterates
from the zero curve increase to the minimal solution; running every
iterate on one fixed sample bank (common random numbers) makes that
monotonicity exact at every node instead of statistical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special

from .paths import LossCurve, sup_distance
from .particle import STREAM_BRIDGE, STREAM_GAUSS, STREAM_INITIAL, STREAM_THRESHOLD
from .sampling import (
    InitialLaw,
    ModelParams,
    PointMass,
    RngStream,
    mean_initial,
    sample_exponential,
    sample_initial,
)

__all__ = [
    "PicardConfig",
    "SolveReport",
    "gamma_apply",
    "gamma_zero_analytic",
    "picard_solve",
    "blowup_guaranteed",
]


@dataclass(frozen=True)
class PicardConfig:
    mc_samples: int
    n_iter_max: int = 20
    bridge_correction: bool = True
    stop_tol: Optional[float] = None  # default 2 / sqrt(mc_samples)

    def __post_init__(self) -> None:
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.n_iter_max < 1:
            raise ValueError("n_iter_max must be >= 1")
        if self.stop_tol is not None and self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")

    @property
    def tol(self) -> float:
        return self.stop_tol if self.stop_tol is not None else 2.0 / np.sqrt(self.mc_samples)


@dataclass
class SolveReport:
    iterates: list[LossCurve]
    converged: bool
    final: LossCurve
    sup_distances: list[float] = field(default_factory=list)


def gamma_apply(
    l: LossCurve, params: ModelParams, config: PicardConfig, stream: RngStream
) -> LossCurve:
    """Monte Carlo image of a loss curve under the first-passage operator.

    Each sample draws (x0, xi, Brownian path) and contributes the first
    node where x0 + xi + B - alpha * l drops to 0 or below.  Within a
    step the input loss is applied at its left-node value, so the sample
    path is driftless Brownian there; with `bridge_correction` the exact
    crossing probability exp(-2ab/dt) of that driftless bridge is used
    to kill between nodes.  The draws depend only on the stream, never
    on l, so the output is pathwise monotone in l.
    """
    if l.grid != params.grid:
        raise ValueError("loss curve must live on the model grid")
    grid = params.grid
    n = config.mc_samples
    if params.kappa == 0:
        return LossCurve.zero(grid)

    x0 = sample_initial(params.law, n, stream.child(STREAM_INITIAL))
    xi = sample_exponential(params.kappa, n, stream.child(STREAM_THRESHOLD))
    lv = l.values
    alpha = params.alpha
    dt = grid.dt
    sdt = np.sqrt(dt)

    cur = x0 + xi - alpha * lv[0]
    alive = cur > 0.0
    kill_counts = np.zeros(grid.n_nodes, dtype=np.int64)
    kill_counts[0] = n - int(np.count_nonzero(alive))

    for k in range(1, grid.n_nodes):
        z = stream.child(STREAM_GAUSS, k).generator().standard_normal(n)
        prev = cur
        cur = cur + sdt * z
        if config.bridge_correction:
            u = stream.child(STREAM_BRIDGE, k).generator().random(n)
            with np.errstate(over="ignore"):
                bridge_hit = alive & (prev > 0.0) & (cur > 0.0) & (
                    u < np.exp(-2.0 * prev * cur / dt)
                )
        else:
            bridge_hit = False
        cur = cur - alpha * (lv[k] - lv[k - 1])
        newly_dead = alive & ((cur <= 0.0) | bridge_hit)
        kill_counts[k] = int(np.count_nonzero(newly_dead))
        alive &= ~newly_dead

    return LossCurve(grid, np.cumsum(kill_counts) / n)


def gamma_zero_analytic(t: float, law: InitialLaw, kappa: float) -> float:
    """Probability that x0 + xi + B reaches 0 by time t, by quadrature.

    Reflection principle: conditionally on the starting distance y the
    probability is 2 Phi(-y / sqrt(t)); the xi integral is computed in
    unit-exponential coordinates so it stays well conditioned for any
    kappa, and the outer integral runs over the law's density (or is a
    point evaluation for a point mass).  Absolute error <= 1e-8.
    """
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    sqrt_t = np.sqrt(t)

    def crossing(y: float) -> float:
        return 2.0 * special.ndtr(-y / sqrt_t)

    def over_threshold(x0: float) -> float:
        val, _ = integrate.quad(
            lambda v: np.exp(-v) * crossing(x0 + v / kappa),
            0.0,
            np.inf,
            epsabs=1e-10,
            epsrel=1e-10,
            limit=200,
        )
        return val

    if isinstance(law, PointMass):
        return over_threshold(law.x0)
    lo, hi = _support(law)
    val, _ = integrate.quad(
        lambda x: law.density(x) * over_threshold(x),
        lo,
        hi,
        epsabs=1e-9,
        epsrel=1e-9,
        limit=200,
    )
    return float(val)


def _support(law: InitialLaw) -> tuple[float, float]:
    from .sampling import Gamma, ShiftedExponential, Uniform

    if isinstance(law, Uniform):
        return law.a, law.b
    if isinstance(law, Gamma):
        return 0.0, np.inf
    if isinstance(law, ShiftedExponential):
        return law.shift, np.inf
    raise TypeError(f"law {law!r} has no density support")


def picard_solve(
    params: ModelParams, config: PicardConfig, stream: RngStream
) -> SolveReport:
    """Iterate the first-passage operator from the zero curve.

    Every iterate reuses the same sample bank, so the iterates are
    nodewise nondecreasing in n exactly and their limit is the smallest
    Monte Carlo fixed point.  Stops when successive iterates are within
    `stop_tol` in sup distance; non-convergence is reported, not raised.
    """
    current = LossCurve.zero(params.grid)
    iterates = [current]
    distances: list[float] = []
    converged = False
    for _ in range(config.n_iter_max):
        nxt = gamma_apply(current, params, config, stream)
        d = sup_distance(nxt, current)
        iterates.append(nxt)
        distances.append(d)
        current = nxt
        if d < config.tol:
            converged = True
            break
    return SolveReport(
        iterates=iterates, converged=converged, final=current, sup_distances=distances
    )


def blowup_guaranteed(alpha: float, law: InitialLaw, kappa: float) -> bool:
    """True when the feedback is provably too strong for a continuous loss.

    Criterion: alpha > 2 * (mean of the initial law + 1/kappa).  False is
    agnostic, not a continuity certificate.  kappa = 0 gives False (the
    threshold is infinite; the loss is identically zero).
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    if kappa == 0:
        return False
    return alpha > 2.0 * (mean_initial(law) + 1.0 / kappa)
