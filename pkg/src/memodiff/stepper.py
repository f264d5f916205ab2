"""Time integration of the diffusion problem with a measure memory term.

Two stepping paths are provided.  ``solve`` is the production path: implicit
Euler where the newest memory cell weight w0 is folded into the system matrix
(keeping it SPD for every dt) and the remaining history is lagged.  It
factors the tridiagonal system once with the Thomas algorithm.
``solve_picard`` is a cross-validation path: it partitions (0, T] into
subintervals short enough that the per-interval fixed-point map is a
contraction, and iterates that map to convergence.  Both paths discretize the
equation identically, so their fixed points coincide; they differ only in the
arithmetic route, which makes their agreement a strong consistency check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convolution import TimeGrid, build_weights, make_grid, memory_sum
from .errors import NoAdmissibleDeltaError, NonFiniteStateError, PicardDivergenceError
from .kernel import MeasureKernel, restrict, total_mass
from .mesh_fem import FemMatrices, dual_norm, form_constants, seminorm_v

__all__ = [
    "ProblemSpec",
    "Trajectory",
    "SolveReport",
    "RestrictionReport",
    "DtDualReport",
    "solve",
    "solve_picard",
    "restriction_consistency",
    "dt_dual_norm_series",
    "trajectory_csv",
]

ForcingFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """Data of one initial-history value problem on (0, horizon].

    ``history`` is sampled at the grid nodes in (-tau_max, 0); passing None
    selects the zero extension (states before t=0 vanish, node 0 carries u0),
    which is the convention under which the dissipation theory applies.
    A non-None history must satisfy history(0, x) = u0.
    """

    fem: FemMatrices
    kernel: MeasureKernel
    u0: np.ndarray
    horizon: float
    dt: float
    forcing: ForcingFn | None = None
    history: ForcingFn | None = None

    def __post_init__(self) -> None:
        u0 = np.asarray(self.u0, dtype=float)
        object.__setattr__(self, "u0", u0)
        if u0.shape != (self.fem.n_dofs,):
            raise ValueError(f"u0 shape {u0.shape} does not match interior node count {self.fem.n_dofs}")
        if self.horizon <= 0.0 or self.dt <= 0.0:
            raise ValueError("horizon and dt must be positive")
        if self.kernel.tau_max > self.horizon * (1.0 + 1e-12):
            raise ValueError(
                f"kernel memory horizon tau_max={self.kernel.tau_max} exceeds the problem horizon {self.horizon}"
            )

    def grid(self) -> TimeGrid:
        return make_grid(self.dt, self.horizon, self.kernel.tau_max)


@dataclass
class Trajectory:
    """Nodal solution on the full grid, history nodes included."""

    grid: TimeGrid
    states: np.ndarray

    def value(self, n: int) -> np.ndarray:
        """State at time index n (negative indices address the history)."""
        return self.states[n + self.grid.n_history]

    def times(self) -> np.ndarray:
        return self.grid.times()

    def solution(self) -> np.ndarray:
        """Rows for indices 0..n_steps."""
        return self.states[self.grid.n_history :]


@dataclass
class SolveReport:
    wall_time: float
    max_linear_residual: float
    contraction_factor: float | None = None
    delta: float | None = None
    picard_sweeps: list[int] = field(default_factory=list)


def _initial_states(p: ProblemSpec, grid: TimeGrid) -> np.ndarray:
    states = np.zeros((grid.n_nodes, p.fem.n_dofs))
    nh = grid.n_history
    if p.history is not None:
        x = p.fem.mesh.interior_nodes
        for idx in range(-nh, 1):
            states[idx + nh] = np.asarray(p.history(idx * grid.dt, x), dtype=float)
        scale = max(1.0, float(np.max(np.abs(p.u0))))
        mismatch = float(np.max(np.abs(states[nh] - p.u0)))
        if mismatch > 1e-12 * scale:
            raise ValueError(f"history(0) differs from u0 by {mismatch:.3e}; the data are inconsistent")
    states[nh] = p.u0
    return states


def _forcing_load(p: ProblemSpec, t: float) -> np.ndarray:
    if p.forcing is None:
        return np.zeros(p.fem.n_dofs)
    x = p.fem.mesh.interior_nodes
    return p.fem.mass.matvec(np.asarray(p.forcing(t, x), dtype=float))


def solve(p: ProblemSpec) -> tuple[Trajectory, SolveReport]:
    """Implicit Euler march with the w0 memory weight treated implicitly."""
    t0 = time.perf_counter()
    grid = p.grid()
    states = _initial_states(p, grid)
    w = build_weights(p.kernel, grid)
    dt = grid.dt
    nh = grid.n_history

    sysm = p.fem.mass + p.fem.k0.scaled(dt) + p.fem.k1.scaled(dt * w.ac[0])
    factor = sysm.factor()  # raises CoercivityError unless SPD

    max_res = 0.0
    for n in range(1, grid.n_steps + 1):
        lagged = memory_sum(w, states, n, skip_current=True)
        rhs = p.fem.mass.matvec(states[n - 1 + nh]) + dt * _forcing_load(p, n * dt) - dt * p.fem.k1.matvec(lagged)
        u = factor.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise NonFiniteStateError(f"state became non-finite at step {n} (t={n * dt})")
        max_res = max(max_res, float(np.max(np.abs(sysm.matvec(u) - rhs))))
        states[n + nh] = u

    report = SolveReport(wall_time=time.perf_counter() - t0, max_linear_residual=max_res)
    return Trajectory(grid=grid, states=states), report


def _choose_delta(p: ProblemSpec, grid: TimeGrid, safety: float) -> tuple[int, float]:
    """Largest subinterval step count with contraction factor <= safety."""
    fc = form_constants(p.fem)
    if fc.lambda1 == 0.0 or p.kernel.is_zero:
        return grid.n_steps, 0.0

    def q_of(k: int) -> float:
        return fc.lambda1 * total_mass(p.kernel, k * grid.dt) / fc.alpha0

    if q_of(1) > safety:
        q1 = q_of(1)
        if q1 >= 1.0:
            raise NoAdmissibleDeltaError(
                f"even delta=dt gives contraction factor {q1:.3f} >= 1; the kernel carries too much mass near 0"
            )
        return 1, q1
    lo, hi = 1, grid.n_steps
    while lo < hi:  # bisection on the monotone mass profile
        mid = (lo + hi + 1) // 2
        if q_of(mid) <= safety:
            lo = mid
        else:
            hi = mid - 1
    return lo, q_of(lo)


def solve_picard(
    p: ProblemSpec,
    safety: float = 0.5,
    picard_tol: float = 1e-12,
    max_sweeps: int = 500,
) -> tuple[Trajectory, SolveReport]:
    """March by contraction iteration on short subintervals.

    On each subinterval the memory contribution of the still-unknown window is
    frozen at the previous iterate, the resulting parabolic system is stepped
    through, and the sweep repeats until successive iterates agree to
    ``picard_tol`` (relative, discrete L2-in-time V-norm).
    """
    t0 = time.perf_counter()
    grid = p.grid()
    states = _initial_states(p, grid)
    w = build_weights(p.kernel, grid)
    dt = grid.dt
    nh = grid.n_history

    k_delta, q = _choose_delta(p, grid, safety)
    sysm = p.fem.mass + p.fem.k0.scaled(dt)
    factor = sysm.factor()
    loads = [np.zeros(p.fem.n_dofs)] + [_forcing_load(p, n * dt) for n in range(1, grid.n_steps + 1)]

    sweeps: list[int] = []
    max_res = 0.0
    a = 0
    while a < grid.n_steps:
        b = min(a + k_delta, grid.n_steps)
        prev = states.copy()
        prev[a + 1 + nh : b + 1 + nh] = states[a + nh]  # constant initial iterate
        first_diff = None
        for sweep in range(1, max_sweeps + 1):
            cur = prev.copy()
            for m in range(a + 1, b + 1):
                mem = memory_sum(w, prev, m)
                rhs = p.fem.mass.matvec(cur[m - 1 + nh]) + dt * loads[m] - dt * p.fem.k1.matvec(mem)
                u = factor.solve(rhs)
                if not np.all(np.isfinite(u)):
                    raise NonFiniteStateError(f"state became non-finite at step {m} (t={m * dt})")
                cur[m + nh] = u
            diff = math.sqrt(
                sum(dt * seminorm_v(cur[m + nh] - prev[m + nh], p.fem) ** 2 for m in range(a + 1, b + 1))
            )
            size = math.sqrt(sum(dt * seminorm_v(cur[m + nh], p.fem) ** 2 for m in range(a + 1, b + 1)))
            prev = cur
            if first_diff is None:
                first_diff = diff
            if diff <= picard_tol * max(size, 1e-30):
                sweeps.append(sweep)
                break
            if sweep >= 4 and first_diff > 0.0 and diff > 10.0 * first_diff:
                raise PicardDivergenceError(
                    f"fixed-point sweeps grow on ({a * dt}, {b * dt}]: the contraction assumption fails"
                )
        else:
            raise PicardDivergenceError(f"no convergence within {max_sweeps} sweeps on ({a * dt}, {b * dt}]")
        states[a + 1 + nh : b + 1 + nh] = prev[a + 1 + nh : b + 1 + nh]
        a = b

    report = SolveReport(
        wall_time=time.perf_counter() - t0,
        max_linear_residual=max_res,
        contraction_factor=q,
        delta=k_delta * dt,
        picard_sweeps=sweeps,
    )
    return Trajectory(grid=grid, states=states), report


@dataclass(frozen=True)
class RestrictionReport:
    max_abs_diff: float
    n_shared_nodes: int
    horizon_short: float
    horizon_long: float


def restriction_consistency(p: ProblemSpec, t1: float) -> RestrictionReport:
    """Solve on (0, t1] with the restricted kernel and compare to the long run.

    With matching data the two runs perform the same arithmetic on the shared
    window, so the difference is exactly zero; the report carries the measured
    maximum in case a configuration breaks that premise.
    """
    grid = p.grid()
    n1 = int(round(t1 / grid.dt))
    if n1 < 1 or n1 >= grid.n_steps or abs(n1 * grid.dt - t1) > 1e-9 * max(t1, grid.dt):
        raise ValueError(f"t1={t1} must be an interior grid multiple of dt={grid.dt}")

    short = ProblemSpec(
        fem=p.fem,
        kernel=restrict(p.kernel, t1),
        u0=p.u0,
        horizon=t1,
        dt=p.dt,
        forcing=p.forcing,
        history=p.history,
    )
    traj_short, _ = solve(short)
    traj_long, _ = solve(p)
    nh = min(traj_short.grid.n_history, traj_long.grid.n_history)
    diff = 0.0
    for idx in range(-nh, n1 + 1):
        diff = max(diff, float(np.max(np.abs(traj_short.value(idx) - traj_long.value(idx)))))
    return RestrictionReport(
        max_abs_diff=diff, n_shared_nodes=nh + n1 + 1, horizon_short=t1, horizon_long=p.horizon
    )


@dataclass(frozen=True)
class DtDualReport:
    series: np.ndarray
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0.0 else (0.0 if self.lhs == 0.0 else math.inf)


def dt_dual_norm_series(traj: Trajectory, p: ProblemSpec) -> DtDualReport:
    """Dual norm of the discrete time derivative, with its triangle bound.

    The scheme satisfies M du/dt = F - K0 u - K1 (mu*u) exactly, so the dual
    norm of the right side is the dual norm of the discrete time derivative;
    the aggregate is compared against ||f|| + Lambda0 ||u|| + ||memory||.
    """
    grid = traj.grid
    w = build_weights(p.kernel, grid)
    fc = form_constants(p.fem)
    dt = grid.dt
    series = np.zeros(grid.n_steps)
    mem_sq = 0.0
    f_sq = 0.0
    u_sq = 0.0
    for n in range(1, grid.n_steps + 1):
        u = traj.value(n)
        load_f = _forcing_load(p, n * dt)
        load_mem = p.fem.k1.matvec(memory_sum(w, traj.states, n))
        resid = load_f - p.fem.k0.matvec(u) - load_mem
        series[n - 1] = dual_norm(resid, p.fem)
        mem_sq += dt * dual_norm(load_mem, p.fem) ** 2
        f_sq += dt * dual_norm(load_f, p.fem) ** 2
        u_sq += dt * seminorm_v(u, p.fem) ** 2
    lhs = math.sqrt(float(np.sum(dt * series**2)))
    rhs = math.sqrt(f_sq) + fc.lambda0 * math.sqrt(u_sq) + math.sqrt(mem_sq)
    return DtDualReport(series=series, lhs=lhs, rhs=rhs)


def trajectory_csv(traj: Trajectory) -> str:
    """CSV dump: header t,x_1,...,x_{n-1}; one row per node, history included."""
    n_dofs = traj.states.shape[1]
    lines = ["t," + ",".join(f"x_{i}" for i in range(1, n_dofs + 1))]
    for t, row in zip(traj.times(), traj.states):
        lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"
