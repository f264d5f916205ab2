"""Discrete convolution of a measure kernel with a time series on a uniform grid.

Cell weights integrate the density exactly over each grid cell (product
integration), so weakly singular densities pose no difficulty; atoms must sit
on grid points.  The running convolution samples the current/past solution at
cell left endpoints, so the weight w0 multiplies the newest value; cells and
atoms reaching behind t = 0 sample the prescribed history.  This direct
O(N^2) evaluation is the reference path against which faster representations
are validated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistoryError, MisalignedAtomError
from .kernel import MeasureKernel, MollifiedDensity, _adaptive_simpson
from .mesh_fem import FemMatrices, dual_norm, form_constants, norm_h, seminorm_v

__all__ = [
    "TimeGrid",
    "QuadratureWeights",
    "make_grid",
    "build_weights",
    "memory_sum",
    "convolve_direct",
    "apply_memory",
    "young_check",
    "operator_norm_check",
    "YoungReport",
    "OperatorNormReport",
]

ALIGNMENT_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid: ``n_history`` nodes before t=0, ``n_steps`` after."""

    dt: float
    n_history: int
    n_steps: int

    def __post_init__(self) -> None:
        if self.dt <= 0.0 or self.n_steps < 1 or self.n_history < 0:
            raise ValueError("grid needs dt > 0, n_steps >= 1, n_history >= 0")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def n_nodes(self) -> int:
        return self.n_history + self.n_steps + 1

    def times(self) -> np.ndarray:
        return np.arange(-self.n_history, self.n_steps + 1) * self.dt


def make_grid(dt: float, horizon: float, tau_max: float) -> TimeGrid:
    """Grid covering (0, horizon] with enough history nodes for tau_max."""
    n_steps = int(round(horizon / dt))
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * max(horizon, dt):
        raise ValueError(f"dt={dt} does not divide the horizon {horizon}")
    n_history = int(math.ceil(tau_max / dt - 1e-9)) if tau_max > 0.0 else 0
    return TimeGrid(dt=float(dt), n_history=n_history, n_steps=n_steps)


@dataclass(frozen=True)
class QuadratureWeights:
    """Cell integrals of the density plus grid placements of the atoms.

    ``ac[n]`` is the kernel mass of the cell (n*dt, (n+1)*dt]; ``j_last`` is
    the index of the last cell that can carry mass.
    """

    grid: TimeGrid
    ac: np.ndarray
    atom_lags: np.ndarray
    atom_masses: np.ndarray
    j_last: int

    @property
    def discrete_mass(self) -> float:
        return float(self.ac.sum() + self.atom_masses.sum())


def build_weights(kernel: MeasureKernel, grid: TimeGrid, alignment_tol: float = ALIGNMENT_TOL) -> QuadratureWeights:
    """Integrate the kernel against the grid cells and place the atoms.

    Raises MisalignedAtomError when an atom delay is not a grid multiple
    within ``alignment_tol`` (relative to dt).
    """
    dt = grid.dt
    if kernel.tau_max > grid.horizon * (1.0 + 1e-12) + 1e-300:
        raise ValueError(
            f"kernel memory horizon tau_max={kernel.tau_max} exceeds the grid horizon {grid.horizon}"
        )
    if kernel.tau_max > grid.n_history * dt * (1.0 + 1e-12) + 1e-300:
        raise InsufficientHistoryError(
            f"grid provides history {grid.n_history * dt}, kernel needs tau_max={kernel.tau_max}"
        )

    lags = []
    masses = []
    for atom in kernel.atoms:
        ratio = atom.tau / dt
        lag = int(round(ratio))
        if abs(ratio - lag) > alignment_tol or lag < 1:
            raise MisalignedAtomError(
                f"atom delay tau={atom.tau} is not a grid multiple of dt={dt}; nearest grid time {lag * dt}"
            )
        lags.append(lag)
        masses.append(atom.mass)

    n_cells = grid.n_steps + 1
    ac = np.zeros(n_cells)
    if kernel.ac is not None:
        j_last = min(int(math.ceil(kernel.tau_max / dt + 1e-12)) - 1, n_cells - 1)
        dens = kernel.ac
        if isinstance(dens, MollifiedDensity):
            tol = 1e-15 * dens.mass
            clip = kernel.tau_max

            def clipped(s: float) -> float:
                return float(dens.density(np.asarray(s))) if s <= clip else 0.0

            lo_cell = max(int(math.floor((dens.tau - dens.eps) / dt)), 0)
            for j in range(lo_cell, j_last + 1):
                a, b = j * dt, min((j + 1) * dt, clip)
                if b > a:
                    ac[j] = _adaptive_simpson(clipped, a, b, tol)
        else:
            prev = 0.0
            for j in range(j_last + 1):
                cur = dens.mass_upto(min((j + 1) * dt, kernel.tau_max))
                ac[j] = max(cur - prev, 0.0)
                prev = cur
    else:
        j_last = -1

    return QuadratureWeights(
        grid=grid,
        ac=ac,
        atom_lags=np.asarray(lags, dtype=int),
        atom_masses=np.asarray(masses, dtype=float),
        j_last=j_last,
    )


def _check_values(w: QuadratureWeights, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != w.grid.n_nodes:
        raise InsufficientHistoryError(
            f"series has {values.shape[0]} rows, grid needs {w.grid.n_nodes} "
            f"(history {w.grid.n_history} + steps {w.grid.n_steps} + 1)"
        )
    return values


def memory_sum(w: QuadratureWeights, values: np.ndarray, n: int, skip_current: bool = False) -> np.ndarray:
    """Convolution value at step n (row offset: index i lives at row i + n_history).

    Cells (j*dt, (j+1)*dt] with j < n sample the solution at the cell's left
    endpoint (j = 0 samples the current value); cells reaching behind t = 0
    and atoms with lag > n sample the history.  ``skip_current`` drops the
    j = 0 term, which the stepper treats implicitly.
    """
    nh = w.grid.n_history
    acc = np.zeros(values.shape[1])
    j0 = 1 if skip_current else 0
    hi = min(n - 1, w.j_last)
    if hi >= j0:
        # rows n-hi .. n-j0 (reversed so weights pair with decreasing sample age)
        seg = values[n - hi + nh : n - j0 + nh + 1]
        acc += w.ac[j0 : hi + 1] @ seg[::-1]
    if w.j_last >= n:
        # history cells sample one node earlier, staying strictly before t = 0
        seg = values[n - w.j_last - 1 + nh : nh]
        acc += w.ac[n : w.j_last + 1] @ seg[::-1]
    for lag, m in zip(w.atom_lags, w.atom_masses):
        acc += m * values[n - lag + nh]
    return acc


def convolve_direct(w: QuadratureWeights, values: np.ndarray) -> np.ndarray:
    """Full convolution series at steps 1..n_steps; O(N^2) reference path."""
    values = _check_values(w, values)
    out = np.empty((w.grid.n_steps, values.shape[1]))
    for n in range(1, w.grid.n_steps + 1):
        out[n - 1] = memory_sum(w, values, n)
    return out


def apply_memory(w: QuadratureWeights, fem: FemMatrices, values: np.ndarray, n: int) -> np.ndarray:
    """Load vector of the memory operator at step n: K1 (mu * u)(t_n)."""
    values = _check_values(w, values)
    return fem.k1.matvec(memory_sum(w, values, n))


@dataclass(frozen=True)
class YoungReport:
    lhs_h: float
    rhs_h: float
    lhs_v: float
    rhs_v: float
    passed: bool

    @property
    def worst_ratio(self) -> float:
        r = 0.0
        for lhs, rhs in ((self.lhs_h, self.rhs_h), (self.lhs_v, self.rhs_v)):
            if rhs > 0.0:
                r = max(r, lhs / rhs)
            elif lhs > 0.0:
                r = math.inf
        return r


def young_check(w: QuadratureWeights, values: np.ndarray, fem: FemMatrices, rel_tol: float = 1e-10) -> YoungReport:
    """Check the convolution L2 bound ||mu*g|| <= mass * ||g|| in H and V norms."""
    values = _check_values(w, values)
    dt = w.grid.dt
    conv = convolve_direct(w, values)
    mass = w.discrete_mass
    sides = {}
    for name, nrm in (("h", norm_h), ("v", seminorm_v)):
        lhs = math.sqrt(sum(dt * nrm(row, fem) ** 2 for row in conv))
        rhs = mass * math.sqrt(sum(dt * nrm(row, fem) ** 2 for row in values[1:]))
        sides[name] = (lhs, rhs)
    passed = all(lhs <= rhs * (1.0 + rel_tol) for lhs, rhs in sides.values())
    return YoungReport(
        lhs_h=sides["h"][0], rhs_h=sides["h"][1], lhs_v=sides["v"][0], rhs_v=sides["v"][1], passed=passed
    )


@dataclass(frozen=True)
class OperatorNormReport:
    worst_ratio: float
    trials: int
    passed: bool


def operator_norm_check(
    kernel: MeasureKernel,
    fem: FemMatrices,
    grid: TimeGrid,
    trials: int = 100,
    rng: np.random.Generator | None = None,
    rel_tol: float = 1e-10,
) -> OperatorNormReport:
    """Check ||K_mu u||_{L2(V*)} <= Lambda1 * mass * ||u||_{L2(V)} on random series."""
    rng = rng or np.random.default_rng(0)
    w = build_weights(kernel, grid)
    lam1 = form_constants(fem).lambda1
    mass = w.discrete_mass
    dt = grid.dt
    worst = 0.0
    for _ in range(trials):
        values = rng.standard_normal((grid.n_nodes, fem.n_dofs))
        lhs = 0.0
        for n in range(1, grid.n_steps + 1):
            lhs += dt * dual_norm(apply_memory(w, fem, values, n), fem) ** 2
        lhs = math.sqrt(lhs)
        rhs = lam1 * mass * math.sqrt(sum(dt * seminorm_v(row, fem) ** 2 for row in values[1:]))
        if rhs > 0.0:
            worst = max(worst, lhs / rhs)
        elif lhs > 1e-14:
            worst = math.inf
    return OperatorNormReport(worst_ratio=worst, trials=trials, passed=worst <= 1.0 + rel_tol)
