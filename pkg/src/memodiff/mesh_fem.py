"""1-D P1 finite elements on an interval with homogeneous Dirichlet conditions.

Provides the uniform mesh, coefficient fields, the four tridiagonal matrices
(mass, two coefficient stiffness matrices, unit-coefficient stiffness), the
discrete H / V / V* norms, and extraction of the coercivity and continuity
constants of the bilinear forms from the tridiagonal matrix pencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .errors import CoercivityError

__all__ = [
    "Mesh1D",
    "CoefficientField",
    "TridiagMatrix",
    "FemMatrices",
    "FormConstants",
    "build_mesh",
    "assemble",
    "norm_h",
    "seminorm_v",
    "dual_norm",
    "form_constants",
    "interpolate",
]


@dataclass(frozen=True)
class Mesh1D:
    """Uniform partition of (0, L) into ``n_elements`` cells."""

    length: float
    n_elements: int
    nodes: np.ndarray

    @property
    def h(self) -> float:
        return self.length / self.n_elements

    @property
    def n_interior(self) -> int:
        return self.n_elements - 1

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]


def build_mesh(length: float, n_elements: int) -> Mesh1D:
    """Build a uniform mesh; requires ``length > 0`` and ``n_elements >= 2``."""
    if not length > 0.0:
        raise ValueError(f"domain length must be positive, got {length}")
    if n_elements < 2:
        raise ValueError(f"need at least 2 elements for an interior node, got {n_elements}")
    nodes = np.linspace(0.0, float(length), n_elements + 1)
    return Mesh1D(length=float(length), n_elements=int(n_elements), nodes=nodes)


@dataclass(frozen=True)
class CoefficientField:
    """Scalar coefficient ``x -> a(x)`` on [0, L] with known bounds.

    ``a_min``/``a_max`` are declared bounds; sampled values are validated
    against them during assembly.
    """

    func: Callable[[np.ndarray], np.ndarray]
    a_min: float
    a_max: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float), np.shape(x)).copy()

    @classmethod
    def constant(cls, value: float) -> "CoefficientField":
        v = float(value)
        return cls(func=lambda x: np.full_like(np.asarray(x, dtype=float), v), a_min=v, a_max=v)


@dataclass(frozen=True)
class TridiagMatrix:
    """Symmetric tridiagonal matrix stored as main diagonal + one off-diagonal."""

    diag: np.ndarray
    off: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        if self.n > 1:
            out[:-1] += self.off * v[1:]
            out[1:] += self.off * v[:-1]
        return out

    def quad(self, v: np.ndarray) -> float:
        """Quadratic form v^T A v."""
        return float(v @ self.matvec(v))

    def dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        if self.n > 1:
            a += np.diag(self.off, 1) + np.diag(self.off, -1)
        return a

    def factor(self) -> "TridiagFactor":
        return TridiagFactor(self)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.factor().solve(rhs)

    def __add__(self, other: "TridiagMatrix") -> "TridiagMatrix":
        return TridiagMatrix(self.diag + other.diag, self.off + other.off)

    def scaled(self, c: float) -> "TridiagMatrix":
        return TridiagMatrix(c * self.diag, c * self.off)


@dataclass
class TridiagFactor:
    """Thomas-algorithm LU factorization of a symmetric tridiagonal matrix.

    Factorization asserts positive pivots, which for a symmetric matrix is
    equivalent to positive definiteness.
    """

    matrix: TridiagMatrix
    _pivots: np.ndarray = field(init=False, repr=False)
    _lower: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        d = self.matrix.diag
        e = self.matrix.off
        n = d.shape[0]
        piv = np.empty(n)
        low = np.empty(max(n - 1, 0))
        piv[0] = d[0]
        if piv[0] <= 0.0:
            raise CoercivityError("tridiagonal factorization hit a nonpositive pivot (matrix not SPD)")
        for i in range(1, n):
            low[i - 1] = e[i - 1] / piv[i - 1]
            piv[i] = d[i] - low[i - 1] * e[i - 1]
            if piv[i] <= 0.0:
                raise CoercivityError("tridiagonal factorization hit a nonpositive pivot (matrix not SPD)")
        self._pivots = piv
        self._lower = low

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        d = self._pivots
        low = self._lower
        e = self.matrix.off
        n = d.shape[0]
        if rhs.shape[0] != n:
            raise ValueError(f"rhs length {rhs.shape[0]} does not match matrix size {n}")
        y = np.array(rhs, dtype=float, copy=True)
        for i in range(1, n):
            y[i] -= low[i - 1] * y[i - 1]
        x = y
        x[n - 1] /= d[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = (x[i] - e[i] * x[i + 1]) / d[i]
        return x


@dataclass(frozen=True)
class FemMatrices:
    """Interior-node matrices of the P1 discretization.

    ``mass`` is the consistent mass matrix, ``k0``/``k1`` the stiffness
    matrices of the diffusion and memory coefficient fields, and ``s`` the
    unit-coefficient stiffness matrix (Gram matrix of the V-seminorm).
    """

    mesh: Mesh1D
    mass: TridiagMatrix
    k0: TridiagMatrix
    k1: TridiagMatrix
    s: TridiagMatrix

    @property
    def n_dofs(self) -> int:
        return self.mass.n


def _stiffness(mesh: Mesh1D, cell_coeff: np.ndarray) -> TridiagMatrix:
    h = mesh.h
    diag = (cell_coeff[:-1] + cell_coeff[1:]) / h
    off = -cell_coeff[1:-1] / h
    return TridiagMatrix(diag=diag, off=off)


def assemble(mesh: Mesh1D, a0: CoefficientField, a1: CoefficientField) -> FemMatrices:
    """Assemble mass and stiffness matrices with midpoint-sampled coefficients."""
    if not a0.a_min > 0.0:
        raise CoercivityError(f"diffusion coefficient must have positive lower bound, got a_min={a0.a_min}")
    if a1.a_min < 0.0:
        raise ValueError(f"memory coefficient must be nonnegative, got a_min={a1.a_min}")

    mids = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
    vals0 = a0(mids)
    vals1 = a1(mids)
    tol = 1e-12 * max(1.0, abs(a0.a_max), abs(a1.a_max))
    for name, vals, lo, hi in (("a0", vals0, a0.a_min, a0.a_max), ("a1", vals1, a1.a_min, a1.a_max)):
        if np.any(vals < lo - tol) or np.any(vals > hi + tol):
            raise ValueError(f"sampled {name} values escape declared bounds [{lo}, {hi}]")

    h = mesh.h
    m = mesh.n_interior
    mass = TridiagMatrix(diag=np.full(m, 2.0 * h / 3.0), off=np.full(m - 1, h / 6.0))
    k0 = _stiffness(mesh, vals0)
    k1 = _stiffness(mesh, vals1)
    s = _stiffness(mesh, np.ones_like(mids))
    return FemMatrices(mesh=mesh, mass=mass, k0=k0, k1=k1, s=s)


def _check_dim(v: np.ndarray, fem: FemMatrices) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (fem.n_dofs,):
        raise ValueError(f"vector shape {v.shape} does not match interior node count {fem.n_dofs}")
    return v


def norm_h(v: np.ndarray, fem: FemMatrices) -> float:
    """Discrete L2 norm sqrt(v^T M v)."""
    v = _check_dim(v, fem)
    return float(np.sqrt(max(fem.mass.quad(v), 0.0)))


def seminorm_v(v: np.ndarray, fem: FemMatrices) -> float:
    """Discrete gradient seminorm sqrt(v^T S v)."""
    v = _check_dim(v, fem)
    return float(np.sqrt(max(fem.s.quad(v), 0.0)))


def dual_norm(g: np.ndarray, fem: FemMatrices) -> float:
    """Discrete dual norm sqrt(g^T S^{-1} g) of a load vector."""
    g = _check_dim(g, fem)
    return float(np.sqrt(max(g @ fem.s.solve(g), 0.0)))


class FormConstants(NamedTuple):
    alpha0: float
    lambda0: float
    lambda1: float


def form_constants(fem: FemMatrices) -> FormConstants:
    """Coercivity/continuity constants of the discrete forms.

    Returns the extreme generalized eigenvalues of the pencils (K0, S) and
    (K1, S); these are the sharp discrete constants in
    alpha0 |v|_V^2 <= a0(v, v) <= Lambda0 |v|_V^2 and a1(v, v) <= Lambda1 |v|_V^2.
    """
    s_dense = fem.s.dense()
    eigs0 = scipy.linalg.eigh(fem.k0.dense(), s_dense, eigvals_only=True)
    eigs1 = scipy.linalg.eigh(fem.k1.dense(), s_dense, eigvals_only=True)
    return FormConstants(alpha0=float(eigs0[0]), lambda0=float(eigs0[-1]), lambda1=float(max(eigs1[-1], 0.0)))


def interpolate(fn: Callable[[np.ndarray], np.ndarray], mesh: Mesh1D) -> np.ndarray:
    """Nodal interpolant of a function at the interior nodes."""
    return np.asarray(fn(mesh.interior_nodes), dtype=float)
