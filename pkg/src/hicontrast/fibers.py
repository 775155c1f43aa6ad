"""Fibre resolvents of the fine and homogenised operators, and the finite-torus Gelfand transform.

Every resolvent here maps a dof vector ``F`` (nodal values of the data) to a
dof vector ``u`` with ``(B + I) u = F`` in the weak sense, i.e. the discrete
system is ``(K + M) u = M F``. Quasimomenta are reduced into ``[-pi, pi)^2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailure
from .fem import AssembledForms, reduce_kappa
from .homogenization import HomogenizedMatrix, block_system, identification_basis


def _kappa(eps: float, theta) -> np.ndarray:
    return reduce_kappa(eps * np.asarray(theta, dtype=float))


def reduce_theta(eps: float, theta) -> np.ndarray:
    """Representative of ``theta`` in ``eps^-1 [-pi, pi)^2``; shifts by ``2 pi / eps`` give the same fibre."""
    return _kappa(eps, theta) / eps


def _check(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise SolverFailure(f"{what} produced non-finite values")
    return x


@dataclass
class FineFiber:
    """``eps^-2 K(A1, eps theta) + K(A0, eps theta) + M`` with its sparse LU."""

    eps: float
    theta: np.ndarray
    matrix: sp.csc_matrix
    _lu: Optional[object] = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise SolverFailure(f"fine fibre factorization failed: {exc}") from exc
        return _check(self._lu.solve(np.asarray(rhs, dtype=complex)), "fine fibre solve")

    def apply_resolvent(self, forms: AssembledForms, F) -> np.ndarray:
        return self.solve(forms.M @ np.asarray(F))


def fine_fiber(forms: AssembledForms, eps: float, theta) -> FineFiber:
    k = _kappa(eps, theta)
    S = forms.stiffness("a1", k) / eps**2 + forms.stiffness("a0", k) + forms.M
    return FineFiber(eps=eps, theta=np.asarray(theta, dtype=float), matrix=sp.csc_matrix(S, dtype=complex))


def fine_resolvent(forms: AssembledForms, eps: float, theta, F) -> np.ndarray:
    return fine_fiber(forms, eps, theta).apply_resolvent(forms, F)


@dataclass
class HomFiber:
    """Homogenised fibre on ``(c, v)``; ``zero_eps`` drops the shift in the soft block."""

    eps: float
    theta: np.ndarray
    zero_eps: bool
    system: np.ndarray
    basis: sp.csc_matrix
    _lu: Optional[tuple] = None

    def solve_coefficients(self, forms: AssembledForms, F) -> np.ndarray:
        if self._lu is None:
            self._lu = sla.lu_factor(self.system, check_finite=True)
        rhs = self.basis.T @ (forms.M @ np.asarray(F))
        return _check(sla.lu_solve(self._lu, rhs.astype(complex)), "homogenised fibre solve")

    def apply_resolvent(self, forms: AssembledForms, F) -> np.ndarray:
        """Identified field ``c + v~``; the input is projected by ``P_f`` implicitly."""
        return self.basis @ self.solve_coefficients(forms, F)


def hom_fiber(
    forms: AssembledForms, Ahom: HomogenizedMatrix, eps: float, theta, zero_eps: bool = False
) -> HomFiber:
    theta = reduce_theta(eps, theta)
    kappa = (0.0, 0.0) if zero_eps else eps * theta
    blk = block_system(forms, Ahom, theta, kappa)
    return HomFiber(
        eps=eps,
        theta=theta,
        zero_eps=zero_eps,
        system=(blk.stiff + blk.gram).astype(complex),
        basis=blk.basis,
    )


def hom_resolvent(
    forms: AssembledForms,
    Ahom: HomogenizedMatrix,
    eps: float,
    theta,
    F,
    zero_eps: bool = False,
) -> tuple[complex, np.ndarray, np.ndarray]:
    """Return ``(c, v, c + v~)`` with ``v`` on interior soft dofs."""
    fib = hom_fiber(forms, Ahom, eps, theta, zero_eps)
    x = fib.solve_coefficients(forms, project_Pf(forms, F))
    return complex(x[0]), x[1:], fib.basis @ x


def project_Pf(forms: AssembledForms, F) -> np.ndarray:
    """``L^2`` projection onto ``span{1, interior soft nodal functions}``."""
    F = np.asarray(F)
    if not np.any(F):
        return np.zeros_like(F)
    E = identification_basis(forms)
    gram = (E.T @ forms.M @ E).toarray()
    coef = np.linalg.solve(gram, E.T @ (forms.M @ F))
    return E @ coef


def _soft_basis(forms: AssembledForms) -> sp.csc_matrix:
    return identification_basis(forms)[:, 1:]


def outer_resolvent(forms: AssembledForms, F, kappa=None) -> np.ndarray:
    """Dirichlet resolvent on the inclusion applied to ``P0 F``, zero-extended.

    With ``kappa`` given the shifted form ``K(A0, kappa)`` is used, which is the
    phase-conjugated operator ``exp(-i kappa y) (B0 + I)^-1 P0 exp(i kappa y)``
    acting on periodic amplitudes.
    """
    F = np.asarray(F)
    Ev = _soft_basis(forms)
    if Ev.shape[1] == 0 or not np.any(F):
        return np.zeros(forms.N, dtype=complex)
    k = (0.0, 0.0) if kappa is None else reduce_kappa(kappa)
    A = (Ev.T @ (forms.stiffness("a0", k) + forms.M) @ Ev).tocsc()
    rhs = Ev.T @ (forms.M @ F)
    try:
        x = spla.spsolve(A.astype(complex), rhs.astype(complex))
    except RuntimeError as exc:
        raise SolverFailure(f"Dirichlet solve failed: {exc}") from exc
    return Ev @ _check(np.atleast_1d(x), "Dirichlet solve")


def outer_resolvent_matrix(forms: AssembledForms, kappa=None) -> tuple[np.ndarray, sp.csc_matrix]:
    """Dense ``(E_v^H (K(A0,kappa) + M) E_v)`` and the soft basis ``E_v``."""
    Ev = _soft_basis(forms)
    k = (0.0, 0.0) if kappa is None else reduce_kappa(kappa)
    A = (Ev.T @ (forms.stiffness("a0", k) + forms.M) @ Ev).toarray()
    return A, Ev


# finite-torus Gelfand transform ------------------------------------------

@dataclass(frozen=True)
class TorusSample:
    """Nodal samples on ``M_cells x M_cells`` copies of the ``n x n`` cell grid.

    ``values[m1, m2, j1, j2]`` is the value at cell ``(m1, m2)``, local node
    ``(j1, j2)``; the fine-scale period is ``eps = 1 / M_cells``.
    """

    m_cells: int
    n: int
    values: np.ndarray

    def __post_init__(self):
        shape = (self.m_cells, self.m_cells, self.n, self.n)
        if self.values.shape != shape:
            raise ValueError(f"expected samples of shape {shape}, got {self.values.shape}")

    @property
    def eps(self) -> float:
        return 1.0 / self.m_cells

    def norm(self) -> float:
        w = (self.eps / self.n) ** 2  # area per node
        return float(np.sqrt(w * np.sum(np.abs(self.values) ** 2)))


def _phase(m_cells: int, n: int) -> np.ndarray:
    """``exp(-i kappa_k . y_j)`` with ``kappa_k = 2 pi k / M`` in cell units."""
    k = np.fft.fftfreq(m_cells, d=1.0 / m_cells)  # integer, zone-centred ordering
    kap = 2 * np.pi * k / m_cells
    y = np.arange(n) / n
    p = np.exp(-1j * np.multiply.outer(kap, y))  # (M, n)
    return p[:, None, :, None] * p[None, :, None, :]


def fiber_quasimomenta(m_cells: int) -> np.ndarray:
    """``kappa_k`` per axis, matching the first two axes of the transform output."""
    k = np.fft.fftfreq(m_cells, d=1.0 / m_cells)
    return 2 * np.pi * k / m_cells


def gelfand_forward(sample: TorusSample) -> np.ndarray:
    """Fibre amplitudes ``g[k1, k2, j1, j2]``, periodic in the local node index.

    ``g_k(y) = M^-1 sum_m exp(-i kappa_k . (m + y)) f(m + y)``; the map is
    unitary for the node-weighted norm of :meth:`TorusSample.norm` with the
    fibre norm weighted by ``(1 / n)^2`` per node.
    """
    ft = np.fft.fft2(sample.values, axes=(0, 1), norm="ortho")
    return _phase(sample.m_cells, sample.n) * ft


def gelfand_inverse(fibres: np.ndarray, m_cells: int, n: int) -> TorusSample:
    vals = np.fft.ifft2(np.conj(_phase(m_cells, n)) * fibres, axes=(0, 1), norm="ortho")
    return TorusSample(m_cells=m_cells, n=n, values=vals)


def fibre_norm(fibres: np.ndarray, m_cells: int, n: int) -> float:
    """Direct-integral norm: mean over the ``M^2`` fibres of the cell ``L^2`` norms."""
    w = (1.0 / n) ** 2 / m_cells**2
    return float(np.sqrt(w * np.sum(np.abs(fibres) ** 2)))
