"""Periodic bilinear finite elements with quasimomentum-shifted forms.

A dof vector ``v`` holds nodal values of a Q-periodic function. For a
coefficient field ``A`` and quasimomentum ``kappa`` the shifted stiffness
matrix satisfies

    w^H K(A, kappa) v = int_Q A (grad + i kappa) v . conj((grad + i kappa) w),

so ``K`` is the matrix of the form acting on ``u = exp(i kappa.y) v``. Since
the form is quadratic in ``kappa`` it is assembled once per coefficient as
``K0 + sum_c kappa_c K1[c] + sum_cd kappa_c kappa_d K2[c][d]``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cell_model import CellModel
from .errors import EigenFailure, SolvabilityViolated, SolverFailure

CoefSelector = Union[str, np.ndarray]

SOLVABILITY_TOL = 1e-10
_ZERO_KAPPA = 1e-14
_ROUNDOFF = 1e-14  # absolute floor for loads that vanish up to rounding


def reduce_kappa(kappa) -> np.ndarray:
    """Representative of ``kappa`` modulo 2*pi in ``[-pi, pi)`` per axis."""
    k = np.asarray(kappa, dtype=float).reshape(2)
    r = np.mod(k + np.pi, 2 * np.pi) - np.pi
    r[np.abs(r) < _ZERO_KAPPA] = 0.0
    return r


def is_zero_kappa(kappa) -> bool:
    return bool(np.all(reduce_kappa(kappa) == 0.0))


@dataclass(frozen=True)
class PeriodicGrid:
    n: int
    connectivity: np.ndarray
    coords: np.ndarray


@lru_cache(maxsize=None)
def periodic_grid(n: int) -> PeriodicGrid:
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")

    def nid(a, b):
        return (a % n) * n + (b % n)

    conn = np.stack([nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)], axis=-1)
    conn = conn.reshape(-1, 4)
    conn.setflags(write=False)
    x = np.arange(n) / n
    y1, y2 = np.meshgrid(x, x, indexing="ij")
    coords = np.stack([y1.ravel(), y2.ravel()], axis=1)
    return PeriodicGrid(n=n, connectivity=conn, coords=coords)


@lru_cache(maxsize=None)
def local_matrices(h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Element integrals on an ``h x h`` square, exact via the 2x2 Gauss rule.

    Returns ``D[a, b][j, i] = int d_a phi_j d_b phi_i``,
    ``C[a][j, i] = int d_a phi_j phi_i`` and ``Mloc[j, i] = int phi_j phi_i``.
    Local node order: (0,0), (1,0), (0,1), (1,1).
    """
    g = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    D = np.zeros((2, 2, 4, 4))
    C = np.zeros((2, 4, 4))
    Mloc = np.zeros((4, 4))
    w = 0.25 * h * h
    for gs in g:
        for gt in g:
            s, t = 0.5 + 0.5 * gs, 0.5 + 0.5 * gt
            N = np.array([(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t])
            dN = np.array([[-(1 - t), 1 - t, -t, t], [-(1 - s), -s, 1 - s, s]]) / h
            for a in range(2):
                C[a] += w * np.outer(dN[a], N)
                for b in range(2):
                    D[a, b] += w * np.outer(dN[a], dN[b])
            Mloc += w * np.outer(N, N)
    for arr in (D, C, Mloc):
        arr.setflags(write=False)
    return D, C, Mloc


def _scatter(n: int, local: np.ndarray) -> sp.csr_matrix:
    conn = periodic_grid(n).connectivity
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n * n, n * n))


def coefficient_field(model: CellModel, coef: CoefSelector) -> np.ndarray:
    """Resolve a selector to per-element tensors ``(n*n, 2, 2)``.

    ``"a1"``, ``"a0"``, ``"laplace"`` (identity), ``"a1sq"`` (``A1 @ A1``, so that
    ``v^H K v = ||A1 grad v||^2``) and ``"stiff"`` (identity on Q1, zero on Q0).
    """
    if isinstance(coef, np.ndarray):
        return coef
    c = model.coefficients
    ne = model.n_nodes
    if coef == "a1":
        return c.a1
    if coef == "a0":
        return c.a0
    if coef == "laplace":
        return np.broadcast_to(np.eye(2), (ne, 2, 2))
    if coef == "a1sq":
        return np.einsum("eab,ebc->eac", c.a1, c.a1)
    if coef == "stiff":
        return model.stiff_mask[:, None, None] * np.eye(2)
    raise ValueError(f"unknown coefficient selector {coef!r}")


@dataclass(frozen=True)
class ShiftPieces:
    """``K(kappa) = K0 + sum_c kappa_c K1[c] + sum_cd kappa_c kappa_d K2[c][d]``."""

    K0: sp.csr_matrix
    K1: tuple
    K2: tuple

    def at(self, kappa) -> sp.csr_matrix:
        k = np.asarray(kappa, dtype=float)
        out = self.K0.astype(complex)
        if not np.any(k):
            return self.K0.copy()
        for c in range(2):
            if k[c]:
                out = out + k[c] * self.K1[c]
                for d in range(2):
                    if k[d]:
                        out = out + k[c] * k[d] * self.K2[c][d]
        return out.tocsr()

    def first_order(self, theta) -> sp.csr_matrix:
        return (theta[0] * self.K1[0] + theta[1] * self.K1[1]).tocsr()

    def second_order(self, theta) -> sp.csr_matrix:
        t = theta
        return sum(t[c] * t[d] * self.K2[c][d] for c in range(2) for d in range(2)).tocsr()


def shift_pieces(model: CellModel, coef: CoefSelector) -> ShiftPieces:
    A = coefficient_field(model, coef)
    D, C, Mloc = local_matrices(model.h)
    n = model.n
    k0 = np.einsum("eab,abji->eji", A, D)
    k1 = []
    for c in range(2):
        loc = 1j * (
            np.einsum("ea,aji->eji", A[:, :, c], C)
            - np.einsum("eb,bij->eji", A[:, c, :], C)
        )
        k1.append(_scatter(n, loc))
    k2 = tuple(
        tuple(_scatter(n, A[:, c, d][:, None, None] * Mloc) for d in range(2)) for c in range(2)
    )
    return ShiftPieces(K0=_scatter(n, k0), K1=tuple(k1), K2=k2)


def assemble(model: CellModel, coef: CoefSelector, kappa=(0.0, 0.0)) -> sp.csr_matrix:
    """Shifted stiffness ``K(A, kappa)`` with ``kappa`` reduced into ``[-pi, pi)^2``."""
    return shift_pieces(model, coef).at(reduce_kappa(kappa))


def mass_matrix(model: CellModel) -> sp.csr_matrix:
    _, _, Mloc = local_matrices(model.h)
    return _scatter(model.n, np.broadcast_to(Mloc, (model.n_nodes, 4, 4)))


def load_vector(model: CellModel, A: np.ndarray, direction) -> np.ndarray:
    """Functional ``phi -> -int A e . grad phi`` for a constant vector ``e``."""
    _, C, _ = local_matrices(model.h)
    e = np.asarray(direction, dtype=float)
    grad_int = C.sum(axis=2)  # grad_int[a][j] = int d_a phi_j
    loc = -np.einsum("eab,b,aj->ej", A, e, grad_int)
    out = np.zeros(model.n_nodes)
    np.add.at(out, periodic_grid(model.n).connectivity.ravel(), loc.ravel())
    return out


def dump_triplets(matrix, path) -> None:
    """Write a sparse matrix as ``row col re im`` lines after a ``# rows cols nnz`` header."""
    coo = sp.coo_matrix(matrix)
    data = np.asarray(coo.data, dtype=complex)
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, data):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


@dataclass(frozen=True)
class KernelBasis:
    kappa: np.ndarray
    vectors: sp.csc_matrix

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]


class AssembledForms:
    """Mass and shifted stiffness matrices of one cell model, with cached factorizations.

    Caches are keyed per (coefficient, kappa) and guarded by a lock; all
    returned matrices are treated as read-only.
    """

    def __init__(self, model: CellModel, dump_dir: Optional[Path] = None):
        self.model = model
        self.M = mass_matrix(model)
        self.dump_dir = Path(dump_dir) if dump_dir is not None else None
        self._pieces: dict = {}
        self._factors: dict = {}
        self._lock = threading.Lock()
        self.K_lap = self.pieces("laplace").K0
        self.ones = np.ones(model.n_nodes)
        self.mass_ones = self.M @ self.ones

    @property
    def N(self) -> int:
        return self.model.n_nodes

    def pieces(self, coef: str) -> ShiftPieces:
        with self._lock:
            p = self._pieces.get(coef)
        if p is None:
            p = shift_pieces(self.model, coef)
            with self._lock:
                self._pieces.setdefault(coef, p)
        return p

    def stiffness(self, coef: str, kappa=(0.0, 0.0)) -> sp.csr_matrix:
        K = self.pieces(coef).at(reduce_kappa(kappa))
        if self.dump_dir is not None:
            k = reduce_kappa(kappa)
            self.dump_dir.mkdir(parents=True, exist_ok=True)
            dump_triplets(K, self.dump_dir / f"K_{coef}_{k[0]:+.6f}_{k[1]:+.6f}.txt")
        return K

    def h1_gram(self, kappa=(0.0, 0.0)) -> sp.csr_matrix:
        """Gram matrix of the H^1 inner product of ``exp(i kappa.y) v``."""
        return (self.stiffness("laplace", kappa) + self.M).tocsc()

    def factor(self, key, builder):
        with self._lock:
            f = self._factors.get(key)
        if f is None:
            A = builder()
            try:
                f = spla.splu(sp.csc_matrix(A))
            except RuntimeError as exc:
                raise SolverFailure(f"factorization failed for {key}: {exc}") from exc
            with self._lock:
                if len(self._factors) > 64:
                    self._factors.clear()
                self._factors.setdefault(key, f)
        return f

    # norms -----------------------------------------------------------------
    def l2_norm(self, v) -> float:
        v = np.asarray(v)
        return float(np.sqrt(max(np.real(np.vdot(v, self.M @ v)), 0.0)))

    def h1_norm(self, v, kappa=(0.0, 0.0)) -> float:
        v = np.asarray(v)
        return float(np.sqrt(max(np.real(np.vdot(v, self.h1_gram(kappa) @ v)), 0.0)))

    def hminus1_norm(self, F) -> float:
        F = np.asarray(F)
        if not np.any(F):
            return 0.0
        lu = self.factor(("h1", 0.0, 0.0), lambda: self.h1_gram())
        z = _lu_solve(lu, F)
        if not np.all(np.isfinite(z)):
            raise SolverFailure("dual-norm solve produced non-finite values")
        return float(np.sqrt(max(np.real(np.vdot(F, z)), 0.0)))


def assemble_forms(model: CellModel, dump_dir: Optional[Path] = None) -> AssembledForms:
    return AssembledForms(model, dump_dir=dump_dir)


def kernel_basis(model: CellModel, kappa=(0.0, 0.0)) -> KernelBasis:
    """Symbolic basis of the kernel of ``K(A1, kappa)``.

    Interior soft nodal indicators, plus the constant vector when ``kappa`` is
    zero modulo 2*pi.
    """
    k = reduce_kappa(kappa)
    N = model.n_nodes
    idx = model.interior_nodes
    cols = [sp.csc_matrix((np.ones(idx.size), (idx, np.arange(idx.size))), shape=(N, idx.size))]
    if not np.any(k):
        cols.insert(0, sp.csc_matrix(np.ones((N, 1))))
    return KernelBasis(kappa=k, vectors=sp.hstack(cols, format="csc"))


def project_complement(forms: AssembledForms, w, kappa=(0.0, 0.0)) -> np.ndarray:
    """H^1-orthogonal projection of ``w`` onto the complement of the kernel."""
    w = np.asarray(w)
    Phi = kernel_basis(forms.model, kappa).vectors
    if Phi.shape[1] == 0:
        return w.copy()
    H = forms.h1_gram(kappa)
    HPhi = H @ Phi
    gram = (Phi.T @ HPhi).toarray() if sp.issparse(HPhi) else Phi.T @ HPhi
    coef = np.linalg.solve(gram, (HPhi.conj().T @ w))
    return w - Phi @ coef


def _lu_solve(lu, rhs: np.ndarray) -> np.ndarray:
    """Solve with a cached factor, splitting complex data over a real factor."""
    if lu.U.dtype.kind == "c":
        return lu.solve(rhs.astype(complex))
    if np.iscomplexobj(rhs):
        return lu.solve(np.ascontiguousarray(rhs.real)) + 1j * lu.solve(np.ascontiguousarray(rhs.imag))
    return lu.solve(rhs.astype(float))


def _check_solvable(Phi: sp.csc_matrix, G: np.ndarray, tol: float) -> None:
    if Phi.shape[1] == 0:
        return
    gnorm = np.linalg.norm(G)
    pair = np.abs(Phi.T @ G)
    col_norms = np.sqrt(np.asarray(Phi.multiply(Phi).sum(axis=0)).ravel())
    worst = float(np.max(pair / col_norms))
    if worst > tol * gnorm + _ROUNDOFF:
        raise SolvabilityViolated(
            f"right-hand side not orthogonal to the kernel: |<G, phi>| = {worst:.3e}, "
            f"tol * ||G|| = {tol * gnorm:.3e}"
        )


def solve_degenerate(
    forms: AssembledForms, kappa, G, tol: float = SOLVABILITY_TOL, coef: str = "a1"
) -> np.ndarray:
    """Unique ``w`` in the H^1-complement of the kernel with ``K(A1, kappa) w = G``.

    Solved as a saddle-point system whose multipliers pin the kernel
    components of ``w`` to zero. ``coef`` may name any coefficient sharing the
    soft/stiff split of ``A1`` (e.g. ``"stiff"``).
    """
    k = reduce_kappa(kappa)
    G = np.asarray(G)
    Phi = kernel_basis(forms.model, k).vectors
    _check_solvable(Phi, G, tol)
    if not np.any(G):
        return np.zeros(forms.N, dtype=complex if (np.any(k) or np.iscomplexobj(G)) else float)
    p = Phi.shape[1]

    def build():
        K = forms.stiffness(coef, k)
        B = sp.csc_matrix(forms.h1_gram(k) @ Phi)
        return sp.bmat([[K, B], [B.conj().T, None]], format="csc")

    lu = forms.factor(("degenerate", coef, float(k[0]), float(k[1])), build)
    rhs = np.concatenate([G, np.zeros(p)])
    x = _lu_solve(lu, rhs)
    if not np.all(np.isfinite(x)):
        raise SolverFailure("degenerate solve produced non-finite values")
    return x[: forms.N]


def poincare_constant(forms: AssembledForms, kappa=(0.0, 0.0)) -> float:
    """Best discrete constant in ``||w||_{H1}^2 <= C ||A1 grad w||^2`` on the kernel complement.

    The pencil ``(K(A1^2, kappa), H(kappa))`` has the kernel as its zero
    eigenspace and H-orthogonal eigenvectors, so the constant is the inverse of
    its first eigenvalue past the kernel dimension.
    """
    k = reduce_kappa(kappa)
    p = kernel_basis(forms.model, k).dimension
    K2 = forms.stiffness("a1sq", k).toarray()
    H = forms.h1_gram(k).toarray()
    try:
        mu = sla.eigh(K2, H, eigvals_only=True, subset_by_index=[p, p])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    if not mu[0] > 0:
        raise EigenFailure(f"non-positive eigenvalue {mu[0]} past the kernel")
    return float(1.0 / mu[0])
