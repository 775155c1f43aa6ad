"""Fibrewise resolvent distances, sweeps over quasimomentum and rate fits.

Every approximate resolvent used here has the form ``T M`` with ``T``
Hermitian, so the difference ``D = (T_fine - T_approx) M`` is self-adjoint in
the mass inner product and its ``L^2`` operator norm is the largest
``|lambda|`` of the pencil ``(M T M, M)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateFit, EigenFailure, SolverFailure
from .fem import AssembledForms, reduce_kappa, solve_degenerate
from .fibers import (
    FineFiber,
    HomFiber,
    fine_fiber,
    hom_fiber,
    outer_resolvent,
    outer_resolvent_matrix,
    reduce_theta,
)
from .homogenization import HomogenizedMatrix

DENSE_LIMIT = 2000
LANCZOS_TOL = 1e-12
REGIONS = ("inner", "transition", "outer")


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Ordered map; results come back in input order regardless of scheduling."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# quasimomentum grids ------------------------------------------------------

def region_of(eps: float, theta) -> str:
    r = float(np.hypot(*theta))
    if r <= 1.0:
        return "inner"
    if r < eps**-0.5:
        return "transition"
    return "outer"


DIRECTIONS = {
    "axis1": np.array([1.0, 0.0]),
    "axis2": np.array([0.0, 1.0]),
    "diagonal": np.array([1.0, 1.0]) / np.sqrt(2.0),
}


@dataclass(frozen=True)
class ThetaGrid:
    eps: float
    points: np.ndarray  # (K, 2)
    regions: tuple

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, mask) -> "ThetaGrid":
        mask = np.asarray(mask, dtype=bool)
        return ThetaGrid(
            eps=self.eps,
            points=self.points[mask],
            regions=tuple(r for r, m in zip(self.regions, mask) if m),
        )

    @classmethod
    def from_points(cls, eps: float, points) -> "ThetaGrid":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(eps=eps, points=pts, regions=tuple(region_of(eps, t) for t in pts))


def zone_radius(eps: float, direction: np.ndarray) -> float:
    """Distance from 0 to the boundary of ``eps^-1 [-pi, pi)^2`` along ``direction``."""
    return float(np.pi / (eps * np.max(np.abs(direction))))


def radial_samples(r_max: float, count: int, r_min: float = 1e-2) -> np.ndarray:
    """Radii log-refined towards 0 and towards ``r_max`` (both ends included)."""
    lo_count = (count + 1) // 2
    hi_count = count - lo_count
    lo = np.geomspace(r_min, r_max / 2, lo_count)
    gaps = np.geomspace(r_min, r_max / 2, hi_count + 1)[:-1] if hi_count else np.empty(0)
    hi = np.concatenate([[r_max], r_max - gaps[1:]]) if hi_count else np.empty(0)
    return np.unique(np.concatenate([lo, hi]))


def default_theta_grid(
    eps: float, radii: int = 40, directions: Iterable[str] = ("axis1", "axis2", "diagonal")
) -> ThetaGrid:
    pts = [np.zeros(2)]
    for name in directions:
        d = DIRECTIONS[name]
        for r in radial_samples(zone_radius(eps, d), radii):
            pts.append(r * d)
    return ThetaGrid.from_points(eps, np.array(pts))


def inner_theta_grid(eps: float) -> ThetaGrid:
    """``{0, 0.25, 0.5, 1} x`` both axes and the diagonal."""
    pts = [np.zeros(2)]
    for d in DIRECTIONS.values():
        for r in (0.25, 0.5, 1.0):
            pts.append(r * d)
    return ThetaGrid.from_points(eps, np.array(pts))


# operator norms ------------------------------------------------------------

@dataclass(frozen=True)
class HermitianPart:
    """A map ``x -> T x`` with ``T`` Hermitian, plus an optional dense realisation."""

    apply: Callable[[np.ndarray], np.ndarray]
    dense: Callable[[], np.ndarray]


def fine_part(fib: FineFiber) -> HermitianPart:
    def dense():
        return fib.solve(np.eye(fib.matrix.shape[0], dtype=complex))

    return HermitianPart(apply=fib.solve, dense=dense)


def lowrank_part(basis: sp.csc_matrix, system: np.ndarray) -> HermitianPart:
    """``T = E A^-1 E^H`` for a small dense Hermitian ``A``."""
    lu = sla.lu_factor(system)
    Et = basis.T.tocsr()

    def apply(x):
        return basis @ sla.lu_solve(lu, Et @ x)

    def dense():
        Ed = basis.toarray()
        return Ed @ sla.lu_solve(lu, Ed.T.astype(complex))

    return HermitianPart(apply=apply, dense=dense)


def hom_part(fib: HomFiber) -> HermitianPart:
    return lowrank_part(fib.basis, fib.system)


def mass_norm_of_difference(
    forms: AssembledForms,
    first: HermitianPart,
    second: Sequence[HermitianPart],
    method: str = "auto",
) -> float:
    """``|| (T1 - sum T2) M ||`` in the operator norm of ``L^2`` (mass inner product)."""
    M = forms.M
    N = forms.N
    if method == "auto":
        method = "lanczos"
    if method == "dense":
        if N > DENSE_LIMIT:
            raise SolverFailure(f"dense distance requested for {N} > {DENSE_LIMIT} dofs")
        T = first.dense() - sum(p.dense() for p in second)
        Md = M.toarray()
        A = Md @ T @ Md
        A = 0.5 * (A + A.conj().T)
        try:
            lam = sla.eigh(A, Md, eigvals_only=True)
        except np.linalg.LinAlgError as exc:
            raise EigenFailure(str(exc)) from exc
        return float(np.max(np.abs(lam)))
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")

    def matvec(x):
        y = M @ x
        z = first.apply(y)
        for p in second:
            z = z - p.apply(y)
        return M @ z

    op = spla.LinearOperator((N, N), matvec=matvec, dtype=complex)
    # deterministic start vector keeps repeated runs bit-identical
    v0 = np.cos(np.arange(N) * 0.7) + 1j * np.sin(np.arange(N) * 0.3)
    try:
        lam = spla.eigsh(
            op, k=1, M=M.astype(complex).tocsc(), which="LM", tol=LANCZOS_TOL, v0=v0,
            return_eigenvectors=False, maxiter=5000,
        )
    except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
        raise EigenFailure(f"Lanczos did not converge: {exc}") from exc
    return float(np.max(np.abs(lam)))


def fiber_distance(
    forms: AssembledForms,
    Ahom: HomogenizedMatrix,
    eps: float,
    theta,
    method: str = "auto",
) -> float:
    """Operator-norm distance between the fine and homogenised fibre resolvents."""
    fine = fine_part(fine_fiber(forms, eps, theta))
    hom = hom_part(hom_fiber(forms, Ahom, eps, theta))
    return mass_norm_of_difference(forms, fine, [hom], method)


def _naive_part(forms, Ahom, eps, theta, alpha) -> HermitianPart:
    theta = reduce_theta(eps, theta)
    if float(np.hypot(*theta)) < eps ** (alpha - 1.0):
        return hom_part(hom_fiber(forms, Ahom, eps, theta, zero_eps=True))
    A, Ev = outer_resolvent_matrix(forms, reduce_kappa(eps * np.asarray(theta)))
    return lowrank_part(Ev, A.astype(complex))


def naive_distance(
    forms: AssembledForms, Ahom: HomogenizedMatrix, eps: float, theta, alpha: float,
    method: str = "auto",
) -> float:
    """Distance to the composite inner/outer approximation with threshold ``eps^(alpha-1)``."""
    fine = fine_part(fine_fiber(forms, eps, theta))
    return mass_norm_of_difference(forms, fine, [_naive_part(forms, Ahom, eps, theta, alpha)], method)


# sweeps -------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    eps: float
    theta: tuple
    region: str
    distance: float


@dataclass(frozen=True)
class SweepResult:
    eps: float
    rows: tuple
    sup: float
    region_max: dict = field(default_factory=dict)


def _collect(eps: float, grid: ThetaGrid, values: Sequence[float]) -> SweepResult:
    rows = tuple(
        SweepRow(eps=eps, theta=(float(t[0]), float(t[1])), region=r, distance=float(v))
        for t, r, v in zip(grid.points, grid.regions, values)
    )
    region_max = {}
    for name in REGIONS:
        vals = [row.distance for row in rows if row.region == name]
        if vals:
            region_max[name] = max(vals)
    return SweepResult(eps=eps, rows=rows, sup=max(row.distance for row in rows), region_max=region_max)


def sweep(
    forms: AssembledForms,
    Ahom: HomogenizedMatrix,
    eps: float,
    grid: Optional[ThetaGrid] = None,
    threads: int = 1,
    method: str = "auto",
) -> SweepResult:
    grid = default_theta_grid(eps) if grid is None else grid
    values = parallel_map(lambda t: fiber_distance(forms, Ahom, eps, t, method), grid.points, threads)
    return _collect(eps, grid, values)


def naive_matching_sweep(
    forms: AssembledForms,
    Ahom: HomogenizedMatrix,
    eps: float,
    alpha: float,
    grid: Optional[ThetaGrid] = None,
    threads: int = 1,
    method: str = "auto",
) -> SweepResult:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    grid = default_theta_grid(eps) if grid is None else grid
    values = parallel_map(
        lambda t: naive_distance(forms, Ahom, eps, t, alpha, method), grid.points, threads
    )
    return _collect(eps, grid, values)


def inner_closeness(
    forms: AssembledForms, Ahom: HomogenizedMatrix, eps: float, grid: Optional[ThetaGrid] = None
) -> float:
    """Max over ``|theta| <= 1`` of the distance between the ``eps`` and ``eps = 0`` homogenised resolvents.

    Both maps have range in ``span E``, so the norm reduces to the Gram-weighted
    eigenproblem of the small difference ``G_eps^-1 - G_0^-1``.
    """
    grid = inner_theta_grid(eps) if grid is None else grid
    worst = 0.0
    for t in grid.points:
        if float(np.hypot(*t)) > 1.0 + 1e-12:
            continue
        a = hom_fiber(forms, Ahom, eps, t)
        b = hom_fiber(forms, Ahom, eps, t, zero_eps=True)
        gram = (a.basis.T @ forms.M @ a.basis).toarray()
        delta = np.linalg.inv(a.system) - np.linalg.inv(b.system)
        A = gram @ delta @ gram
        lam = sla.eigh(0.5 * (A + A.conj().T), gram, eigvals_only=True)
        worst = max(worst, float(np.max(np.abs(lam))))
    return worst


# outer expansion -------------------------------------------------------------

@dataclass(frozen=True)
class OuterExpansion:
    kappa: np.ndarray
    eps: float
    terms: tuple
    error: float


def outer_expansion_check(
    forms: AssembledForms, kappa, eps: float, N: int, F=None
) -> OuterExpansion:
    """H^1 error of ``sum_{n<=N} eps^(2n) w_n`` against the direct solve at fixed ``kappa``.

    ``F`` defaults to the constant field.
    """
    k = reduce_kappa(kappa)
    if not np.any(k):
        raise ValueError("the outer expansion needs kappa != 0")
    F = forms.ones if F is None else np.asarray(F)
    Ka0 = forms.stiffness("a0", k)
    lower = (Ka0 + forms.M).tocsr()
    S = forms.stiffness("a1", k) / eps**2 + lower
    direct = spla.spsolve(sp.csc_matrix(S, dtype=complex), (forms.M @ F).astype(complex))

    A, Ev = outer_resolvent_matrix(forms, k)
    lu = sla.lu_factor(A.astype(complex)) if A.size else None

    def v_part(w_perp):
        if lu is None:
            return np.zeros(forms.N, dtype=complex)
        return Ev @ sla.lu_solve(lu, -(Ev.T @ (lower @ w_perp)))

    terms = [outer_resolvent(forms, F, k)]
    rhs = forms.M @ F - lower @ terms[0]
    for n in range(N):
        w_perp = solve_degenerate(forms, k, rhs, tol=1e-8)
        w = w_perp + v_part(w_perp)
        terms.append(w)
        rhs = -(lower @ w)
    U = sum(eps ** (2 * n) * w for n, w in enumerate(terms))
    err = forms.h1_norm(direct - U, k)
    return OuterExpansion(kappa=k, eps=eps, terms=tuple(terms), error=err)


# rate fitting ----------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    stderr: float
    flat: bool = False

    def band(self, z: float = 2.0) -> tuple[float, float]:
        return self.slope - z * self.stderr, self.slope + z * self.stderr


def fit_rate(pairs: Iterable[tuple[float, float]]) -> RateFit:
    """Least-squares slope of ``log(value)`` against ``log(eps)``.

    ``flat`` marks constant data, whose ``r2`` is undefined and reported as NaN.
    """
    data = np.asarray(list(pairs), dtype=float)
    if data.ndim != 2 or data.shape[0] < 4:
        raise DegenerateFit("a rate fit needs at least 4 (eps, value) pairs")
    if np.any(data <= 0) or not np.all(np.isfinite(data)):
        raise DegenerateFit("rate fit requires positive finite eps and values")
    x, y = np.log(data[:, 0]), np.log(data[:, 1])
    if np.ptp(x) == 0:
        raise DegenerateFit("all eps values coincide")
    X = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    flat = ss_tot <= 1e-28 * max(1.0, float(y @ y))
    r2 = math.nan if flat else 1.0 - ss_res / ss_tot
    dof = x.size - 2
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(ss_res / dof / sxx) if dof > 0 else math.nan
    if flat:
        slope = 0.0
    return RateFit(slope=float(slope), intercept=float(intercept), r2=r2, stderr=stderr, flat=flat)
