"""Dirichlet eigendata of the soft inclusion, the dispersion function beta and limit spectra."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigenFailure, EmptyInclusion, EmptySet, PoleProximity, TailBoundTooLarge
from .fem import AssembledForms, reduce_kappa
from .homogenization import HomogenizedMatrix, block_system

CLUSTER_RTOL = 1e-8
WEIGHT_FLOOR = 1e-12
POLE_RTOL = 1e-12
EDGE_TOL = 1e-8
TAIL_LIMIT = 1e-3


@dataclass(frozen=True)
class DirichletEigendata:
    """Eigenpairs of ``(K(A0)|_int, M|_int)``; ``vectors`` are mass-orthonormal columns.

    Within each degenerate cluster the basis is rotated so that at most one
    vector has a nonzero mean, which makes the weights ``b_j`` well defined.
    """

    values: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    total_weight: float
    soft_volume: float

    @property
    def count(self) -> int:
        return int(self.values.size)

    def weighted_poles(self, floor: float = WEIGHT_FLOOR) -> np.ndarray:
        return self.values[self.weights > floor]

    def zero_weight_values(self, floor: float = WEIGHT_FLOOR) -> np.ndarray:
        return self.values[self.weights <= floor]


def _interior_blocks(forms: AssembledForms, kappa=(0.0, 0.0)):
    idx = forms.model.interior_nodes
    if idx.size == 0:
        raise EmptyInclusion("the soft inclusion has no interior nodes")
    K = forms.stiffness("a0", kappa)[idx][:, idx].toarray()
    M = forms.M[idx][:, idx].toarray()
    g = np.asarray(forms.mass_ones)[idx]
    return K, M, g


def _rotate_clusters(values: np.ndarray, vecs: np.ndarray, g: np.ndarray) -> np.ndarray:
    vecs = vecs.copy()
    start = 0
    while start < values.size:
        stop = start + 1
        while stop < values.size and values[stop] - values[start] <= CLUSTER_RTOL * max(1.0, abs(values[start])):
            stop += 1
        if stop - start > 1:
            block = vecs[:, start:stop]
            a = block.T @ g
            if np.linalg.norm(a) > 0:
                q, _ = np.linalg.qr(np.column_stack([a, np.eye(a.size)]))
                vecs[:, start:stop] = block @ q[:, : a.size]
        start = stop
    return vecs


def dirichlet_eigs(forms: AssembledForms, J: Optional[int] = None) -> DirichletEigendata:
    """Lowest ``J`` (default: all) Dirichlet eigenpairs of the soft inclusion."""
    K, M, g = _interior_blocks(forms)
    p = g.size
    J = p if J is None else int(J)
    if not 1 <= J <= p:
        raise ValueError(f"J must lie in [1, {p}]")
    try:
        lam, vec = sla.eigh(K, M, subset_by_index=[0, J - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    vec = _rotate_clusters(lam, vec, g)
    weights = (vec.T @ g) ** 2
    total = float(g @ np.linalg.solve(M, g))
    if weights.sum() > total * (1 + 1e-10):
        raise AssertionError("Bessel bound violated by the Dirichlet weights")
    return DirichletEigendata(
        values=lam, vectors=vec, weights=weights, total_weight=total,
        soft_volume=forms.model.soft_volume,
    )


@dataclass(frozen=True)
class BetaFunction:
    """``beta(lam) = lam (1 + lam sum_{j<J} b_j / (lam_j - lam))`` with a truncation bound.

    The tail uses the discrete total weight ``g^T M^-1 g`` in place of the
    inclusion area, so the bound is exact for the discretised series.
    """

    data: DirichletEigendata
    J: int

    @property
    def tail_weight(self) -> float:
        return max(self.data.total_weight - float(self.data.weights[: self.J].sum()), 0.0)

    @property
    def next_value(self) -> float:
        return float(self.data.values[self.J]) if self.J < self.data.count else np.inf

    def halfwidth(self, lam: float) -> float:
        tail = self.tail_weight
        if tail == 0.0:
            return 0.0
        if lam >= self.next_value:
            return np.inf
        return lam**2 * tail / (self.next_value - lam)

    def __call__(self, lam: float) -> float:
        return beta_eval(self, lam)[0]


def beta_function(data: DirichletEigendata, J: Optional[int] = None) -> BetaFunction:
    return BetaFunction(data=data, J=data.count if J is None else min(int(J), data.count))


def truncation_order(data: DirichletEigendata, lam_max: float, bound: float = 1e-4) -> int:
    """Smallest ``J`` whose tail half-width stays below ``bound`` on all of ``[0, lam_max]``.

    The half-width grows with ``lam``, so it is checked at ``lam_max``.
    """
    for J in range(1, data.count + 1):
        beta = beta_function(data, J)
        if beta.next_value > lam_max and beta.halfwidth(lam_max) <= bound:
            return J
    raise TailBoundTooLarge(f"no truncation order reaches half-width {bound} at lambda = {lam_max}")


def _beta_raw(beta: BetaFunction, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    v = beta.data.values[: beta.J]
    b = beta.data.weights[: beta.J]
    return lam * (1.0 + lam * np.sum(b / (v - lam[..., None]), axis=-1))


def beta_eval(beta: BetaFunction, lam: float) -> tuple[float, float]:
    """Value and truncation half-width of ``beta`` at ``lam``."""
    lam = float(lam)
    poles = beta.data.values[: beta.J][beta.data.weights[: beta.J] > WEIGHT_FLOOR]
    if poles.size and np.min(np.abs(poles - lam) / np.maximum(1.0, poles)) < POLE_RTOL:
        raise PoleProximity(f"lambda = {lam} sits on a weighted pole")
    if lam == 0.0:
        return 0.0, 0.0
    return float(_beta_raw(beta, lam)), float(beta.halfwidth(lam))


# interval unions ----------------------------------------------------------

@dataclass(frozen=True)
class IntervalUnion:
    """Sorted disjoint closed intervals; isolated points have ``a == b``."""

    intervals: tuple

    @classmethod
    def build(cls, pieces: Iterable[tuple[float, float]]) -> "IntervalUnion":
        ps = sorted((float(a), float(b)) for a, b in pieces)
        merged: list[list[float]] = []
        for a, b in ps:
            if b < a:
                raise ValueError(f"reversed interval ({a}, {b})")
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return cls(intervals=tuple((a, b) for a, b in merged))

    @classmethod
    def points(cls, values: Iterable[float]) -> "IntervalUnion":
        return cls.build((v, v) for v in values)

    def clip(self, lo: float, hi: float) -> "IntervalUnion":
        return IntervalUnion.build(
            (max(a, lo), min(b, hi)) for a, b in self.intervals if b >= lo and a <= hi
        )

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return any(a - tol <= x <= b + tol for a, b in self.intervals)

    def distance_to(self, x: float) -> float:
        if not self.intervals:
            raise EmptySet("distance to an empty set")
        return min(max(a - x, 0.0, x - b) for a, b in self.intervals)

    def to_list(self) -> list:
        return [[a, b] for a, b in self.intervals]

    @property
    def empty(self) -> bool:
        return not self.intervals


SetLike = Union[IntervalUnion, Sequence[float], np.ndarray]


def _as_union(x: SetLike) -> IntervalUnion:
    return x if isinstance(x, IntervalUnion) else IntervalUnion.points(np.ravel(np.asarray(x, dtype=float)))


def _directed(A: IntervalUnion, B: IntervalUnion) -> float:
    """``sup_{a in A} dist(a, B)``; the sup sits at an endpoint of A or a gap midpoint of B."""
    cand = [t for ab in A.intervals for t in ab]
    for (_, b0), (a1, _) in zip(B.intervals[:-1], B.intervals[1:]):
        mid = 0.5 * (b0 + a1)
        if A.contains(mid):
            cand.append(mid)
    return max(B.distance_to(x) for x in cand)


def hausdorff_distance(A: SetLike, B: SetLike) -> float:
    A, B = _as_union(A), _as_union(B)
    if A.empty or B.empty:
        raise EmptySet("Hausdorff distance needs two nonempty sets")
    return max(_directed(A, B), _directed(B, A))


# limit spectrum -------------------------------------------------------------

def _bisect(beta: BetaFunction, lo: float, hi: float) -> float:
    flo = _beta_raw(beta, lo)
    while hi - lo > EDGE_TOL * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        fm = _beta_raw(beta, mid)
        if (fm >= 0) == (flo >= 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _segment_nodes(a: float, b: float, samples: int) -> np.ndarray:
    """Interior sample points clustered towards both ends of ``(a, b)``."""
    s = 0.5 - 0.5 * np.cos(np.linspace(0.0, np.pi, samples + 2))[1:-1]
    return a + (b - a) * s


@dataclass(frozen=True)
class LimitSpectrum:
    bands: IntervalUnion
    isolated: tuple
    union: IntervalUnion
    edges: tuple
    max_halfwidth: float


def limit_spectrum(
    beta: BetaFunction,
    lam_max: float,
    samples: int = 4000,
    tail_limit: float = TAIL_LIMIT,
) -> LimitSpectrum:
    """``{lam in [0, lam_max] : beta(lam) >= 0}`` united with the Dirichlet spectrum below ``lam_max``."""
    data = beta.data
    poles = np.sort(beta.data.values[: beta.J][beta.data.weights[: beta.J] > WEIGHT_FLOOR])
    poles = poles[poles < lam_max]
    cuts = np.concatenate([[0.0], poles, [lam_max]])
    pieces: list[tuple[float, float]] = []
    edges: list[float] = []
    worst = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        x = _segment_nodes(a, b, samples)
        if b == lam_max:
            x = np.append(x, b)
        if a == 0.0:
            x = np.insert(x, 0, 0.0)
        f = _beta_raw(beta, x)
        pos = f >= 0
        start = a if pos[0] else None
        for i in range(1, x.size):
            if pos[i] != pos[i - 1]:
                r = _bisect(beta, x[i - 1], x[i])
                edges.append(r)
                worst = max(worst, beta.halfwidth(r))
                if pos[i]:
                    start = r
                else:
                    pieces.append((start, r))
                    start = None
        if start is not None:
            pieces.append((start, b))
    if worst > tail_limit:
        raise TailBoundTooLarge(f"truncation half-width {worst:.3e} at a band edge exceeds {tail_limit}")
    s0 = data.values[data.values <= lam_max]
    bands = IntervalUnion.build(pieces)
    return LimitSpectrum(
        bands=bands,
        isolated=tuple(float(v) for v in s0),
        union=IntervalUnion.build(list(bands.intervals) + [(v, v) for v in s0]),
        edges=tuple(edges),
        max_halfwidth=worst,
    )


# Bloch spectra ---------------------------------------------------------------

def fiber_eigenvalues(forms: AssembledForms, eps: float, theta, m: int) -> np.ndarray:
    """Lowest ``m`` eigenvalues of ``(eps^-2 K(A1, k) + K(A0, k), M)`` at ``k = eps theta``."""
    k = reduce_kappa(eps * np.asarray(theta, dtype=float))
    K = (forms.stiffness("a1", k) / eps**2 + forms.stiffness("a0", k)).astype(complex).tocsc()
    M = forms.M.astype(complex).tocsc()
    v0 = np.ones(forms.N, dtype=complex)
    try:
        lam = spla.eigsh(K, k=m, M=M, sigma=-1.0, which="LM", v0=v0, return_eigenvectors=False, tol=1e-12)
    except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
        raise EigenFailure(f"fibre eigensolve failed: {exc}") from exc
    lam = np.sort(np.real(lam))
    lam[np.abs(lam) < 1e-9] = 0.0
    return lam


def bloch_spectrum(forms: AssembledForms, eps: float, thetas, m: int, threads: int = 1) -> np.ndarray:
    from .estimator import parallel_map

    pts = np.atleast_2d(np.asarray(thetas, dtype=float))
    vals = parallel_map(lambda t: fiber_eigenvalues(forms, eps, t, m), pts, threads)
    return np.sort(np.concatenate(vals))


def spectral_theta_grid(
    beta: BetaFunction,
    Ahom: HomogenizedMatrix,
    eps: float,
    lam_max: float,
    count: int = 24,
) -> np.ndarray:
    """``count`` quasimomenta whose limit eigenvalues are equispaced over the bands below ``lam_max``.

    Target values ``lam_i`` are spread uniformly along the band part of the
    limit set; each is mapped to the radius solving
    ``A^hom theta.theta = beta(lam_i)`` and placed on the axis or diagonal
    directions in turn, clipped to the Brillouin zone ``eps^-1 [-pi, pi)^2``.
    Sampling density in ``lam`` is thus the same for every ``eps``.
    """
    bands = limit_spectrum(beta, lam_max, tail_limit=np.inf).bands.intervals
    total = sum(b - a for a, b in bands)
    dirs = (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2.0))
    pts = []
    for i in range(count):
        t = total * i / count
        for a, b in bands:
            if t <= b - a:
                lam = a + t
                break
            t -= b - a
        d = dirs[i % 3]
        s = max(_beta_raw(beta, lam), 0.0) if lam > 0 else 0.0
        r = np.sqrt(s / Ahom.quadratic(d))
        pts.append(min(r, np.pi / (eps * np.max(np.abs(d)))) * d)
    return np.array(pts)


def hausdorff_trend(
    forms: AssembledForms,
    Ahom: HomogenizedMatrix,
    beta: BetaFunction,
    eps_list: Sequence[float],
    lam_max: float,
    bands: int = 4,
    count: int = 24,
    threads: int = 1,
) -> list[dict]:
    """Hausdorff distance on ``[0, lam_max]`` between pooled Bloch eigenvalues and the limit set.

    Each entry also carries the theta grid and the per-theta band values.
    """
    from .estimator import parallel_map

    limit = limit_spectrum(beta, lam_max).union
    out = []
    for eps in eps_list:
        grid = spectral_theta_grid(beta, Ahom, eps, lam_max, count)
        per_theta = parallel_map(lambda t: fiber_eigenvalues(forms, eps, t, bands), grid, threads)
        pooled = np.sort(np.concatenate(per_theta))
        inside = pooled[pooled <= lam_max]
        out.append({
            "eps": float(eps),
            "hausdorff": hausdorff_distance(inside, limit),
            "points": int(inside.size),
            "thetas": grid.tolist(),
            "bands": [v.tolist() for v in per_theta],
        })
    return out


# eigenvalue identity --------------------------------------------------------

def eigen_identity_check(
    forms: AssembledForms,
    Ahom: HomogenizedMatrix,
    eps: float,
    theta,
    J: Optional[int] = None,
    lam_max: float = np.inf,
    c_floor: float = 1e-6,
) -> tuple[float, int]:
    """Largest dispersion-relation residual over eigenpairs of the homogenised fibre with ``c != 0``.

    Eigenpairs of the block pencil ``(stiff, gram)`` are computed directly;
    for each one below ``lam_max`` the relation
    ``A^hom theta.theta = lam (1 + lam sum_j |int phi_j|^2 / (lam_j - lam))``
    is evaluated with the eigenpairs of the shifted Dirichlet pencil at
    ``kappa = eps theta``, truncated at ``J``. Residuals are scaled by the
    size of the terms, ``|lhs| + |lam| + lam^2 sum_j w_j / |lam_j - lam|``.
    Returns ``(residual, count)``.
    """
    k = reduce_kappa(eps * np.asarray(theta, dtype=float))
    theta = k / eps
    blk = block_system(forms, Ahom, theta, k)
    lam, vec = sla.eigh(blk.stiff, blk.gram)
    K, M, g = _interior_blocks(forms, k)
    mu, phi = sla.eigh(K, M)
    J = mu.size if J is None else min(int(J), mu.size)
    w = np.abs(phi[:, :J].conj().T @ g) ** 2
    mu = mu[:J]
    lhs = Ahom.quadratic(theta)
    worst = 0.0
    count = 0
    for l, x in zip(lam, vec.T):
        if l > lam_max:
            break
        c = x[0] / np.linalg.norm(x)
        if abs(c) < c_floor:
            continue
        terms = l * l * w / (mu - l)
        rhs = l + float(np.sum(terms))
        scale = abs(lhs) + abs(l) + float(np.sum(np.abs(terms)))
        worst = max(worst, abs(lhs - rhs) / max(scale, 1.0))
        count += 1
    return float(worst), count
