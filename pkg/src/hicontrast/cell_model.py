"""Unit cell, soft inclusion and coefficient fields.

The cell ``Q = [0,1)^2`` is discretised by an ``n x n`` periodic grid of square
elements. Element ``(i, j)`` covers ``[i h, (i+1) h) x [j h, (j+1) h)`` and has
flat index ``i * n + j``; node ``(i, j)`` sits at ``(i h, j h)`` with the same
flat indexing. The soft phase Q0 is a grid-aligned open box, the stiff phase
Q1 is its complement.
"""
from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    EllipticityViolated,
    InclusionTouchesBoundary,
    MisalignedInclusion,
    StiffDisconnected,
    ValidationError,
)

Box = tuple[tuple[float, float], tuple[float, float]]
TensorLike = Union[float, np.ndarray, Callable[[float, float], object]]

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class CellGeometry:
    resolution: int
    inclusion_box: Optional[Box] = None
    dimension: int = 2

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    @property
    def is_classical(self) -> bool:
        return self.inclusion_box is None


@dataclass(frozen=True)
class CoefficientSpec:
    """Per-element constant tensors, arrays of shape ``(n*n, 2, 2)``."""

    a1: np.ndarray
    a0: np.ndarray
    nu: float


@dataclass(frozen=True)
class CellModel:
    geometry: CellGeometry
    coefficients: CoefficientSpec
    soft_mask: np.ndarray = field(repr=False)
    interior_nodes: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.geometry.resolution

    @property
    def h(self) -> float:
        return self.geometry.h

    @property
    def n_nodes(self) -> int:
        return self.n * self.n

    @property
    def stiff_mask(self) -> np.ndarray:
        return ~self.soft_mask

    @property
    def n_interior(self) -> int:
        return int(self.interior_nodes.size)

    @property
    def soft_volume(self) -> float:
        return float(self.soft_mask.sum()) * self.h**2

    @property
    def node_coords(self) -> np.ndarray:
        idx = np.arange(self.n) * self.h
        y1, y2 = np.meshgrid(idx, idx, indexing="ij")
        return np.stack([y1.ravel(), y2.ravel()], axis=1)

    @property
    def digest(self) -> str:
        """Content hash of geometry and coefficients, used for cache keys and reports."""
        sha = hashlib.sha256()
        sha.update(repr((self.n, self.geometry.inclusion_box)).encode())
        sha.update(np.ascontiguousarray(self.coefficients.a1, dtype=float).tobytes())
        sha.update(np.ascontiguousarray(self.coefficients.a0, dtype=float).tobytes())
        sha.update(repr(float(self.coefficients.nu)).encode())
        return sha.hexdigest()[:16]


def element_centers(n: int) -> np.ndarray:
    c = (np.arange(n) + 0.5) / n
    y1, y2 = np.meshgrid(c, c, indexing="ij")
    return np.stack([y1.ravel(), y2.ravel()], axis=1)


def inclusion_mask(geometry: CellGeometry) -> np.ndarray:
    """Boolean element mask of the soft inclusion (all False for the classical case)."""
    n = geometry.resolution
    if geometry.inclusion_box is None:
        return np.zeros(n * n, dtype=bool)
    (a1, b1), (a2, b2) = geometry.inclusion_box
    ctr = element_centers(n)
    return (
        (ctr[:, 0] > a1) & (ctr[:, 0] < b1) & (ctr[:, 1] > a2) & (ctr[:, 1] < b2)
    )


def interior_soft_nodes(n: int, soft_mask: np.ndarray) -> np.ndarray:
    """Nodes all four of whose adjacent elements are soft."""
    soft = soft_mask.reshape(n, n)
    ok = np.ones((n, n), dtype=bool)
    for di in (0, -1):
        for dj in (0, -1):
            ok &= np.roll(soft, shift=(-di, -dj), axis=(0, 1))
    return np.flatnonzero(ok.ravel())


def _lattice_index(vectors: set[tuple[int, int]]) -> int:
    """Index in Z^2 of the lattice spanned by ``vectors`` (0 if rank < 2)."""
    g = 0
    for u, v in combinations(vectors, 2):
        g = math.gcd(g, abs(u[0] * v[1] - u[1] * v[0]))
    return g


def stiff_connectivity(stiff: np.ndarray) -> tuple[int, int]:
    """Periodic flood fill of the stiff elements.

    Returns ``(components, index)`` where ``components`` counts edge-connected
    components on the torus and ``index`` is the index of the lattice of
    periodic shifts reachable inside the first component. The periodic
    extension of the stiff set is connected iff both equal 1.
    """
    n = stiff.shape[0]
    offset = np.full((n, n, 2), np.iinfo(np.int64).min, dtype=np.int64)
    seen = np.zeros((n, n), dtype=bool)
    components = 0
    shifts: set[tuple[int, int]] = set()
    for start in zip(*np.nonzero(stiff)):
        if seen[start]:
            continue
        components += 1
        first = components == 1
        seen[start] = True
        offset[start] = (0, 0)
        queue = deque([start])
        while queue:
            i, j = queue.popleft()
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                wrap = (ii // n, jj // n)
                ii, jj = ii % n, jj % n
                if not stiff[ii, jj]:
                    continue
                new = offset[i, j] + np.array(wrap)
                if not seen[ii, jj]:
                    seen[ii, jj] = True
                    offset[ii, jj] = new
                    queue.append((ii, jj))
                elif first:
                    d = tuple(int(x) for x in new - offset[ii, jj])
                    if d != (0, 0):
                        shifts.add(d)
    return components, _lattice_index(shifts)


def _sample(value: TensorLike, n: int) -> np.ndarray:
    if callable(value):
        ctr = element_centers(n)
        out = np.empty((n * n, 2, 2))
        for e, (y1, y2) in enumerate(ctr):
            v = np.asarray(value(y1, y2), dtype=float)
            out[e] = v * np.eye(2) if v.ndim == 0 else v
        return out
    v = np.asarray(value, dtype=float)
    if v.ndim == 0:
        return np.broadcast_to(v * np.eye(2), (n * n, 2, 2)).copy()
    if v.shape == (2, 2):
        return np.broadcast_to(v, (n * n, 2, 2)).copy()
    if v.shape == (n * n, 2, 2):
        return v.copy()
    if v.shape == (n * n,):
        return v[:, None, None] * np.eye(2)
    raise ValidationError(f"cannot interpret coefficient of shape {v.shape}")


def sample_coefficients(
    geometry: CellGeometry, a1: TensorLike = 1.0, a0: TensorLike = 1.0, nu: float = 1.0
) -> CoefficientSpec:
    """Midpoint-sample coefficient fields; ``a1`` is zeroed on soft elements."""
    n = geometry.resolution
    A1 = _sample(a1, n)
    A1[inclusion_mask(geometry)] = 0.0
    return CoefficientSpec(a1=A1, a0=_sample(a0, n), nu=float(nu))


def _min_eig(tensors: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(tensors)[:, 0]


def build_cell(geometry: CellGeometry, coefficients: CoefficientSpec) -> CellModel:
    """Validate geometry and coefficients and return an immutable model."""
    n = geometry.resolution
    if geometry.dimension != 2:
        raise ValidationError("only dimension 2 is supported")
    if n < 2:
        raise ValidationError("resolution must be at least 2")
    box = geometry.inclusion_box
    if box is not None:
        for a, b in box:
            if not a < b:
                raise ValidationError(f"empty inclusion interval ({a}, {b})")
            for t in (a, b):
                if abs(t * n - round(t * n)) > _ALIGN_TOL:
                    raise MisalignedInclusion(f"inclusion edge {t} is off the grid lines of n={n}")
    soft = inclusion_mask(geometry)
    stiff = ~soft
    if stiff.any():
        comps, index = stiff_connectivity(stiff.reshape(n, n))
        if comps != 1 or index != 1:
            raise StiffDisconnected(
                f"stiff phase has {comps} periodic component(s), shift-lattice index {index}"
            )
    else:
        raise StiffDisconnected("stiff phase is empty")
    if box is not None:
        for a, b in box:
            if a <= 0.0 or b >= 1.0:
                raise InclusionTouchesBoundary(f"inclusion closure [{a}, {b}] not inside (0, 1)")

    a1 = np.asarray(coefficients.a1, dtype=float)
    a0 = np.asarray(coefficients.a0, dtype=float)
    nu = float(coefficients.nu)
    for name, arr in (("a1", a1), ("a0", a0)):
        if arr.shape != (n * n, 2, 2):
            raise ValidationError(f"{name} must have shape {(n * n, 2, 2)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise EllipticityViolated(f"{name} has non-finite entries")
        if not np.array_equal(arr, np.swapaxes(arr, 1, 2)):
            raise EllipticityViolated(f"{name} is not exactly symmetric")
    if not nu > 0:
        raise EllipticityViolated("ellipticity floor nu must be positive")
    tol = 1e-12 * max(1.0, nu)
    if np.any(_min_eig(a0) < nu - tol):
        raise EllipticityViolated("a0 violates a0 >= nu I")
    if np.any(_min_eig(a1[stiff]) < nu - tol):
        raise EllipticityViolated("a1 violates a1 >= nu I on the stiff phase")
    if np.any(a1[soft] != 0.0):
        raise EllipticityViolated("a1 must vanish on the soft inclusion")

    a1 = a1.copy()
    a0 = a0.copy()
    a1.setflags(write=False)
    a0.setflags(write=False)
    soft.setflags(write=False)
    interior = interior_soft_nodes(n, soft)
    interior.setflags(write=False)
    return CellModel(
        geometry=geometry,
        coefficients=CoefficientSpec(a1=a1, a0=a0, nu=nu),
        soft_mask=soft,
        interior_nodes=interior,
    )


def default_model(n: int = 32, side: float = 0.5, a0: TensorLike = 1.0) -> CellModel:
    """Centred square soft inclusion of the given side, ``A1 = I`` on the matrix."""
    lo, hi = 0.5 - side / 2, 0.5 + side / 2
    geom = CellGeometry(resolution=n, inclusion_box=((lo, hi), (lo, hi)))
    return build_cell(geom, sample_coefficients(geom, a1=1.0, a0=a0, nu=1.0))


def classical_model(n: int = 32, a1: TensorLike = 1.0, a0: TensorLike = 1.0, nu: float = 1.0) -> CellModel:
    geom = CellGeometry(resolution=n)
    return build_cell(geom, sample_coefficients(geom, a1=a1, a0=a0, nu=nu))


def laminate_model(
    n: int = 32,
    a_minus: float = 1.0,
    a_plus: float = 4.0,
    fraction: float = 0.5,
    axis: int = 0,
) -> CellModel:
    """Classical-case laminate: ``a_minus`` for ``y[axis] < fraction``, else ``a_plus``."""
    if abs(fraction * n - round(fraction * n)) > _ALIGN_TOL:
        raise MisalignedInclusion("laminate interface is off the grid lines")

    def a1(y1: float, y2: float) -> float:
        return a_minus if (y1, y2)[axis] < fraction else a_plus

    return classical_model(n, a1=a1, a0=1.0, nu=min(a_minus, a_plus, 1.0))
