"""Independent references: closed forms and brute-force dense constructions.

The laminate and separable-eigenfunction formulas do not touch the assembly
code; the brute-force fibre builds explicit matrices column by column and
measures distances through an SVD instead of a Hermitian eigenproblem.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla

FIXTURE_VERSION = "1"


@dataclass(frozen=True)
class LaminateSpec:
    a_minus: float
    a_plus: float
    fraction: float = 0.5  # volume of the a_minus layer
    axis: int = 0  # layer normal

    def __post_init__(self):
        if not (self.a_minus > 0 and self.a_plus > 0):
            raise ValueError("laminate coefficients must be positive")
        if not 0.0 < self.fraction < 1.0:
            raise ValueError("volume fraction must lie in (0, 1)")
        if self.axis not in (0, 1):
            raise ValueError("axis must be 0 or 1")


def laminate_Ahom(spec: LaminateSpec) -> np.ndarray:
    """Harmonic mean along the layer normal, arithmetic mean across it."""
    f = spec.fraction
    harmonic = 1.0 / (f / spec.a_minus + (1.0 - f) / spec.a_plus)
    arithmetic = f * spec.a_minus + (1.0 - f) * spec.a_plus
    out = np.diag([arithmetic, arithmetic])
    out[spec.axis, spec.axis] = harmonic
    return out


def laminate_corrector(spec: LaminateSpec, t) -> np.ndarray:
    """Zero-mean periodic solution of ``(a (1 + N'))' = 0`` at normal coordinates ``t``.

    ``N' = a_h / a - 1`` is piecewise constant, so ``N`` is piecewise linear.
    """
    t = np.mod(np.asarray(t, dtype=float), 1.0)
    f = spec.fraction
    ah = laminate_Ahom(spec)[spec.axis, spec.axis]
    s_minus = ah / spec.a_minus - 1.0
    s_plus = ah / spec.a_plus - 1.0
    raw = np.where(t < f, s_minus * t, s_minus * f + s_plus * (t - f))
    # mean of the piecewise-linear profile over one period
    mean = s_minus * f**2 / 2 + s_minus * f * (1 - f) + s_plus * (1 - f) ** 2 / 2
    return raw - mean


@dataclass(frozen=True)
class SquareMode:
    m: int
    n: int
    value: float
    weight: float


def square_inclusion_eigs(side: float, J: int, a0: float = 1.0) -> list[SquareMode]:
    """Lowest ``J`` Dirichlet modes of ``-a0 Laplace`` on a square of side ``ell``.

    ``lambda_mn = a0 (pi / ell)^2 (m^2 + n^2)``, with ``L^2``-normalised
    eigenfunctions ``(2 / ell) sin(m pi x / ell) sin(n pi y / ell)`` whose mean
    squared gives ``b_mn = 64 ell^2 / (pi^4 m^2 n^2)`` for odd ``m, n`` and 0
    otherwise; ``b_11 = 16 / pi^4`` at ``ell = 1/2``.
    """
    top = int(np.ceil(np.sqrt(J))) + 2
    modes = []
    for m in range(1, top + 1):
        for n in range(1, top + 1):
            lam = a0 * (np.pi / side) ** 2 * (m * m + n * n)
            b = 64 * side**2 / (np.pi**4 * m * m * n * n) if (m % 2 and n % 2) else 0.0
            modes.append(SquareMode(m=m, n=n, value=float(lam), weight=float(b)))
    modes.sort(key=lambda md: (md.value, md.m))
    return modes[:J]


def torus_laplace_eigenvalue(kappa) -> float:
    """Smallest ``|kappa + 2 pi k|^2`` over integer ``k``."""
    k = np.asarray(kappa, dtype=float)
    r = np.mod(k + np.pi, 2 * np.pi) - np.pi
    return float(r @ r)


def classical_poincare_constant() -> float:
    """``max ||w||_{H1}^2 / ||grad w||^2`` over mean-zero periodic ``w``: ``1 + 1 / (4 pi^2)``."""
    return 1.0 + 1.0 / (4 * np.pi**2)


# brute-force fibre -----------------------------------------------------------

@dataclass(frozen=True)
class DenseFiber:
    fine: np.ndarray
    hom: np.ndarray
    mass: np.ndarray

    def distance(self) -> float:
        """``|| L^T (R_fine - R_hom) L^-T ||_2`` with ``M = L L^T``."""
        L = np.linalg.cholesky(self.mass)
        D = self.fine - self.hom
        X = L.T @ D
        W = sla.solve_triangular(L, X.conj().T, lower=True).conj().T
        return float(np.linalg.svd(W, compute_uv=False)[0])

    def hermiticity_defect(self, which: str = "fine") -> float:
        R = getattr(self, which)
        A = self.mass @ R
        return float(np.max(np.abs(A - A.conj().T)))


def brute_force_fiber(model, eps: float, theta, max_n: int = 8) -> DenseFiber:
    """Dense resolvent matrices, one column per nodal basis vector."""
    from .fem import assemble_forms
    from .fibers import fine_resolvent, hom_resolvent
    from .homogenization import homogenize

    if model.n > max_n:
        raise ValueError(f"brute-force fibres are limited to n <= {max_n}")
    forms = assemble_forms(model)
    _, Ahom = homogenize(forms)
    N = forms.N
    fine = np.empty((N, N), dtype=complex)
    hom = np.empty((N, N), dtype=complex)
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1.0
        fine[:, j] = fine_resolvent(forms, eps, theta, e)
        hom[:, j] = hom_resolvent(forms, Ahom, eps, theta, e)[2]
    return DenseFiber(fine=fine, hom=hom, mass=forms.M.toarray())


# fixtures ---------------------------------------------------------------------

@dataclass(frozen=True)
class Fixture:
    oracle: str
    parameters: dict
    values: dict
    tolerance: float


def generate_fixtures() -> list[Fixture]:
    """Oracle values frozen into the test suite; regenerate with ``scripts/freeze_fixtures.py``."""
    lam = LaminateSpec(1.0, 4.0, 0.5, 0)
    sq = square_inclusion_eigs(0.5, 6)
    return [
        Fixture("laminate_Ahom", asdict(lam), {"matrix": laminate_Ahom(lam).tolist()}, 1e-8),
        Fixture(
            "square_inclusion_eigs",
            {"side": 0.5, "J": 6},
            {"modes": [[md.m, md.n, md.value, md.weight] for md in sq]},
            1e-12,
        ),
        Fixture("torus_laplace_eigenvalue", {"kappa": [np.pi, 0.0]}, {"value": torus_laplace_eigenvalue((np.pi, 0.0))}, 1e-12),
        Fixture("classical_poincare_constant", {}, {"value": classical_poincare_constant()}, 1e-12),
        Fixture("kernel_dimension", {"n": 32, "side": 0.5}, {"kappa_zero": 226, "kappa_nonzero": 225}, 0.0),
        Fixture("hminus1_of_mass_ones", {}, {"value": 1.0}, 1e-12),
    ]


def write_fixtures(path: Path) -> None:
    payload = {
        "version": FIXTURE_VERSION,
        "fixtures": [asdict(f) for f in generate_fixtures()],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_fixtures(path: Path) -> dict:
    data = json.loads(Path(path).read_text())
    return {f["oracle"]: f for f in data["fixtures"]}


def fixture_path() -> Optional[Path]:
    """Location of the frozen fixtures when running from a source checkout."""
    p = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "oracles.json"
    return p if p.exists() else None
