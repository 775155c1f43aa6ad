import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hicontrast.estimator import hom_part, mass_norm_of_difference
from hicontrast.fibers import (
    TorusSample,
    fibre_norm,
    fine_fiber,
    fine_resolvent,
    gelfand_forward,
    gelfand_inverse,
    hom_fiber,
    hom_resolvent,
    outer_resolvent,
    project_Pf,
    reduce_theta,
)
from hicontrast.spectra import dirichlet_eigs

thetas = st.tuples(st.floats(-20, 20), st.floats(-20, 20))


def _unit(forms, rng, complex_=True):
    F = rng.standard_normal(forms.N) + (1j * rng.standard_normal(forms.N) if complex_ else 0)
    return F / forms.l2_norm(F)


@given(st.sampled_from([0.5, 0.125]), thetas, st.integers(-3, 3), st.integers(-3, 3))
def test_reduce_theta(eps, theta, k1, k2):
    r = reduce_theta(eps, theta)
    assert np.all(np.abs(r) <= np.pi / eps)
    shifted = np.add(theta, (2 * np.pi * k1 / eps, 2 * np.pi * k2 / eps))
    assert np.allclose(reduce_theta(eps, shifted), r, atol=1e-9)


def test_fine_constant_and_zero(default16):
    forms, _, _ = default16
    u = fine_resolvent(forms, 0.25, (0.0, 0.0), forms.ones)
    # exact up to the LU round-off of the eps^-2 scaled system
    assert np.abs(u - 1).max() < 1e-10
    assert not np.any(fine_resolvent(forms, 0.25, (1.0, 2.0), np.zeros(forms.N)))


@given(st.sampled_from([0.5, 0.25, 0.1]), thetas, st.integers(0, 2**31))
def test_fine_contraction_and_hermitian(default16, eps, theta, seed):
    forms, _, _ = default16
    rng = np.random.default_rng(seed)
    fib = fine_fiber(forms, eps, theta)
    S = fib.matrix.toarray()
    assert np.abs(S - S.conj().T).max() < 1e-10 * np.abs(S).max()
    F = _unit(forms, rng)
    assert forms.l2_norm(fib.apply_resolvent(forms, F)) <= 1 + 1e-10


def test_fine_pencil_bounded_below(default16):
    import scipy.linalg as sla

    forms, _, _ = default16
    S = fine_fiber(forms, 0.25, (3.0, -1.0)).matrix.toarray()
    assert sla.eigh(S, forms.M.toarray(), eigvals_only=True)[0] >= 1 - 1e-10


def test_hom_constant_and_zero(default16):
    forms, _, hom = default16
    for flag in (False, True):
        c, v, field = hom_resolvent(forms, hom, 0.25, (0.0, 0.0), forms.ones, zero_eps=flag)
        assert c == pytest.approx(1.0, abs=1e-12)
        assert np.abs(v).max() < 1e-12
        c, v, field = hom_resolvent(forms, hom, 0.25, (0.5, 0.5), np.zeros(forms.N), zero_eps=flag)
        assert c == 0 and not np.any(v)


@given(st.sampled_from([0.5, 0.25]), thetas, st.integers(0, 2**31), st.booleans())
def test_hom_contraction_and_hermitian(default16, eps, theta, seed, flag):
    forms, _, hom = default16
    fib = hom_fiber(forms, hom, eps, theta, zero_eps=flag)
    A = fib.system
    assert np.abs(A - A.conj().T).max() < 1e-12 * np.abs(A).max()
    assert np.linalg.eigvalsh(A)[0] > 0
    F = _unit(forms, np.random.default_rng(seed))
    _, _, u = hom_resolvent(forms, hom, eps, theta, F, zero_eps=flag)
    assert forms.l2_norm(u) <= 1 + 1e-10


@given(thetas, st.floats(-3, 3))
def test_hom_scalar_reduction_without_inclusion(classical16, theta, shift):
    forms, _, hom = classical16
    F = forms.ones * (1.0 + shift) + np.sin(2 * np.pi * forms.model.node_coords[:, 0])
    c, v, field = hom_resolvent(forms, hom, 0.25, theta, F)
    mean = float(forms.mass_ones @ F)
    assert v.size == 0
    assert c == pytest.approx(mean / (hom.quadratic(reduce_theta(0.25, theta)) + 1), abs=1e-12)
    assert np.allclose(field, c)


def test_project_Pf(default16, rng):
    forms, _, _ = default16
    assert np.abs(project_Pf(forms, forms.ones) - 1).max() < 1e-12
    F = rng.standard_normal(forms.N)
    G = rng.standard_normal(forms.N)
    P = project_Pf(forms, F)
    assert np.abs(project_Pf(forms, P) - P).max() < 1e-12
    # orthogonality to the explicit basis of the target space
    from hicontrast.homogenization import identification_basis

    E = identification_basis(forms)
    assert np.abs(E.T @ (forms.M @ (F - P))).max() < 1e-12
    # self-adjoint in the mass inner product
    lhs = G @ (forms.M @ P)
    rhs = project_Pf(forms, G) @ (forms.M @ F)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    soft = np.zeros(forms.N)
    soft[forms.model.interior_nodes] = rng.standard_normal(forms.model.interior_nodes.size)
    assert np.abs(project_Pf(forms, soft) - soft).max() < 1e-12


def test_zero_eps_variant_is_close(default16):
    """The two homogenised fibres differ by O(eps |theta|) on the inner grid."""
    forms, _, hom = default16
    for theta in ((1.0, 0.0), (0.5, 0.5)):
        ratios = []
        for eps in (0.2, 0.1, 0.05):
            a = hom_part(hom_fiber(forms, hom, eps, theta))
            b = hom_part(hom_fiber(forms, hom, eps, theta, zero_eps=True))
            d = mass_norm_of_difference(forms, a, [b], method="dense")
            ratios.append(d / (eps * np.hypot(*theta)))
        assert max(ratios) < 1.0
        assert max(ratios) / min(ratios) < 1.5


def test_outer_resolvent(default32):
    forms, _, _ = default32
    assert not np.any(outer_resolvent(forms, np.zeros(forms.N)))
    w = outer_resolvent(forms, forms.ones)
    outside = np.setdiff1d(np.arange(forms.N), forms.model.interior_nodes)
    assert not np.any(w[outside])
    assert forms.l2_norm(w) <= 1.0
    data = dirichlet_eigs(forms)
    series = float(np.sum(data.weights / (data.values + 1)))
    assert float(forms.mass_ones @ w.real) == pytest.approx(series, rel=1e-9)
    # kappa only enters through the phase conjugation
    assert forms.l2_norm(outer_resolvent(forms, forms.ones, (1.0, 0.5))) <= 1.0


@pytest.mark.parametrize("m_cells,n", [(4, 4), (8, 6), (16, 4)])
def test_gelfand_unitary(m_cells, n, rng):
    vals = rng.standard_normal((m_cells, m_cells, n, n)) + 1j * rng.standard_normal((m_cells, m_cells, n, n))
    s = TorusSample(m_cells, n, vals)
    g = gelfand_forward(s)
    assert fibre_norm(g, m_cells, n) == pytest.approx(s.norm(), rel=1e-10)
    back = gelfand_inverse(g, m_cells, n)
    assert np.abs(back.values - vals).max() < 1e-10


def test_gelfand_periodic_sample(rng):
    m_cells, n = 8, 4
    cell = rng.standard_normal((n, n))
    s = TorusSample(m_cells, n, np.broadcast_to(cell, (m_cells, m_cells, n, n)).copy())
    g = gelfand_forward(s)
    assert np.abs(g[0, 0] - m_cells * cell).max() < 1e-10
    g[0, 0] = 0
    assert np.abs(g).max() < 1e-10


def test_gelfand_plane_wave_lands_on_one_fibre():
    m_cells, n = 8, 4
    k = 3
    x = (np.arange(m_cells)[:, None] + np.arange(n)[None, :] / n).ravel() / m_cells
    wave = np.exp(2j * np.pi * k * x).reshape(m_cells, n)
    vals = wave[:, None, :, None] * np.ones((1, m_cells, 1, n))
    g = gelfand_forward(TorusSample(m_cells, n, vals))
    mag = np.abs(g).sum(axis=(2, 3))
    assert np.count_nonzero(mag > 1e-10) == 1
    assert mag[k, 0] > 0


def test_torus_shape_checked():
    with pytest.raises(ValueError):
        TorusSample(4, 4, np.zeros((4, 4, 4)))
