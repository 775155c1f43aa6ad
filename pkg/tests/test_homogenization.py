import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hicontrast import assemble_forms, default_model, homogenize, laminate_model
from hicontrast.homogenization import (
    build_inner_corrector,
    case1_residual,
    corrector_ratios,
    corrector_suite,
    residual_terms,
)
from hicontrast.oracles import LaminateSpec, laminate_Ahom, laminate_corrector


def test_laminate_Ahom(oracle, laminate32):
    _, _, hom = laminate32
    ref = np.array(oracle["laminate_Ahom"]["values"]["matrix"])
    assert np.allclose(laminate_Ahom(LaminateSpec(1.0, 4.0)), ref, atol=1e-12)
    assert np.abs(hom.matrix - ref).max() <= oracle["laminate_Ahom"]["tolerance"]


def test_laminate_corrector_matches_closed_form(laminate32):
    forms, cells, _ = laminate32
    y = forms.model.node_coords
    ref = laminate_corrector(LaminateSpec(1.0, 4.0), y[:, 0])
    N1 = cells.N[0] - cells.N[0].mean()
    assert np.abs(N1 - ref).max() < 1e-10
    # the corrector across the layers is constant
    assert np.ptp(cells.N[1]) < 1e-10


@given(
    st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.sampled_from([0.25, 0.5, 0.75]), st.sampled_from([0, 1])
)
def test_laminate_family(a_minus, a_plus, fraction, axis):
    forms = assemble_forms(laminate_model(8, a_minus, a_plus, fraction, axis))
    _, hom = homogenize(forms)
    ref = laminate_Ahom(LaminateSpec(a_minus, a_plus, fraction, axis))
    assert np.abs(hom.matrix - ref).max() <= 1e-8 * max(a_minus, a_plus)


def test_constant_coefficients():
    from hicontrast import classical_model

    forms = assemble_forms(classical_model(16, a1=np.array([[2.0, 0.5], [0.5, 1.0]]), nu=0.5))
    cells, hom = homogenize(forms)
    assert np.abs(cells.N).max() < 1e-12
    assert np.allclose(hom.matrix, [[2.0, 0.5], [0.5, 1.0]], atol=1e-12)


def test_default_Ahom_scalar_and_converged(default32):
    _, _, hom = default32
    A = hom.matrix
    assert abs(A[0, 1]) < 1e-12 and A[0, 0] == pytest.approx(A[1, 1], rel=1e-12)
    assert np.linalg.eigvalsh(A)[0] >= hom.nu * hom.m_min
    _, fine = homogenize(assemble_forms(default_model(64)))
    assert np.abs(fine.matrix - A).max() / np.abs(fine.matrix).max() < 5e-3


def test_corrector_at_zero_theta(default16):
    forms, cells, hom = default16
    cs = build_inner_corrector(forms, hom, cells, (0.0, 0.0), forms.ones)
    assert cs.c0 == pytest.approx(1.0, abs=1e-12)
    assert np.abs(cs.v0).max() < 1e-12
    assert not np.any(cs.u1)
    zero = build_inner_corrector(forms, hom, cells, (0.3, 0.4), np.zeros(forms.N))
    for v in (zero.c0, zero.v0, zero.u0, zero.u1, zero.R):
        assert not np.any(v)
    assert set(corrector_ratios(forms, zero).values()) == {0.0}


def test_corrector_rejects_outer_theta(default16):
    forms, cells, hom = default16
    with pytest.raises(ValueError):
        build_inner_corrector(forms, hom, cells, (1.0, 1.0), forms.ones)


def test_expansion_is_exact(default16, rng):
    """The fine fibre operator applied to the expansion leaves exactly the listed residual."""
    forms, cells, hom = default16
    theta = np.array([0.6, -0.3])
    F = rng.standard_normal(forms.N)
    cs = build_inner_corrector(forms, hom, cells, theta, F)
    eps = 0.2
    kappa = eps * theta
    S = eps**-2 * forms.stiffness("a1", kappa) + forms.stiffness("a0", kappa) + forms.M
    u = cs.u0 + eps * cs.u1 + eps**2 * cs.R
    expected = sum(eps ** (n + 1) * T for n, T in enumerate(residual_terms(forms, cs)))
    got = forms.M @ F - S @ u
    assert np.abs(got - expected).max() < 1e-8 * np.abs(forms.M @ F).max()


def test_case1_residual_halves(default16, rng):
    forms, cells, hom = default16
    F = rng.standard_normal(forms.N)
    F /= forms.l2_norm(F)
    cs = build_inner_corrector(forms, hom, cells, (0.5, 0.5), F)
    # the first-order term dominates once eps <= 1/8
    r = [case1_residual(forms, cs, e) for e in (0.125, 0.0625, 0.03125, 0.015625)]
    ratios = np.array(r[1:]) / np.array(r[:-1])
    assert np.all((ratios >= 0.35) & (ratios <= 0.65))


def test_corrector_suite(default16):
    forms, cells, hom = default16
    suite = corrector_suite(forms, hom, cells, (0.0, 0.5, 1.0), draws=3, seed=7)
    assert suite.within_constant
    again = corrector_suite(forms, hom, cells, (0.0, 0.5, 1.0), draws=3, seed=7)
    assert suite == again
