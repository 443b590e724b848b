import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermosyphon.errors import DomainError
from thermosyphon.reduction import (ReductionSpec, ShapeFunctions, composite_gauss, effective_coefficients,
                                    power_law_conductivity, reduction_coefficients)

S = 0.05


def test_constant_shapes():
    lam1, lam2 = reduction_coefficients(ReductionSpec(S=S, beta_exp=0.9))
    assert lam1 == pytest.approx(0.025, rel=1e-15) and lam2 == pytest.approx(0.025, rel=1e-15)


def test_linear_temperature_shape():
    lam1, lam2 = reduction_coefficients(ReductionSpec.from_names(S=S, beta_exp=0.0, Z="linear"))
    assert lam1 == pytest.approx(S / 4, rel=1e-13) and lam2 == pytest.approx(S / 4, rel=1e-13)
    lam1, _ = reduction_coefficients(ReductionSpec.from_names(S=S, beta_exp=1.0, Z="linear"))
    assert lam1 == pytest.approx(S / 6, rel=1e-13)


def test_parabolic_velocity_with_linear_temperature():
    # int_0^{S/2} (1 - 2z/S) 6 (z/S)(1 - z/S) dz = 3 S / 16
    _, lam2 = reduction_coefficients(ReductionSpec.from_names(S=S, beta_exp=0.9, Z="linear", B="parabolic"))
    assert lam2 == pytest.approx(3 * S / 16, rel=1e-12)


@pytest.mark.parametrize("beta_exp", [0.3, 0.9, 1.5])
def test_fractional_power_of_vanishing_shape(beta_exp):
    # int_0^{S/2} (1 - 2z/S)^(beta+1) dz = (S/2) / (beta + 2)
    lam1, _ = reduction_coefficients(ReductionSpec.from_names(S=S, beta_exp=beta_exp, Z="linear"))
    assert lam1 == pytest.approx(0.5 * S / (beta_exp + 2.0), rel=1e-12)


@pytest.mark.parametrize("Z, B", [("linear", "parabolic"), ("constant", "parabolic"), ("linear", "constant")])
@pytest.mark.parametrize("beta_exp", [0.0, 0.5, 0.9, 2.0])
def test_quadrature_self_consistency(Z, B, beta_exp):
    spec = ReductionSpec.from_names(S=S, beta_exp=beta_exp, Z=Z, B=B)
    a = np.array(reduction_coefficients(spec, 64))
    b = np.array(reduction_coefficients(spec, 128))
    np.testing.assert_allclose(a, b, rtol=1e-10)


@given(st.floats(0.0, 3.0), st.floats(0.01, 1.0))
def test_lambda1_decreases_with_exponent(beta_exp, step):
    lo = reduction_coefficients(ReductionSpec.from_names(S=S, beta_exp=beta_exp, Z="linear"))[0]
    hi = reduction_coefficients(ReductionSpec.from_names(S=S, beta_exp=beta_exp + step, Z="linear"))[0]
    assert hi < lo


def test_shape_must_be_normalised():
    with pytest.raises(DomainError):
        ReductionSpec(S=S, Z=lambda z: 2.0 + 0 * z)
    with pytest.raises(DomainError):
        ReductionSpec(S=-1.0)
    with pytest.raises(ValueError):
        ReductionSpec.from_names(Z="cubic")


def test_shapes_bounded():
    z = np.linspace(0.0, S / 2, 101)
    for fn in (ShapeFunctions.constant(S), ShapeFunctions.linear(S), ShapeFunctions.parabolic(S)):
        v = fn(z)
        assert np.all(np.isfinite(v)) and np.all(v >= 0) and np.all(v <= 1.5)


def test_effective_coefficients():
    h_hat, v_hat = effective_coefficients(0.025, 0.025, 1.1, 0.3)
    assert h_hat == pytest.approx(44.0, rel=1e-14) and v_hat == pytest.approx(0.3)
    assert effective_coefficients(0.025, 0.0125, 1.1, 0.0)[1] == 0.0
    with pytest.raises(DomainError):
        effective_coefficients(0.0, 0.1, 1.0, 1.0)


def test_power_law_conductivity():
    k0, u0 = 0.0262, 300.0
    assert power_law_conductivity(k0, u0, 0.9, u0) == pytest.approx(k0)
    assert power_law_conductivity(k0, u0, 0.0, 450.0) == pytest.approx(k0)
    # 1.2^0.9 to 12 digits
    assert power_law_conductivity(k0, u0, 0.9, 1.2 * u0) == pytest.approx(1.17831965347 * k0, rel=1e-11)
    with pytest.raises(DomainError):
        power_law_conductivity(k0, u0, 0.9, -1.0)


def test_composite_gauss_polynomial_exact():
    assert composite_gauss(lambda z: z ** 7, 0.0, 2.0, 8, cluster=0) == pytest.approx(2.0 ** 8 / 8, rel=1e-14)
    assert composite_gauss(lambda z: z ** 7, 0.0, 2.0) == pytest.approx(2.0 ** 8 / 8, rel=1e-12)
