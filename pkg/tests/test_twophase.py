import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermosyphon.errors import DomainError, PropertyRangeError
from thermosyphon.twophase import (SUBCOOLED, SUPERHEATED, SaturationModel, blasius_resistance, invert_state,
                                   mixture_density, mixture_enthalpy, mixture_viscosity, shah_baseline_h)

SAT = SaturationModel.default()


def _flat_model(rho_l=1000.0, rho_v=10.0, h_l=200e3, h_v=430e3):
    """Temperature-independent properties over [300, 310] K."""
    row = [rho_l, rho_v, h_l, h_v, 1e5, 1e-3, 1e-5]
    table = np.array([[300.0, *row], [310.0, *row]])
    table[:, 3] = [h_l, h_l + 1.0]  # liquid enthalpy must increase with T
    table[:, 5] = [1e5, 2e5]
    return SaturationModel(table)


def test_default_table_loads_and_validates():
    assert SAT.T_min <= 290.0 and SAT.T_max >= 370.0
    SAT.validate(samples=1000)


def test_mixture_density_example():
    sat = _flat_model()
    # 10000 / 505
    assert mixture_density(300.0, 0.5, sat) == pytest.approx(19.8019801980198, rel=1e-13)
    assert mixture_density(300.0, 0.0, sat) == pytest.approx(1000.0)
    assert mixture_density(300.0, 1.0, sat) == pytest.approx(10.0)


def test_mixture_enthalpy_example():
    sat = _flat_model()
    assert mixture_enthalpy(300.0, 0.25, sat) == pytest.approx(257.5e3, rel=1e-14)


def test_out_of_range_raises():
    with pytest.raises(PropertyRangeError):
        mixture_density(SAT.T_max + 5.0, 0.5, SAT)
    with pytest.raises(DomainError):
        mixture_enthalpy(330.0, 1.5, SAT)


def test_invert_trivial_states():
    T0 = 340.0
    r = invert_state(SAT.h_l(T0), SAT, T_hint=T0)
    assert r.T[0] == pytest.approx(T0) and r.x[0] == pytest.approx(0.0, abs=1e-14)
    r = invert_state(0.5 * (SAT.h_l(T0) + SAT.h_v(T0)), SAT, T_hint=T0)
    assert r.x[0] == pytest.approx(0.5, rel=1e-14)
    assert r.p[0] == pytest.approx(SAT.p_sat(T0))


def test_invert_flags_subcooled_and_superheated():
    T0 = 340.0
    r = invert_state([SAT.h_l(T0) - 5e3, SAT.h_v(T0) + 5e3], SAT, p_hint=SAT.p_sat(T0))
    assert r.regime.tolist() == [SUBCOOLED, SUPERHEATED]
    assert r.x.tolist() == [0.0, 1.0]
    # subcooled liquid sits below the saturation temperature, on the liquid line
    assert r.T[0] < T0 and SAT.h_l(r.T[0]) == pytest.approx(SAT.h_l(T0) - 5e3, rel=1e-12)


def test_round_trip_random_states():
    rng = np.random.default_rng(7)
    T = rng.uniform(SAT.T_min, SAT.T_max, 100)
    x = rng.uniform(0.0, 1.0, 100)
    H = mixture_enthalpy(T, x, SAT)
    r = invert_state(H, SAT, p_hint=SAT.p_sat(T))
    np.testing.assert_allclose(r.T, T, rtol=1e-8)
    np.testing.assert_allclose(r.x, x, rtol=1e-8, atol=1e-12)


@given(st.floats(290.0, 370.0), st.floats(0.0, 1.0))
def test_density_bounded_by_phases(T, x):
    rho = mixture_density(T, x, SAT)
    assert SAT.rho_v(T) * (1 - 1e-12) <= rho <= SAT.rho_l(T) * (1 + 1e-12)


@given(st.floats(290.0, 370.0), st.floats(0.0, 0.99), st.floats(1e-3, 0.01))
def test_enthalpy_increasing_in_quality(T, x, dx):
    assert mixture_enthalpy(T, x + dx, SAT) > mixture_enthalpy(T, x, SAT)


def test_mixture_viscosity_limits():
    assert mixture_viscosity(330.0, 0.0, SAT) == pytest.approx(SAT.mu_l(330.0))
    assert mixture_viscosity(330.0, 1.0, SAT) == pytest.approx(SAT.mu_v(330.0))


def test_blasius_resistance_properties():
    assert blasius_resistance(0.0, 1000.0, 1e-3, 0.003) == 0.0
    r = blasius_resistance(np.array([-10.0, 10.0, 20.0]), 1000.0, 1e-3, 0.003)
    assert r[0] == r[1] > 0
    assert r[2] / r[1] == pytest.approx(1.68179283050742908606, rel=1e-12)
    with pytest.raises(DomainError):
        blasius_resistance(1.0, 1000.0, 1e-3, 0.0)


def test_shah_baseline():
    assert shah_baseline_h(100.0, 0.0, 0.1) == pytest.approx(100.0)
    assert shah_baseline_h(100.0, 1.0, 0.1) == pytest.approx(0.0, abs=1e-12)
    x = np.linspace(0.01, 0.9, 200)
    assert np.all(np.diff(shah_baseline_h(100.0, x, 0.1)) > 0)
    with pytest.raises(DomainError):
        shah_baseline_h(100.0, 0.5, 1.0)


@pytest.mark.parametrize("mutate, message", [
    (lambda t: t.__setitem__((1, 0), t[0, 0]), "strictly increasing"),
    (lambda t: t.__setitem__((slice(None), 2), t[:, 1] * 2), "rho_L > rho_V"),
    (lambda t: t.__setitem__((slice(None), 4), t[:, 3] - 1.0), "latent heat"),
    (lambda t: t.__setitem__((slice(None), 5), t[::-1, 5].copy()), "saturation pressure"),
])
def test_table_validation(mutate, message):
    table = SAT.table.copy()
    mutate(table)
    with pytest.raises(ValueError, match=message):
        SaturationModel(table)
