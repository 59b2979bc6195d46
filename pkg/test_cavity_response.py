import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from sideband_tomo.config import settings
from sideband_tomo.schemas import CavityParams
from sideband_tomo.services import cavity_response as cr


def test_reflection_examples():
    assert cr.reflection(0.5, 0.0) == pytest.approx(-np.sqrt(0.5))
    assert abs(cr.reflection(1.0, 0.7)) == pytest.approx(1.0)
    assert cr.reflection(0.3, 1e6) == pytest.approx(1.0, abs=1e-5)
    out = cr.reflection(0.5, [0.0, 1.0])
    assert out.shape == (2,)


def test_reflection_rejects_bad_matching():
    with pytest.raises(ValueError) as e:
        cr.reflection(1.5, 0.0)
    assert e.value.args[0] == "d_out_of_range"


def test_transmission_complements_reflection():
    assert cr.transmission(0.36, 0.0) == pytest.approx(0.8)
    assert cr.transmission(1.0, 2.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("d", [0.0, 0.5, 0.85, 1.0])
def test_transmission_is_exact_over_grid(d):
    grid = np.linspace(-10, 10, 401)
    t = cr.transmission(d, grid)
    np.testing.assert_allclose(t**2 + np.abs(cr.reflection(d, grid)) ** 2, 1.0, atol=1e-14)
    if d == 1.0:
        assert np.all(t == 0)


@pytest.mark.parametrize("delta", [-3.0, -0.4, 0.0, 0.9, 2.5])
def test_lossless_cavity_has_unit_gain(delta):
    c = cr.noise_coefficients(CavityParams(d=1.0, omega_ratio=2.0), delta)
    assert c.c_alpha + c.c_beta == pytest.approx(1.0)
    assert c.c_v == pytest.approx(0.0, abs=1e-12)
    assert c.c_delta == pytest.approx(0.0, abs=1e-12)


def test_far_detuned_cavity_is_plain_amplitude_detection():
    c = cr.noise_coefficients(CavityParams(d=0.5, omega_ratio=3.0), 1e6)
    assert c.c_alpha == pytest.approx(1.0, abs=1e-5)
    assert c.c_beta == pytest.approx(0.0, abs=1e-5)
    assert c.c_gamma == pytest.approx(0.0, abs=1e-5)
    assert c.c_delta == pytest.approx(0.0, abs=1e-5)


def test_vacuum_coefficient_matches_transmitted_gains():
    p = CavityParams(d=0.6, omega_ratio=1.7)
    for delta in (-2.0, -0.3, 0.8):
        t_plus, t_minus = cr.transmission_coeffs(p, delta)
        assert abs(t_plus) ** 2 + abs(t_minus) ** 2 == pytest.approx(cr.noise_coefficients(p, delta).c_v)


def test_parity_in_detuning():
    p = CavityParams(d=0.7, omega_ratio=2.2)
    for delta in (0.3, 1.1, 2.9):
        plus = cr.noise_coefficients(p, delta)
        minus = cr.noise_coefficients(p, -delta)
        assert minus.c_delta == pytest.approx(-plus.c_delta, abs=1e-12)
        assert minus.c_alpha == pytest.approx(plus.c_alpha, abs=1e-12)
        assert minus.c_beta == pytest.approx(plus.c_beta, abs=1e-12)
        assert minus.c_gamma == pytest.approx(-plus.c_gamma, abs=1e-12)
        assert minus.c_v == pytest.approx(plus.c_v, abs=1e-12)


def test_imbalance_sensitivity_grows_with_loss():
    deltas = np.linspace(-10, 10, 401) + 1e-3
    lossy = cr.coefficient_curves(CavityParams(d=0.0, omega_ratio=5.0), deltas)
    matched = cr.coefficient_curves(CavityParams(d=0.9, omega_ratio=5.0), deltas)
    assert lossy["c_delta"].abs().max() > matched["c_delta"].abs().max()
    assert lossy["c_delta"].abs().max() > 0.3


def test_coefficient_curves_match_pointwise(experiment_cavity):
    deltas = [-1.5, 0.0, 0.4]
    frame = cr.coefficient_curves(experiment_cavity, deltas)
    assert list(frame.columns) == cr.COEFFICIENT_COLUMNS
    for _, row in frame.iterrows():
        c = cr.noise_coefficients(experiment_cavity, row["delta"])
        np.testing.assert_allclose(
            row[["c_alpha", "c_beta", "c_gamma", "c_delta", "c_v"]].to_numpy(dtype=float),
            [c.c_alpha, c.c_beta, c.c_gamma, c.c_delta, c.c_v],
            atol=1e-14,
        )


@hsettings(max_examples=100, deadline=None)
@given(
    d=st.floats(min_value=0.0, max_value=1.0),
    omega=st.floats(min_value=0.1, max_value=10.0),
    delta=st.floats(min_value=-20.0, max_value=20.0).filter(lambda x: abs(x) > 1e-6),
)
def test_noise_coefficients_are_a_valid_set(d, omega, delta):
    # construction runs the non-negativity, sum and Cauchy-Schwarz checks
    c = cr.noise_coefficients(CavityParams(d=d, omega_ratio=omega), delta)
    assert -1e-12 <= c.c_v <= 1


def test_identical_cavities_cross_coefficients(experiment_cavity):
    c = cr.noise_coefficients(experiment_cavity, 0.6)
    tc = cr.cross_coefficients(experiment_cavity, 0.6, experiment_cavity, 0.6)
    assert tc.c_eta == pytest.approx(0.0, abs=1e-15)
    assert tc.c_tau == pytest.approx(0.0, abs=1e-15)
    assert tc.c_zeta == pytest.approx(tc.c_xi)
    assert tc.c_lambda == pytest.approx(-tc.c_kappa)
    assert tc.c_mu == pytest.approx(2 * c.c_alpha)
    assert tc.c_nu == pytest.approx(2 * c.c_beta)


def test_cross_coefficients_for_hd_gains():
    tc = cr.coefficients_from_gains((1.0, 0.0), (0.0, 1.0))
    assert tc.c_xi == 2
    assert tc.c_mu == tc.c_nu == tc.c_zeta == 0


def test_hd_limit_phase_on_resonance():
    assert cr.hd_limit_phase(CavityParams(d=1.0, omega_ratio=3.0), 0.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("delta", [-2.0, -0.5, 0.25, 1.3])
def test_lossless_gains_are_a_rotated_hd(delta):
    p = CavityParams(d=1.0, omega_ratio=2.5)
    phi = cr.hd_limit_phase(p, delta)
    sigma = cr.hd_limit_frame(p, delta)
    g_plus, g_minus = cr.sideband_coeffs(p, delta)
    assert g_plus == pytest.approx(np.exp(1j * sigma) * np.cos(phi), abs=1e-12)
    assert g_minus == pytest.approx(np.exp(1j * sigma) * np.sin(phi), abs=1e-12)


def test_hd_limit_needs_lossless_cavity(experiment_cavity):
    with pytest.raises(ValueError) as e:
        cr.hd_limit_phase(experiment_cavity, 0.3)
    assert e.value.args[0] == "hd_limit_requires_lossless"


def test_impedance_matched_resonance_is_singular():
    with pytest.raises(ValueError) as e:
        cr.sideband_coeffs(CavityParams(d=0.0, omega_ratio=2.0), 0.0)
    assert e.value.args[0] == "singular_reflection"


def test_detuning_grid_nudges_singular_point():
    grid = cr.detuning_grid(-1.0, 1.0, 3, d=0.0)
    np.testing.assert_array_equal(grid, [-1.0, settings.SINGULAR_OFFSET, 1.0])
    np.testing.assert_array_equal(cr.detuning_grid(-1.0, 1.0, 3, d=0.5), [-1.0, 0.0, 1.0])
    cr.noise_coefficients(CavityParams(d=0.0, omega_ratio=2.0), grid[1])


@pytest.mark.parametrize("args", [(1.0, -1.0, 5), (-1.0, 1.0, 1)])
def test_detuning_grid_rejects_bad_ranges(args):
    with pytest.raises(ValueError) as e:
        cr.detuning_grid(*args)
    assert e.value.args[0] == "invalid_grid"
