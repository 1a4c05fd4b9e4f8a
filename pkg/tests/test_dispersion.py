"""Bloch dispersion curves: limits, ordering, scheme behaviour."""

import numpy as np
import pytest

from wavedd.dispersion import DispersionSpec, dispersion_curve, phase_velocity
from wavedd.errors import StructuralError


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("scheme", ["fe", "se"])
def test_continuum_limit(p, scheme):
    assert abs(phase_velocity(p, scheme, 1e4) - 1.0) < 1e-6


def test_p1_consistent_mass_value():
    """P1 consistent mass: c_h/c = sqrt(6(1-cos t)/(2+cos t))/t, t = 2 pi / G."""
    t = 2 * np.pi / 10.0
    expect = np.sqrt(6 * (1 - np.cos(t)) / (2 + np.cos(t))) / t
    assert phase_velocity(1, "fe", 10.0) == pytest.approx(expect, rel=1e-12)


def test_p2_fe_low_dispersion_at_g10():
    assert abs(phase_velocity(2, "fe", 10.0) - 1.0) <= 1e-2


def test_p3_dominates_p2_pointwise():
    for inv_g in np.linspace(0.01, 0.2, 20):
        e2 = abs(phase_velocity(2, "fe", 1.0 / inv_g) - 1.0)
        e3 = abs(phase_velocity(3, "fe", 1.0 / inv_g) - 1.0)
        assert e3 < e2


def test_error_decreases_with_order():
    for G in (4.0, 8.0, 12.0, 20.0):
        errs = [abs(phase_velocity(p, "fe", G) - 1.0) for p in (1, 2, 3)]
        assert errs[0] > errs[1] > errs[2]


def test_lumped_and_consistent_disagree_in_sign():
    # classical: consistent mass leads the wave, lumped mass lags it
    assert phase_velocity(1, "fe", 10.0) > 1.0
    assert phase_velocity(1, "se", 10.0) < 1.0


def test_nyquist_domain_error():
    with pytest.raises(StructuralError):
        phase_velocity(2, "fe", 1.9)
    with pytest.raises(StructuralError):
        DispersionSpec(p=2, scheme="fe", G=1.5)


def test_curve_shape():
    curve = dispersion_curve(DispersionSpec(p=2, scheme="fe", G=2.5), samples=20)
    assert len(curve) == 20
    inv_g = [c[0] for c in curve]
    assert inv_g[0] == pytest.approx(1 / 2.5 / 20)
    assert inv_g[-1] == pytest.approx(1 / 2.5)
    vals = np.array([c[1] for c in curve])
    assert np.all((vals > 0.3) & (vals < 1.7))


def test_spec_validation():
    with pytest.raises(StructuralError):
        DispersionSpec(p=0)
    with pytest.raises(StructuralError):
        DispersionSpec(p=2, scheme="dg")
