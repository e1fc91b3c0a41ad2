import numpy as np
import pytest

from molitho.beamline import (
    SelectorSpec,
    VelocityDistribution,
    build_velocity_distribution,
    gravity_velocity_at_height,
    knudsen_peak_velocity,
    knudsen_weight,
    selector_transmission_analytic,
    selector_transmission_mc,
)
from molitho.errors import DomainError
from molitho.physics import MoleculeSpec

C60 = MoleculeSpec()
SEL = SelectorSpec()


def test_knudsen_peak():
    assert knudsen_peak_velocity(1070.0, C60) == pytest.approx(192.5, abs=0.1)
    v = np.linspace(150, 240, 90001)
    w = knudsen_weight(1070.0, C60, v)
    assert v[np.argmax(w)] == pytest.approx(knudsen_peak_velocity(1070.0, C60), abs=0.002)


def test_knudsen_ratio_and_scaling():
    v = 150.0
    m = C60.mass_kg
    from molitho.physics import K_B
    ratio = knudsen_weight(1070, C60, v) / knudsen_weight(1070, C60, 2 * v)
    assert ratio == pytest.approx(np.exp(3 * m * v * v / (2 * K_B * 1070)) / 8, rel=1e-12)
    assert knudsen_peak_velocity(2140, C60) == pytest.approx(
        np.sqrt(2) * knudsen_peak_velocity(1070, C60), rel=1e-14)


def test_selector_centre_and_resolution():
    assert SEL.center_velocity == pytest.approx(115.0, abs=0.05)
    assert SEL.resolution == pytest.approx(0.05, abs=0.001)
    assert selector_transmission_analytic(SEL, SEL.center_velocity) == pytest.approx(1.0)


def test_selector_cutoff():
    v_far = SEL.center_velocity * 1.3
    assert selector_transmission_analytic(SEL, v_far) == 0.0
    p, _ = selector_transmission_mc(SEL, v_far, 20_000)
    assert p == 0.0


def test_selector_mc_matches_analytic():
    v = np.linspace(0.9, 1.1, 20) * SEL.center_velocity
    for vi in v:
        p, se = selector_transmission_mc(SEL, vi, 20_000, seed=1)
        assert abs(p - selector_transmission_analytic(SEL, vi)) <= 3 * se + 1e-12


def test_static_selector_matches_slow_limit():
    # a resting helix hides its exit from its entrance: the v0 -> 0 limit of the triangle
    p, _ = selector_transmission_mc(SelectorSpec(spin_rate=0.0), 50.0, 10_000)
    slow = SelectorSpec(spin_rate=1e-6)
    assert p == selector_transmission_analytic(slow, 50.0) == 0.0


def test_distribution_reference():
    dist = build_velocity_distribution(1070.0, C60, SEL)
    assert dist.mean == pytest.approx(115.0, abs=1.0)
    assert dist.fwhm / dist.mean == pytest.approx(0.05, abs=0.005)
    assert dist.w.sum() == pytest.approx(1.0, rel=1e-14)


def test_distribution_grid_refinement():
    d1 = build_velocity_distribution(1070.0, C60, SEL, 61)
    d2 = build_velocity_distribution(1070.0, C60, SEL, 121)
    assert d2.mean == pytest.approx(d1.mean, rel=1e-3)
    assert d2.fwhm == pytest.approx(d1.fwhm, rel=1e-3)


def test_no_selector_is_knudsen():
    dist = build_velocity_distribution(1070.0, C60, SEL, use_selector=False)
    w = knudsen_weight(1070.0, C60, dist.v)
    assert np.allclose(dist.w, w / w.sum(), rtol=1e-12)


def test_narrow_grooves_halve_fwhm():
    narrow = SelectorSpec(groove_width=150.0)
    d1 = build_velocity_distribution(1070.0, C60, SEL, 121)
    d2 = build_velocity_distribution(1070.0, C60, narrow, 121)
    assert d2.fwhm / d1.fwhm == pytest.approx(0.5, abs=0.02)


def test_gravity():
    assert gravity_velocity_at_height(2.35, 20.0) == pytest.approx(36.8, abs=0.05)
    assert gravity_velocity_at_height(2.35, 80.0) == pytest.approx(
        0.5 * gravity_velocity_at_height(2.35, 20.0), rel=1e-14)
    with pytest.raises(DomainError):
        gravity_velocity_at_height(2.35, 0.0)


def test_distribution_invariants():
    with pytest.raises(DomainError):
        VelocityDistribution([1.0, 1.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        VelocityDistribution([1.0, 2.0], [0.0, 0.0])
    d = VelocityDistribution.monochromatic(100.0)
    assert d.sample(np.array([0.1, 0.9])).tolist() == [100.0, 100.0]
