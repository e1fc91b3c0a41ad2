import numpy as np
import pytest
from hypothesis import given, strategies as st

from molitho import rng
from molitho.errors import NumericalError
from molitho.quadrature import integrate, phase_breakpoints


def test_polynomial_exact():
    val, info = integrate(lambda x: x ** 5 - 2 * x, [0.0, 1.0, 2.0])
    assert val == pytest.approx(2 ** 6 / 6 - 4, rel=1e-14)
    assert info["subdivisions"] == 0


def test_fast_oscillation_with_phase_partition():
    k = 2000.0
    phase = lambda x: k * x * x
    bp = phase_breakpoints(phase, 0.0, 3.0)
    val, _ = integrate(lambda x: np.exp(1j * k * x * x), bp, rtol=1e-10)
    from scipy.special import fresnel
    c = np.sqrt(2 * k / np.pi)
    s, cc = fresnel(3.0 * c)
    assert val == pytest.approx((cc + 1j * s) / c, rel=1e-9)


def test_vector_valued():
    val, _ = integrate(lambda x: np.vstack((np.sin(x), np.cos(x))), np.linspace(0, np.pi, 5))
    assert np.allclose(val, [2.0, 0.0], atol=1e-13)


def test_panic_on_subdivision_cap():
    with pytest.raises(NumericalError) as exc:
        integrate(lambda x: np.sign(x - 0.3) * np.abs(x - 0.3) ** -0.9, [0.0, 1.0],
                  rtol=1e-14, max_subdivisions=50)
    assert "subdivisions" in exc.value.diagnostics


def test_rng_chunking_is_invisible():
    whole = rng.uniforms(7, "tag", 0, 1000)
    parts = np.concatenate([rng.uniforms(7, "tag", s, 100) for s in range(0, 1000, 100)])
    assert np.array_equal(whole, parts)


def test_rng_streams_differ_by_tag_seed_attempt():
    a = rng.uniforms(1, "x", 0, 10)
    assert not np.array_equal(a, rng.uniforms(1, "y", 0, 10))
    assert not np.array_equal(a, rng.uniforms(2, "x", 0, 10))
    assert not np.array_equal(a, rng.uniforms(1, "x", 0, 10, attempt=1))


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 40))
def test_rng_open_unit_interval(seed, start):
    u = rng.uniforms(seed, "p", start, 4)
    assert np.all((u > 0) & (u < 1))


def test_rng_normals_moments():
    z = rng.normals(3, "n", 0, 50_000).ravel()
    assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02
