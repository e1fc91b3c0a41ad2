import numpy as np
import pytest

from molitho.analysis import (
    BinaryMap,
    Profile,
    bin_image,
    column_profile,
    detect_molecules,
    estimate_period_orientation,
    fit_fringe,
    lm_fit,
    significance,
    sine_jacobian,
    sine_model,
    smooth_profile,
)
from molitho.deposition import DepositionParams, HeightMap, MoleculeList, render_stm, sample_deposit
from molitho.errors import AnalysisError, DomainError
from molitho.quantum import FringeSpectrum

D = 257.40
PX = np.sqrt(2)


def flat(value=0.0, n=20):
    return HeightMap(np.full((n, n), value), 1.4)


def spike(h, where=(10, 12), base=0.0):
    hm = flat(base)
    hm.z[where] += h
    return hm


def profile_of(y, x=None):
    x = np.arange(y.size) * PX if x is None else x
    return Profile(x, y, np.maximum(y, 1.0))


def fringe_map(theta_deg=0.0, d=D, n=1000, p0=0.05, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:n] * PX
    t = np.radians(theta_deg)
    u = xx * np.cos(t) + yy * np.sin(t)
    p = p0 * (1 + np.cos(2 * np.pi * u / d))
    return BinaryMap(rng.random((n, n)) < p, PX)


class TestDetection:
    @pytest.mark.parametrize("mode", ["ring", "block"])
    @pytest.mark.parametrize("value", [0.0, -3.0, 12.5])
    def test_flat_has_no_detections(self, mode, value):
        assert detect_molecules(flat(value), neighbor_mode=mode).count == 0

    @pytest.mark.parametrize("mode", ["ring", "block"])
    def test_window(self, mode):
        bm = detect_molecules(spike(0.7), neighbor_mode=mode)
        assert bm.count == 1 and bm.bits[10, 12] == 1
        assert detect_molecules(spike(1.2), neighbor_mode=mode).count == 0
        assert detect_molecules(spike(0.3), neighbor_mode=mode).count == 0

    def test_rendered_bump(self):
        ml = MoleculeList([[30.1, 28.7]], 60.0, 60.0)
        hm = render_stm(ml, 1.4, seed=3)
        bm = detect_molecules(hm)
        assert bm.count == 1

    def test_offset_invariance(self):
        rng = np.random.default_rng(1)
        z = 0.3 * rng.standard_normal((40, 40))
        z[20, 20] += 0.7
        a = detect_molecules(HeightMap(z, 1.4))
        b = detect_molecules(HeightMap(z + 10.0, 1.4))
        assert np.array_equal(a.bits, b.bits)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(2)
        z = 0.4 * rng.standard_normal((60, 60))
        a = detect_molecules(HeightMap(z, 1.4)).bits
        b = detect_molecules(HeightMap(np.roll(z, (5, 7), (0, 1)), 1.4)).bits
        inner = (slice(15, 45), slice(15, 45))
        assert np.array_equal(np.roll(a, (5, 7), (0, 1))[inner], b[inner])

    def test_border_is_zero(self):
        bm = detect_molecules(spike(0.7, (1, 1)))
        assert bm.count == 0

    def test_errors(self):
        with pytest.raises(AnalysisError):
            detect_molecules(HeightMap(np.zeros((5, 5)), 1.4))
        with pytest.raises(DomainError):
            detect_molecules(flat(), neighbor_mode="disk")


class TestBinningAndProfiles:
    def test_bin_examples(self):
        bm = BinaryMap(np.ones((10, 10)), 1.0)
        assert np.array_equal(bin_image(bm, 5), np.full((2, 2), 25))
        rng = np.random.default_rng(0)
        bits = rng.random((13, 17)) < 0.3
        bm = BinaryMap(bits, 1.0)
        assert np.array_equal(bin_image(bm, 1), bm.bits)
        assert bin_image(bm, 5).sum() == bits[:10, :15].sum()

    def test_column_profile(self):
        bits = np.zeros((9, 12))
        bits[4, 7] = 1
        p = column_profile(BinaryMap(bits, 2.0))
        assert np.array_equal(p.counts, np.eye(12)[7])
        assert np.array_equal(p.weights, np.ones(12))
        assert p.x[0] == 1.0
        bits[:, 3] = 1
        p = column_profile(BinaryMap(bits, 2.0))
        assert p.counts[3] == 9 and p.counts.sum() == bits.sum()

    def test_smoothing(self):
        rng = np.random.default_rng(3)
        c = rng.poisson(5, 200).astype(float)
        p = profile_of(c)
        same = smooth_profile(p, 1)
        assert np.array_equal(same.counts, c) and np.array_equal(same.x, p.x)
        const = smooth_profile(profile_of(np.full(50, 3.0)), 20)
        assert np.allclose(const.counts, 60.0)
        s = smooth_profile(p, 20)
        # every interior column is counted exactly window times
        assert s.counts[10:-10].sum() == pytest.approx(
            sum(c[i - 10:i + 10].sum() for i in range(10, 190)))
        assert np.all(s.weights >= s.counts)

    def test_stride_gives_disjoint_bins(self):
        c = np.arange(100, dtype=float)
        s = smooth_profile(profile_of(c), 20, stride=20)
        assert np.array_equal(s.counts, [c[i - 10:i + 10].sum() for i in range(10, 91, 20)])

    def test_smoothing_errors(self):
        with pytest.raises(DomainError):
            smooth_profile(profile_of(np.ones(10)), 10)


class TestLM:
    truth = np.array([10.0, 28.0, 0.3, 257.4])
    # three periods, the shortest span fit_fringe accepts
    x = np.linspace(0, 3 * 257.4, 1000)

    def test_exact_recovery(self):
        y = sine_model(self.x, self.truth)
        for sign in (1, -1):
            res = lm_fit(sine_model, self.x, y, np.maximum(y, 1), self.truth * (1 + sign * 0.1),
                         sine_jacobian)
            assert np.allclose(res.theta, self.truth, rtol=1e-8, atol=0)

    def test_linear_model_matches_normal_equations(self):
        rng = np.random.default_rng(4)
        x = np.linspace(-1, 1, 40)
        var = rng.uniform(0.5, 2.0, x.size)
        y = 2.0 - 3.0 * x + rng.normal(0, 1, x.size) * np.sqrt(var)
        X = np.column_stack((np.ones_like(x), x))
        res = lm_fit(lambda xx, t: t[0] + t[1] * xx, x, y, var, [0.0, 0.0], lambda xx, t: X)
        W = np.diag(1 / var)
        exact = np.linalg.solve(X.T @ W @ X, X.T @ W @ y)
        assert np.allclose(res.theta, exact, rtol=1e-12, atol=1e-12)
        assert np.allclose(res.covariance, np.linalg.inv(X.T @ W @ X), rtol=1e-9)

    def test_descent_and_covariance(self):
        rng = np.random.default_rng(5)
        y = rng.poisson(sine_model(self.x, self.truth)).astype(float)
        w = np.maximum(y, 1)
        theta0 = self.truth * 1.05
        res = lm_fit(sine_model, self.x, y, w, theta0)
        chi0 = np.sum((y - sine_model(self.x, theta0)) ** 2 / w)
        assert res.chi2 <= chi0
        assert np.all(np.diag(res.covariance) >= 0)
        assert np.allclose(res.covariance, res.covariance.T)

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            lm_fit(sine_model, self.x[:4], self.x[:4], np.ones(4), self.truth)


class TestFringeFit:
    x = np.arange(2000) * PX

    def test_pure_sinusoid(self):
        y = 3.0 + np.sin(2 * np.pi * self.x / D + 1.1)
        fit = fit_fringe(profile_of(y, self.x), 250.0)
        assert abs(fit.V - 1 / 3) < 1e-6
        assert fit.d_fit == pytest.approx(D, rel=1e-9)
        assert fit.phi0 == pytest.approx(1.1, abs=1e-8)

    def noisy(self, seed=6):
        rng = np.random.default_rng(seed)
        return rng.poisson(8 * (1 + 0.4 * np.sin(2 * np.pi * self.x / D + 2.0))).astype(float)

    def test_scale_invariance(self):
        y = self.noisy()
        a = fit_fringe(profile_of(y, self.x), 260.0)
        b = fit_fringe(Profile(self.x, 7.0 * y, 7.0 * np.maximum(y, 1)), 260.0)
        assert b.V == pytest.approx(a.V, rel=1e-7)

    def test_translation_shifts_phase_only(self):
        y = self.noisy()
        delta = 37.3
        a = fit_fringe(profile_of(y, self.x), 260.0)
        b = fit_fringe(profile_of(y, self.x + delta), 260.0)
        dphi = np.angle(np.exp(1j * (b.phi0 - a.phi0 + 2 * np.pi * delta / a.d_fit)))
        assert abs(dphi) < 1e-6
        assert b.V == pytest.approx(a.V, rel=1e-6)
        assert b.d_fit == pytest.approx(a.d_fit, rel=1e-6)

    def test_negative_amplitude_flipped(self):
        y = 3.0 - np.sin(2 * np.pi * self.x / D)
        fit = fit_fringe(profile_of(y, self.x), D)
        assert fit.A > 0 and fit.phi0 == pytest.approx(np.pi, abs=1e-8)

    def test_flat_deposit(self):
        fs = FringeSpectrum(D, [0, 1.0, 0])
        ml = sample_deposit(fs, DepositionParams(seed=3))
        hm = render_stm(ml, PX)
        prof = smooth_profile(column_profile(detect_molecules(hm)), 20, 20)
        fit = fit_fringe(prof, D)
        assert fit.V < 3 * fit.sigma_V

    def test_short_profile(self):
        with pytest.raises(AnalysisError):
            fit_fringe(profile_of(np.ones(100)), D)


class TestPeriodOrientation:
    def test_vertical_fringes(self):
        d, theta = estimate_period_orientation(fringe_map())
        assert d == pytest.approx(D, rel=0.01)
        assert abs(np.degrees(theta)) < 1.0

    def test_rotation(self):
        d, theta = estimate_period_orientation(fringe_map(10.0))
        assert d == pytest.approx(D, rel=0.01)
        assert np.degrees(theta) == pytest.approx(10.0, abs=1.0)

    def test_no_structure(self):
        # one detection per 5x5 box: the binned grid is constant
        bits = np.zeros((1000, 1000))
        bits[::5, ::5] = 1
        bm = BinaryMap(bits, PX)
        with pytest.raises(AnalysisError, match="no periodic structure"):
            estimate_period_orientation(bm)

    def test_too_few(self):
        with pytest.raises(AnalysisError):
            estimate_period_orientation(BinaryMap(np.zeros((100, 100)), PX))


class TestSignificance:
    def test_examples(self):
        assert significance(0.36, 0.03, 0.01) == pytest.approx(11.67, abs=0.01)
        assert significance(0.2, 0.05, 0.2) == 0.0
        assert significance(0.36, 0.06, 0.01) == pytest.approx(0.5 * significance(0.36, 0.03,
                                                                                  0.01))
        with pytest.raises(DomainError):
            significance(0.3, 0.0, 0.01)


def cosine(v):
    return FringeSpectrum(D, [0.5 * v, 1.0, 0.5 * v])


def analyse(hm):
    prof = smooth_profile(column_profile(detect_molecules(hm)), 20, 20)
    return fit_fringe(prof, 260.0)


def test_end_to_end_recovers_visibility():
    pulls = []
    for seed in range(5):
        ml = sample_deposit(cosine(0.6), DepositionParams(seed=seed))
        fit = analyse(render_stm(ml, PX, seed=seed))
        pulls.append((fit.V - 0.6) / fit.sigma_V)
    assert np.all(np.abs(pulls) < 3), pulls


def test_fit_is_deterministic():
    ml = sample_deposit(cosine(0.35), DepositionParams(seed=8))
    hm = render_stm(ml, PX, noise_rms=0.05, seed=8)
    a, b = analyse(hm), analyse(HeightMap(hm.z.copy(), hm.px_size))
    for f in ("A", "B", "phi0", "d_fit", "V", "sigma_V", "chi2"):
        assert np.float64(getattr(a, f)).tobytes() == np.float64(getattr(b, f)).tobytes()
    assert a.covariance.tobytes() == b.covariance.tobytes()


def test_sigma_matches_bootstrap():
    ml = sample_deposit(cosine(0.35), DepositionParams(seed=12))
    px = PX
    fit = analyse(render_stm(ml, px))
    # each isolated molecule becomes one detected pixel, so resample columns directly
    cols = np.rint((ml.positions[:, 0] - 0.5 * px) / px).astype(int)
    nx = int(round(ml.field_w / px))
    x = (np.arange(nx) + 0.5) * px
    rng = np.random.default_rng(0)
    vs = []
    for _ in range(200):
        pick = rng.integers(0, cols.size, cols.size)
        counts = np.bincount(cols[pick], minlength=nx).astype(float)
        prof = smooth_profile(Profile(x, counts, np.maximum(counts, 1)), 20, 20)
        vs.append(fit_fringe(prof, 260.0).V)
    half = 0.5 * (np.percentile(vs, 84) - np.percentile(vs, 16))
    assert 1 / 1.5 < fit.sigma_V / half < 1.5
