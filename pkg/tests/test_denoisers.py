import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import median_sorted, nlm_direct, random_symmetric_contraction
from redpro import denoisers as dn


def _rand(seed, shape=(12, 12), scale=255.0):
    return np.random.default_rng(seed).uniform(0, scale, shape)


@pytest.mark.parametrize("spec", [dn.nlm_denoiser(5.0), dn.median_denoiser(), dn.gaussian_denoiser(1.2),
                                  dn.box_denoiser(5)])
def test_averaging_kinds_fix_constants(spec):
    c = np.full((10, 11), 93.25)
    assert np.allclose(spec(c), c, atol=1e-12)


def test_median_removes_impulse():
    x = np.full((9, 9), 50.0)
    x[4, 4] = 255.0
    assert np.all(dn.median_denoiser()(x) == 50.0)


def test_median_matches_sort_oracle():
    x = _rand(1, (9, 10))
    assert np.array_equal(dn.median_denoiser(3)(x), median_sorted(x, 3))


def test_nlm_two_region_image():
    x = np.zeros((6, 6))
    x[:, 3:] = 200.0
    x += np.random.default_rng(2).normal(0, 1.0, x.shape)
    out = dn.nlm(x, 2.0, patch_radius=1, search_radius=2)
    ref = nlm_direct(x, 2.0, 1, 2)
    assert np.allclose(out, ref, rtol=1e-12, atol=1e-10)
    # small bandwidth: no mixing across the edge
    assert np.all(out[:, :3] < 10) and np.all(out[:, 3:] > 190)


@pytest.mark.parametrize("seed", range(2))
def test_nlm_matches_direct_oracle(seed):
    x = _rand(seed, (10, 9))
    out = dn.nlm_denoiser(40.0, patch_radius=2, search_radius=3)(x)
    assert np.allclose(out, nlm_direct(x, 40.0, 2, 3), rtol=1e-12, atol=1e-9)


def test_denoisers_are_deterministic():
    x = _rand(3)
    for spec in (dn.nlm_denoiser(10.0), dn.median_denoiser(), dn.gaussian_denoiser(1.0)):
        assert np.array_equal(spec(x), spec(x))
        assert spec(x).shape == x.shape


def test_denoise_scaled():
    x = _rand(4, (8, 8))
    spec = dn.nlm_denoiser(5.0)
    assert np.array_equal(dn.denoise_scaled(spec, x, 5.0), spec(x))
    w, _ = random_symmetric_contraction(64, 3, 0)
    lin = dn.DenoiserSpec("linear_symmetric", 5.0, {"matrix": w})
    assert np.allclose(dn.denoise_scaled(lin, x, 2.0), lin(x), atol=1e-12 * 255)
    c = np.full((8, 8), 17.0)
    assert np.allclose(dn.denoise_scaled(spec, c, 13.0), c, atol=1e-12)


def test_relax_identities():
    x = _rand(5)
    f = dn.gaussian_denoiser(1.0)
    assert np.array_equal(dn.relax(f, 1.0)(x), f(x))
    for a in (0.1, 0.35, 0.9):
        r = dn.evaluate_relaxed(dn.relax(f, a), x)
        lhs = np.linalg.norm(x - r)
        rhs = a * np.linalg.norm(x - f(x))
        assert abs(lhs - rhs) <= 1e-12 * rhs
    box = dn.projection_box(60, 120)
    assert np.allclose(dn.relax(box, 0.5)(x), 0.5 * (x + np.clip(x, 60, 120)))
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            dn.relax(f, bad)


def test_epsilon_adaptive_cases():
    f = dn.projection_box(0, 1)
    x = np.array([[0.5, 1.3]])
    ed = dn.epsilon_adapt(f, 0.5)
    assert np.array_equal(ed(x), x)  # residual 0.3 <= eps
    x2 = np.array([[2.0, 0.5]])  # residual 1.0 = 2 eps
    assert dn.epsilon_adapt(f, 0.5).weight(x2) == 0.5
    assert np.allclose(dn.evaluate_adaptive(dn.epsilon_adapt(f, 0.5), x2), 0.5 * (x2 + f(x2)))


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 50.0))
def test_epsilon_adaptive_residual_shrinks_by_eps(seed, eps):
    x = _rand(seed, (6, 6))
    f = dn.projection_box(80, 160)
    r = np.linalg.norm(x - f(x))
    got = np.linalg.norm(x - dn.epsilon_adapt(f, eps)(x))
    assert got == pytest.approx(max(0.0, r - eps), abs=1e-9)


def test_epsilon_adaptive_fixed_set():
    f = dn.gaussian_denoiser(1.0)
    eps = 40.0
    ed = dn.epsilon_adapt(f, eps)
    for seed in range(20):
        x = _rand(seed, (6, 6), 60.0)
        res = np.linalg.norm(x - f(x))
        fixed = np.allclose(ed(x), x, atol=0, rtol=0)
        assert fixed == (res <= eps)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_projections_firmly_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((5, 5))
    for f in (dn.projection_box(-0.5, 0.7), dn.projection_halfspace(a, 0.3)):
        x, z = rng.standard_normal((2, 5, 5))
        d = f(x) - f(z)
        assert np.vdot(d, d) <= np.vdot(d, x - z) + 1e-12


def test_linear_symmetric_validation_and_fix():
    with pytest.raises(ValueError):
        dn.linear_symmetric(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        dn.linear_symmetric(2 * np.eye(3))
    w, basis = random_symmetric_contraction(16, 2, 1)
    f = dn.linear_symmetric(w)
    x = np.random.default_rng(3).standard_normal((4, 4))
    p = f.fix_projection(x)
    assert np.allclose(f(p), p, atol=1e-12)
    assert np.allclose(p.ravel(), basis @ (basis.T @ x.ravel()), atol=1e-12)


def test_halfspace_projection_geometry():
    a = np.zeros((3, 3))
    a[1, 1] = 2.0
    f = dn.projection_halfspace(a, 1.0)
    x = np.zeros((3, 3))
    x[1, 1] = 3.0
    assert f(x)[1, 1] == pytest.approx(0.5)
    assert np.array_equal(f(-x), -x)


def test_unknown_kind_and_bad_params():
    with pytest.raises(ValueError):
        dn.DenoiserSpec("bm3d")
    with pytest.raises(ValueError):
        dn.DenoiserSpec("nlm", 0.0)
    with pytest.raises(ValueError):
        dn.projection_box(2, 1)
    with pytest.raises(ValueError):
        dn.projection_halfspace(np.zeros(3))
