import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czlemma.badset import RegionMask, bad_set, gradient_power, maximal_function, weak_type_ratio
from czlemma.corpus import generate
from czlemma.errors import ParameterError
from czlemma.grid import GridSpec, ScalarField, gradient, lp_norm

from conftest import interval_mask


def brute_maximal_1d(u):
    """Max average over every dyadic interval containing each cell, by enumeration."""
    cells = len(u)
    out = np.zeros(cells)
    size = 1
    while size <= cells:
        for start in range(0, cells, size):
            avg = u[start:start + size].mean()
            out[start:start + size] = np.maximum(out[start:start + size], avg)
        size *= 2
    return out


def brute_maximal_nd(u):
    n, cells = u.ndim, u.shape[0]
    out = np.zeros(u.shape)
    size = 1
    while size <= cells:
        for idx in np.ndindex(*(cells // size,) * n):
            sl = tuple(slice(j * size, (j + 1) * size) for j in idx)
            out[sl] = np.maximum(out[sl], u[sl].mean())
        size *= 2
    return out


def test_maximal_of_constant():
    g = GridSpec(2, 16)
    u = ScalarField(g, np.full(g.shape, 0.7))
    assert np.all(maximal_function(u).values == 0.7)


def test_maximal_indicator_matches_enumeration():
    g = GridSpec(1, 256)
    u = interval_mask(256, 0.25, 0.5).astype(float)
    mu = maximal_function(ScalarField(g, u)).values
    oracle = brute_maximal_1d(u)
    assert np.array_equal(mu, oracle)
    # at x = 3/4 the best dyadic interval is the whole box: mass 1/4
    cell = int(0.75 * 256)
    assert mu[cell] == pytest.approx(0.25, abs=0)


def test_maximal_single_cell():
    g = GridSpec(1, 64)
    u = np.zeros(64)
    u[17] = 1.0
    mu = maximal_function(ScalarField(g, u)).values
    assert mu[17] == 1.0
    assert np.array_equal(mu, brute_maximal_1d(u))


def test_maximal_2d_matches_enumeration():
    rng = np.random.default_rng(3)
    g = GridSpec(2, 16)
    u = rng.random(g.shape) ** 4
    assert np.allclose(maximal_function(ScalarField(g, u)).values, brute_maximal_nd(u), rtol=0, atol=1e-15)


def test_maximal_rejects_negative():
    g = GridSpec(1, 8)
    with pytest.raises(ParameterError):
        maximal_function(ScalarField(g, -np.ones(8)))


def test_hat_bad_set_matches_oracle():
    f = generate("hat1d", 256)
    omega = bad_set(f, 2.0, 1.0)
    mag = np.abs(gradient(f).values[0])
    oracle = brute_maximal_1d(mag) > 2.0
    assert np.array_equal(omega.mask, oracle)
    # a neighborhood of the support (3/8, 5/8) of the slope
    x = f.grid.axis_centers(0)
    assert omega.mask[(x > 0.38) & (x < 0.62)].all()
    assert not omega.mask[(x < 0.2) | (x > 0.8)].any()


def test_weak_type_ratio_matches_oracle():
    f = generate("hat1d", 256)
    mag = np.abs(gradient(f).values[0])
    oracle = brute_maximal_1d(mag) > 2.0
    expected = oracle.sum() * f.grid.h * 2.0 / (mag.sum() * f.grid.h)
    assert weak_type_ratio(f, 2.0, 1.0) == pytest.approx(expected, rel=1e-14)


def test_affine_and_constant_have_empty_bad_set():
    g = GridSpec(2, 32)
    f = ScalarField.from_function(g, lambda x: 3.0 * x[0] - 4.0 * x[1])
    assert bad_set(f, 10.0, 1.0).is_empty()
    assert bad_set(f, 10.0, 2.0).is_empty()
    assert weak_type_ratio(f, 10.0, 1.0) == 0.0
    c = ScalarField(g, np.full(g.shape, 2.0))
    assert bad_set(c, 1e-9, 3.0).is_empty()


def test_exact_threshold_is_excluded():
    # slope exactly alpha everywhere: strict threshold keeps the bad set empty
    g = GridSpec(1, 64)
    f = ScalarField.from_function(g, lambda x: 2.0 * x[0])
    assert bad_set(f, 2.0, 1.0).is_empty()


@pytest.mark.parametrize("alpha,p", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.5), (np.inf, 1.0), (1.0, np.inf)])
def test_bad_parameters(alpha, p):
    f = generate("hat1d", 64)
    with pytest.raises(ParameterError):
        bad_set(f, alpha, p)


def test_weak_type_scaling_unchanged():
    f = generate("gauss-bump", 64, 2)
    g = ScalarField(f.grid, 2.0 * f.values)
    assert weak_type_ratio(g, 4.0, 2.0) == weak_type_ratio(f, 2.0, 2.0)


def test_rle_round_trip():
    f = generate("two-spikes-2d", 32)
    omega = bad_set(f, 2.0, 1.0)
    back = RegionMask.from_rle(f.grid, omega.rle())
    assert np.array_equal(back.mask, omega.mask)
    assert sum(r for _, r in omega.rle()) == f.grid.cells ** 2


def test_gradient_power_matches_magnitude():
    f = generate("checker-smooth-2d", 32)
    mag, up = gradient_power(f, 3.0)
    assert np.allclose(up, mag ** 3)
    mag2, up2 = gradient_power(f, 2.0)
    assert np.allclose(up2, mag2 ** 2, rtol=1e-14)


# -- properties -------------------------------------------------------------

def random_field(seed, n=1, cells=32):
    rng = np.random.default_rng(seed)
    g = GridSpec(n, cells)
    return ScalarField(g, np.cumsum(rng.normal(size=g.shape), axis=0) / cells)


seeds = st.integers(0, 10_000)
ps = st.sampled_from([1.0, 1.5, 2.0, 3.0])


@settings(max_examples=40, deadline=None)
@given(seeds, ps, st.floats(0.05, 2.0), st.floats(1.01, 3.0))
def test_monotone_in_alpha(seed, p, alpha, factor):
    f = random_field(seed)
    lo = bad_set(f, alpha, p).mask
    hi = bad_set(f, alpha * factor, p).mask
    assert not np.any(hi & ~lo)


@settings(max_examples=40, deadline=None)
@given(seeds, ps, st.floats(0.05, 2.0), st.sampled_from([0.5, 2.0, 4.0, 8.0]))
def test_homogeneity(seed, p, alpha, c):
    # powers of two keep every floating-point step exact
    f = random_field(seed, n=2, cells=16)
    cf = ScalarField(f.grid, c * f.values)
    assert np.array_equal(bad_set(cf, c * alpha, p).mask, bad_set(f, alpha, p).mask)


@settings(max_examples=40, deadline=None)
@given(seeds, ps, st.floats(0.05, 2.0))
def test_good_set_control(seed, p, alpha):
    f = random_field(seed, n=2, cells=16)
    omega = bad_set(f, alpha, p)
    mag = gradient(f).magnitude()
    assert np.all(mag[omega.complement] <= alpha)


@settings(max_examples=30, deadline=None)
@given(seeds, ps)
def test_maximal_dominates(seed, p):
    f = random_field(seed, n=2, cells=16)
    _, up = gradient_power(f, p)
    mu = maximal_function(ScalarField(f.grid, up)).values
    assert np.all(mu >= up)
    assert np.all(np.isfinite(mu))


@settings(max_examples=30, deadline=None)
@given(seeds, ps, st.floats(0.05, 2.0))
def test_weak_type_bound(seed, p, alpha):
    # the dyadic maximal function is weak (1,1) with constant 1
    f = random_field(seed)
    omega = bad_set(f, alpha, p)
    norm_p = lp_norm(gradient(f), p) ** p
    assert omega.measure * alpha ** p <= norm_p * (1 + 1e-12)
