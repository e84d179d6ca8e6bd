import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdrop2d.grid import (EdgeDecayWarning, check_edge_decay, fft2, gradient, integrate, laplacian,
                          make_grid)
from qdrop2d.special import erf

# erf reference values, 20 significant digits (mpmath, 30-digit working precision)
ERF_TABLE = [
    (0.0, 0.0),
    (1e-08, 1.1283791670955125599e-8),
    (0.1, 0.1124629160182848984),
    (0.5, 0.52049987781304653768),
    (1.0, 0.84270079294971486934),
    (1.5, 0.96610514647531072707),
    (2.0, 0.99532226501895273416),
    (2.5, 0.99959304798255504106),
    (3.0, 0.99997790950300141456),
    (4.0, 0.99999998458274209972),
    (5.5, 0.99999999999999264215),
    (-0.7, -0.67780119383741844228),
    (-3.2, -0.99999397423884823791),
    (16.0, 1.0),
]


def test_make_grid_spacing_and_wavenumbers():
    g = make_grid(128, 128, 8.0, 8.0)
    assert g.dx == 0.125
    assert np.max(np.abs(g.kx)) == pytest.approx(8 * math.pi, rel=1e-15)
    g = make_grid(16, 16, 1.0, 1.0)
    k = np.sort(g.kx)
    assert np.allclose(k, math.pi * np.arange(-8, 8))
    assert 0.0 in g.kx


@pytest.mark.parametrize("args", [(17, 128, 8, 8), (128, 12, 8, 8), (32, 32, 0, 8), (32, 32, 8, -1)])
def test_make_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_laplacian_fourier_mode(g64):
    X, _ = g64.mesh()
    f = np.exp(1j * math.pi * X / g64.lx)
    assert np.max(np.abs(laplacian(g64, f) + (math.pi / g64.lx) ** 2 * f)) < 1e-12


def test_laplacian_gaussian(g128):
    X, Y = g128.mesh()
    r2 = X**2 + Y**2
    f = np.exp(-r2 / 2)
    assert np.max(np.abs(laplacian(g128, f) - (r2 - 2) * f)) < 1e-10


def test_derivatives_of_constant_vanish(g32):
    c = np.full(g32.shape, 2.5 + 1j)
    assert np.max(np.abs(laplacian(g32, c))) < 1e-12
    gx, gy = gradient(g32, c)
    assert np.max(np.abs(gx)) < 1e-12 and np.max(np.abs(gy)) < 1e-12


def test_gradient(g128):
    X, Y = g128.mesh()
    f = np.exp(1j * math.pi * Y / g128.ly)
    assert np.max(np.abs(gradient(g128, f)[1] - 1j * math.pi / g128.ly * f)) < 1e-12
    f = np.exp(-(X**2 + Y**2) / 2)
    assert np.max(np.abs(gradient(g128, f)[0] + X * f)) < 1e-10


def test_laplacian_is_divergence_of_gradient(g64):
    X, Y = g64.mesh()
    f = np.exp(-(X**2 + 2 * Y**2) / 2 + 0.3j * X * Y)
    gx, gy = gradient(g64, f)
    div = gradient(g64, gx)[0] + gradient(g64, gy)[1]
    assert np.max(np.abs(div - laplacian(g64, f))) < 1e-11


def test_integrals(g128):
    X, Y = g128.mesh()
    g = np.exp(-(X**2 + Y**2))
    assert abs(integrate(g128, g) - math.pi) < 1e-10
    assert abs(integrate(g128, g * X**2) - math.pi / 2) < 1e-9
    assert integrate(g128, np.zeros(g128.shape)) == 0.0
    with pytest.raises(TypeError):
        integrate(g128, g + 0j)


def test_edge_decay_warning(g32):
    with pytest.warns(EdgeDecayWarning):
        check_edge_decay(g32, np.ones(g32.shape))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_parseval(seed):
    g = make_grid(32, 16, 3.0, 2.0)
    r = np.random.default_rng(seed)
    f = r.standard_normal(g.shape) + 1j * r.standard_normal(g.shape)
    lhs = np.sum(np.abs(f) ** 2) * g.dA
    rhs = np.sum(np.abs(fft2(f)) ** 2) * g.dA / g.size
    assert abs(lhs - rhs) <= 1e-12 * lhs


@pytest.mark.parametrize("x,ref", ERF_TABLE)
def test_erf_reference(x, ref):
    assert abs(float(erf(np.float64(x))) - ref) <= 1e-14 * max(1.0, abs(ref))


@settings(max_examples=200, deadline=None)
@given(st.floats(-16, 16, allow_nan=False))
def test_erf_odd_and_bounded(x):
    v = float(erf(np.float64(x)))
    assert -1.0 <= v <= 1.0
    assert float(erf(np.float64(-x))) == -v


def test_erf_matches_math_module():
    # independent implementation from the C library
    xs = np.linspace(-16, 16, 4001)
    ours = erf(xs)
    ref = np.array([math.erf(x) for x in xs])
    assert np.max(np.abs(ours - ref)) < 1e-14
