import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdrop2d.grid import integrate, make_grid
from qdrop2d.potential import (ModelParams, PotentialFields, build_pt_hog, check_pt, exact_droplet,
                               exact_params, exact_phase)


def test_origin_values(g32):
    f = build_pt_hog(g32, ModelParams(v0=-1 / 16, v1=1, w0=1))
    i, j = g32.nx // 2, g32.ny // 2
    assert g32.x[i] == 0 and g32.y[j] == 0
    assert f.v[i, j] == pytest.approx(-1 / 8, abs=1e-15)
    assert f.w[i, j] == 0


def test_limits(g32):
    X, Y = g32.mesh()
    f = build_pt_hog(g32, ModelParams(w0=0.0))
    assert not np.any(f.w)
    f = build_pt_hog(g32, ModelParams(v0=0.0, v1=0.0, w0=0.0))
    assert np.array_equal(f.v, X**2 + Y**2)


def test_check_pt_detects_defects(g32):
    f = build_pt_hog(g32, ModelParams(v0=-1 / 16, v1=1, w0=1))
    assert f.complex.dtype == complex
    assert check_pt(g32, f).ok()
    bad_w = check_pt(g32, PotentialFields(f.v, np.abs(f.w)))
    assert bad_w.w_antisymmetry > 0.1
    X, _ = g32.mesh()
    bad_v = check_pt(g32, PotentialFields(f.v + 1e-3 * X, f.w))
    assert bad_v.v_symmetry > 1e-3


@settings(max_examples=40, deadline=None)
@given(v0=st.floats(-4, 6), v1=st.floats(-2, 4), w0=st.floats(-7, 7))
def test_pt_symmetry_property(v0, v1, w0):
    g = make_grid(16, 16, 5.0, 5.0)
    f = build_pt_hog(g, ModelParams(v0=v0, v1=v1, w0=w0))
    rep = check_pt(g, f)
    assert rep.v_symmetry < 1e-12 * max(1.0, np.abs(f.v).max())
    assert rep.w_antisymmetry < 1e-12 * max(1.0, np.abs(f.w).max())


def test_exact_droplet_limits(g128):
    X, Y = g128.mesh()
    assert np.allclose(exact_droplet(g128, 0.0), np.exp(-(X**2 + Y**2) / 2), atol=1e-15, rtol=0)
    for w0 in (0.0, 1.0, 3.0):
        assert abs(integrate(g128, np.abs(exact_droplet(g128, w0)) ** 2) - math.pi) < 1e-10
    # far corner: erf -> 1 on both axes
    assert exact_phase(g128, 1.0)[-1, -1] == pytest.approx(-math.sqrt(math.pi) / 4, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5))
def test_exact_modulus_independent_of_w0(w0):
    g = make_grid(16, 16, 4.0, 4.0)
    assert np.max(np.abs(np.abs(exact_droplet(g, w0)) - np.abs(exact_droplet(g, 0.0)))) < 1e-14


def test_exact_params():
    p = exact_params(1, 1)
    assert (p.v0, p.v1, p.mu, p.omega) == (-1 / 16, 1, 2, 0)
    assert exact_params(1, 0).v0 == 0
    assert exact_params(2, 4).v0 == -1
    with pytest.raises(ValueError):
        exact_params(0, 1)


def test_params_reject_non_finite():
    with pytest.raises(ValueError):
        ModelParams(mu=float("nan"))
