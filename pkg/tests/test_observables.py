import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdrop2d.grid import make_grid
from qdrop2d.observables import (ContourError, assign_norms, asymmetry, contour_components,
                                 continuity_residual, diagnostics, norm, poynting, quasi_energy,
                                 winding)
from qdrop2d.potential import ModelParams, PotentialFields, build_pt_hog, exact_droplet, exact_params
from qdrop2d.stationary import newton_cg_solve

G40 = make_grid(40, 40, 6.0, 6.0)


def test_norm(g128):
    phi = exact_droplet(g128, 1.0)
    assert abs(norm(g128, phi) - math.pi) < 1e-10
    assert abs(norm(g128, 2 * phi) - 4 * math.pi) < 1e-9
    assert norm(g128, np.zeros(g128.shape)) == 0


def test_quasi_energy_of_harmonic_gaussian(g128):
    X, Y = g128.mesh()
    fields = PotentialFields(X**2 + Y**2, np.zeros(g128.shape))
    p = ModelParams(sigma=0.0, w0=0.0, v0=0.0, v1=0.0)
    e = quasi_energy(g128, np.exp(-(X**2 + Y**2) / 2) + 0j, fields, p)
    assert abs(e - 2 * math.pi) < 1e-10
    assert quasi_energy(g128, np.zeros(g128.shape, complex), fields, p) == 0


def test_quasi_energy_real_for_even_density(g128):
    p = exact_params(1.0, 1.0)
    e = quasi_energy(g128, exact_droplet(g128, 1.0), build_pt_hog(g128, p), p)
    assert abs(e.imag) < 1e-10


def test_poynting(g128):
    X, Y = g128.mesh()
    sx, sy = poynting(g128, np.exp(-(X**2 + Y**2) / 2) + 0j)
    assert np.max(np.abs(sx)) < 1e-14 and np.max(np.abs(sy)) < 1e-14
    i = g128.nx // 2
    sx, sy = poynting(g128, exact_droplet(g128, 1.0))
    # d(theta)/dx at the origin is -(sqrt(pi) W0 / 8) * 2/sqrt(pi) = -W0/4, and |phi|^2 = 1 there
    assert sx[i, i] == pytest.approx(-0.25, abs=1e-8)
    assert sy[i, i] == pytest.approx(-0.25, abs=1e-8)
    vortex = (X + 1j * Y) * np.exp(-(X**2 + Y**2) / 2)
    sx, sy = poynting(g128, vortex)
    circ = -Y * sx + X * sy
    assert circ.min() > -1e-12 and circ.max() > 0


def test_continuity_on_exact_droplet(g128):
    p = exact_params(1.0, 1.0)
    f = build_pt_hog(g128, p)
    phi = exact_droplet(g128, 1.0)
    scale = np.max(np.abs(f.w) * np.abs(phi) ** 2)
    assert np.max(np.abs(continuity_residual(g128, phi, f))) < 1e-6 * scale


def test_continuity_on_spinning_state(g64):
    p = exact_params(1.0, 1.0).with_(omega=0.4)
    f = build_pt_hog(g64, p)
    st_ = newton_cg_solve(g64, exact_droplet(g64, 1.0), p, f)
    r = continuity_residual(g64, st_.phi, f, p.omega)
    scale = np.max(np.abs(f.w) * np.abs(st_.phi) ** 2)
    assert np.max(np.abs(r)) < 1e-6 * scale
    # the rotation term matters: without it the balance fails
    assert np.max(np.abs(continuity_residual(g64, st_.phi, f))) > 1e-3 * scale


@pytest.mark.parametrize("m", [0, 1, 2, -1, 3])
def test_winding_of_canonical_vortices(m):
    X, Y = G40.mesh()
    z = X + 1j * Y
    phi = (z**m if m >= 0 else np.conj(z) ** -m) * np.exp(-(X**2 + Y**2) / 2)
    w = winding(G40, phi, 2.0)
    assert w.charge == m and w.residual < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(-3, 3), st.floats(0.7, 3.0), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_winding_property(m, radius, cx, cy):
    X, Y = G40.mesh()
    z = (X - cx) + 1j * (Y - cy)
    phi = (z**m if m >= 0 else np.conj(z) ** -m) * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / 4)
    assert winding(G40, phi, radius, (cx, cy)).charge == m


def test_winding_errors():
    X, _ = G40.mesh()
    with pytest.raises(ContourError):
        winding(G40, X * np.exp(-X**2) + 0j, 1.0)
    with pytest.raises(ValueError):
        winding(G40, np.ones(G40.shape, complex), 0.0)


def test_asymmetry(g64):
    X, Y = g64.mesh()
    assert asymmetry(g64, np.exp(-(X**2 + Y**2)) + 0j) < 1e-12
    assert asymmetry(g64, exact_droplet(g64, 1.0)) < 1e-12
    a = [asymmetry(g64, exact_droplet(g64, 1.0, (s, 0.0))) for s in (0.25, 0.5, 1.0)]
    assert 0 < a[0] < a[1] < a[2]
    assert asymmetry(g64, np.zeros(g64.shape)) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_asymmetry_of_mirror_symmetric_fields(seed):
    g = make_grid(16, 16, 3.0, 3.0)
    r = np.random.default_rng(seed)
    f = r.standard_normal(g.shape) + 1j * r.standard_normal(g.shape)
    sym = np.abs(f) + np.abs(g.mirror(f))
    assert asymmetry(g, sym * np.exp(1j * r.uniform(0, 6, g.shape))) < 1e-12


def test_components_of_exact_droplet(g128):
    comps = contour_components(g128, exact_droplet(g128, 1.0))
    assert len(comps) == 1
    c = comps[0]
    assert np.hypot(*c.centroid) < 1e-10
    # the half-maximum disk of e^{-r^2} has radius sqrt(ln 2)
    assert c.area == pytest.approx(math.pi * math.log(2), rel=0.03)


def test_components_count_and_periodic_join(g64):
    X, Y = g64.mesh()
    two = np.exp(-((X - 3) ** 2 + Y**2)) + np.exp(-((X + 3) ** 2 + Y**2))
    comps = contour_components(g64, two)
    assert len(comps) == 2
    assert comps[0].centroid[0] == pytest.approx(-3, abs=1e-6)
    assert comps[1].centroid[0] == pytest.approx(3, abs=1e-6)
    norms = assign_norms(g64, two, [c.centroid for c in comps])
    assert norms == pytest.approx([math.pi / 2, math.pi / 2], rel=1e-6)
    assert contour_components(g64, np.zeros(g64.shape)) == []
    # a blob sitting on the box edge is one region, not two
    edge = np.exp(-((np.abs(X) - 8) ** 2 + Y**2))
    comps = contour_components(g64, edge)
    assert len(comps) == 1 and abs(abs(comps[0].centroid[0]) - 8) < 0.2
    with pytest.raises(ValueError):
        contour_components(g64, two, 1.5)


def test_diagnostics(g64):
    p = exact_params(1.0, 1.0)
    d = diagnostics(g64, exact_droplet(g64, 1.0), build_pt_hog(g64, p), p, t=1.5)
    assert d.t == 1.5
    assert d.n == pytest.approx(math.pi, abs=1e-6)
    assert d.peak == pytest.approx(1.0)
    assert np.hypot(*d.com) < 1e-12
