import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdrop2d.bdg import (BdgSpectrum, apply_bdg, bdg_spectrum, classify, dense_bdg,
                         pairing_error)
from qdrop2d.grid import make_grid
from qdrop2d.linspec import dense_h
from qdrop2d.potential import ModelParams, build_pt_hog
from qdrop2d.stationary import make_state

G16 = make_grid(16, 16, 5.0, 5.0)


@pytest.fixture(scope="module")
def dense_exact(exact_state32):
    return bdg_spectrum(exact_state32, 20, method="dense")


def _trivial_state(grid, p):
    return make_state(grid, build_pt_hog(grid, p), p, np.zeros(grid.shape, complex))


def test_apply_bdg_zero_input(exact_state32):
    z = np.zeros(exact_state32.grid.shape, complex)
    u, v = apply_bdg(exact_state32, z, z)
    assert not u.any() and not v.any()


def test_dense_matrix_matches_operator(rng):
    p = ModelParams(mu=2.0, omega=0.3)
    x = make_grid(16, 16, 5.0, 5.0).mesh()[0]
    phi = np.exp(-(x**2) / 2 - 0.1j * x) * np.exp(-(G16.mesh()[1] ** 2) / 2)
    st_ = make_state(G16, build_pt_hog(G16, p), p, phi)
    u = rng.standard_normal(G16.shape) + 1j * rng.standard_normal(G16.shape)
    v = rng.standard_normal(G16.shape) + 1j * rng.standard_normal(G16.shape)
    a, b = apply_bdg(st_, u, v)
    m = dense_bdg(st_)
    out = m @ np.concatenate([u.ravel(), v.ravel()])
    assert np.max(np.abs(out - np.concatenate([a.ravel(), b.ravel()]))) < 1e-10


def test_zero_state_decouples():
    # with phi = 0 the spectrum is {lam - mu} together with {-(lam - mu)*}
    p = ModelParams(mu=2.5, w0=1.0)
    lam = np.linalg.eigvals(dense_h(G16, build_pt_hog(G16, p)))
    expected = np.concatenate([lam - p.mu, -np.conj(lam - p.mu)])
    got = np.linalg.eigvals(dense_bdg(_trivial_state(G16, p)))
    d = np.abs(got[:, None] - expected[None, :]).min(axis=1)
    assert d.max() < 1e-8


def test_exact_droplet_is_stable(dense_exact):
    assert dense_exact.max_im < 1e-6
    assert classify(dense_exact) == "stable"
    assert dense_exact.quartet_error() < 1e-8
    # the phase mode is kept aside, near zero
    assert len(dense_exact.goldstone) == 2
    assert np.max(np.abs(dense_exact.goldstone)) < 1e-5


def test_arnoldi_matches_dense(exact_state32, dense_exact):
    arn = bdg_spectrum(exact_state32, 12, method="arnoldi", rng=np.random.default_rng(7))
    d = dense_exact.eigenvalues
    dist = np.abs(arn.eigenvalues[:, None] - d[None, :]).min(axis=1)
    assert dist.max() < 1e-6
    assert arn.max_im < 1e-6


def test_classify_thresholds(exact_state32):
    def spec(m):
        return BdgSpectrum(np.array([]), m, exact_state32, 0, "dense", np.array([]), np.array([]))

    assert classify(spec(0.0)) == "stable"
    assert classify(spec(0.05)) == "unstable"
    assert classify(spec(1e-3), tol=1e-2) == "stable"


def test_bdg_rejects_bad_requests(exact_state32):
    with pytest.raises(ValueError):
        bdg_spectrum(exact_state32, 1)
    with pytest.raises(ValueError):
        bdg_spectrum(exact_state32, 4, method="qr")


complex_vals = st.builds(complex, st.floats(-50, 50), st.floats(-5, 5))


@settings(max_examples=50, deadline=None)
@given(st.lists(complex_vals, min_size=1, max_size=8))
def test_pairing_error_of_symmetric_sets_is_zero(vals):
    ev = np.array(vals + [-np.conj(v) for v in vals])
    assert pairing_error(ev) < 1e-12


def test_pairing_error_detects_missing_partner():
    assert pairing_error(np.array([1.0 + 0.5j, -1.0 + 0.5j, 3.0 + 0.1j])) > 1.0
