import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minoverlap.errors import InvalidInputError, NotPSDError
from minoverlap.matcore import eig_sym, is_psd, min_eig, smat, smat_dim, sqrt_psd, svec, svec_dim, sym


def random_sym(rng, d):
    a = rng.standard_normal((d, d))
    return a + a.T


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_svec_roundtrip_and_inner_product(rng, d):
    a, b = random_sym(rng, d), random_sym(rng, d)
    assert svec(a).shape == (svec_dim(d),)
    np.testing.assert_allclose(smat(svec(a), d), a, atol=1e-14)
    assert svec(a) @ svec(b) == pytest.approx(np.sum(a * b), rel=1e-12)


def test_svec_batched(rng):
    a = np.stack([random_sym(rng, 3) for _ in range(4)])
    v = svec(a)
    assert v.shape == (4, 6)
    np.testing.assert_allclose(smat(v, 3), a)


def test_dims():
    assert [svec_dim(d) for d in (1, 2, 3, 7)] == [1, 3, 6, 28]
    assert smat_dim(28) == 7
    with pytest.raises((InvalidInputError, ValueError)):
        smat_dim(5)


def test_sqrt_and_eigs(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    m = q @ np.diag([4.0, 1.0, 0.25]) @ q.T
    r = sqrt_psd(m)
    np.testing.assert_allclose(r @ r, m, atol=1e-12)
    w, _ = eig_sym(m)
    np.testing.assert_allclose(np.sort(w), [0.25, 1.0, 4.0])
    assert min_eig(m) == pytest.approx(0.25)
    assert is_psd(m)
    assert not is_psd(-m)
    with pytest.raises(NotPSDError):
        sqrt_psd(-m)


def test_sym_rejects_nonsquare():
    with pytest.raises((InvalidInputError, ValueError)):
        sym(np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_svec_is_isometry(d, seed):
    r = np.random.default_rng(seed)
    a = random_sym(r, d)
    assert np.linalg.norm(svec(a)) == pytest.approx(np.linalg.norm(a), rel=1e-12)
