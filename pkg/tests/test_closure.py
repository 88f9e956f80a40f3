import numpy as np
import pytest
from hypothesis import given, strategies as st

from mhdgn.closure import AsymmetricInput, rhs_R_1d, rhs_R_2d, rhs_Rb_1d, rhs_Rb_2d, rhs_Rm_2d
from mhdgn.core import Grid1D, Grid2D, ModelParams, ddx, sym_min_eig
from mhdgn.swmhd import ssp_rk2

P = ModelParams(0.01, 0.3, 0.0)


def _sym(rng, shape):
    A = rng.normal(size=(2, 2) + shape)
    return A + np.swapaxes(A, 0, 1)


class TestOneDimensional:
    @pytest.mark.parametrize("rhs2,rhs1", [(rhs_R_2d, rhs_R_1d), (rhs_Rb_2d, rhs_Rb_1d)], ids=["R", "Rb"])
    def test_2d_reduces_to_1d(self, rhs2, rhs1, rng):
        g1, g2 = Grid1D(32), Grid2D(32, 1)
        u = np.sin(g1.x) + 0.3
        T = 1 + 0.5 * np.cos(g1.x)
        T2 = np.zeros((2, 2, 32, 1))
        T2[0, 0, :, 0] = T
        out = rhs2(T2, np.stack([u[:, None], 0 * u[:, None]]), P, g2)
        np.testing.assert_allclose(out[0, 0, :, 0], rhs1(T, u, P, g1), atol=1e-13)

    @pytest.mark.parametrize("scheme", ["centered", "upwind"])
    def test_uniform_flow_translates(self, scheme):
        g = Grid1D(64)
        R = np.cos(g.x)
        out = rhs_R_1d(R, np.full(64, 2.0), P, g, scheme)
        np.testing.assert_allclose(out, 2.0 * P.eps * np.sin(g.x), atol=5e-2 if scheme == "upwind" else 5e-3)


class TestTwoDimensional:
    def test_identity_under_compression(self):
        g = Grid2D(16, 4)
        X, _ = g.coords()
        u = np.stack([np.sin(X), 0 * X])
        I = np.zeros((2, 2) + g.shape)
        I[0, 0] = I[1, 1] = 1.0
        c = ddx(np.sin(X), g, 0)
        dR, dRb = rhs_R_2d(I, u, P, g), rhs_Rb_2d(I, u, P, g)
        np.testing.assert_allclose(dR[0, 0], -3 * P.eps * c)
        np.testing.assert_allclose(dR[1, 1], -P.eps * c)
        np.testing.assert_allclose(dRb[0, 0], P.eps * c)
        np.testing.assert_allclose(dRb[1, 1], -P.eps * c)

    @pytest.mark.parametrize("rhs", [rhs_R_2d, rhs_Rb_2d])
    def test_symmetry_preserved(self, rhs, rng):
        g = Grid2D(16, 16)
        X, Y = g.coords()
        u = np.stack([np.sin(X + Y), np.cos(2 * X)])
        out = rhs(_sym(rng, g.shape), u, P, g)
        assert np.max(np.abs(out[0, 1] - out[1, 0])) < 1e-13

    def test_Rm_antisymmetric_stretching(self, rng):
        # for antisymmetric Rm the stretching G Rm - Rm G^T keeps antisymmetry
        g = Grid2D(16, 16)
        X, Y = g.coords()
        u = np.stack([np.sin(Y), np.cos(X)])
        Rm = np.zeros((2, 2) + g.shape)
        Rm[0, 1] = np.cos(X)
        Rm[1, 0] = -np.cos(X)
        out = rhs_Rm_2d(Rm, u, P, g)
        np.testing.assert_allclose(out[0, 1], -out[1, 0], atol=1e-13)

    @pytest.mark.parametrize("rhs", [rhs_R_2d, rhs_Rb_2d])
    def test_asymmetric_rejected(self, rhs):
        g = Grid2D(8, 8)
        T = np.zeros((2, 2) + g.shape)
        T[0, 1] = 1.0
        with pytest.raises(AsymmetricInput):
            rhs(T, np.zeros((2,) + g.shape), P, g)

    @given(st.floats(0.1, 2.0), st.floats(-1.0, 1.0))
    def test_positivity_under_smooth_flow(self, a, c):
        g = Grid2D(16, 16)
        X, Y = g.coords()
        u = np.stack([np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y)]) + c * np.stack([np.sin(Y), 0 * X])
        R = np.zeros((2, 2) + g.shape)
        R[0, 0] = a
        R[1, 1] = 1.0
        for _ in range(50):
            R = ssp_rk2(R, 0.0, 0.02, lambda T, t: rhs_R_2d(T, u, P, g))
        assert sym_min_eig(R).min() > 0
