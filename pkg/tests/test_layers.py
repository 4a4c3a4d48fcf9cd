"""Boundary-layer construction: the exponential layer, the diffusive layer,
the second correction, and the composite solution."""

import math

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.special import erfc

from relaxbc.errors import AssumptionViolated
from relaxbc.layers import (
    SqrtEpsLayer,
    assemble_composite,
    build_eps_layer,
    build_second_correction,
    diffusion_matrix,
    solve_sqrt_eps_layer,
)
from relaxbc.model import RelaxationSystem
from relaxbc.reduction import EquilibriumFrame, solve_closure


def _closure_ws(pipe, g, h):
    ubar0 = np.array([g + h / 3.0])
    _, ws = solve_closure(
        pipe.closure, pipe.sys, np.array([g, h]), ubar0, pipe.eq.n10
    )
    return ws


class TestEpsLayer:
    def test_worked_boundary_value(self, pipe2x2):
        layer = build_eps_layer(pipe2x2.sys, pipe2x2.frame, pipe2x2.data)
        g, h = 0.2, 0.9
        vals = layer.evaluate(0.0, _closure_ws(pipe2x2, g, h))
        assert vals.shape == (1, 2)
        np.testing.assert_allclose(vals[0], [-h / 3.0, h], atol=1e-12)

    def test_decays_to_zero(self, pipe2x2):
        layer = build_eps_layer(pipe2x2.sys, pipe2x2.frame, pipe2x2.data)
        ws = _closure_ws(pipe2x2, 0.2, 0.9)
        far = layer.evaluate(40.0, ws)
        assert np.abs(far).max() < 1e-12

    def test_profile_solves_layer_ode(self, pipe2x2):
        # the profile W(y) = amplitude @ exp(M2 y) R2S w_s must satisfy
        # A1 W'(y) = Q W(y) pointwise
        layer = build_eps_layer(pipe2x2.sys, pipe2x2.frame, pipe2x2.data)
        ws = _closure_ws(pipe2x2, 0.2, 0.9)
        A1, Q = pipe2x2.sys.A1, pipe2x2.sys.Q
        for y in (0.0, 0.3, 1.0, 4.0):
            w = sla.expm(layer.M2 * y) @ layer.R2S @ ws
            U = layer.amplitude @ np.real(w)
            dU = layer.amplitude @ np.real(layer.M2 @ w)
            assert np.abs(A1 @ dU - Q @ U).max() < 1e-12

    def test_zero_closure_gives_zero_profile(self, pipe2x2):
        layer = build_eps_layer(pipe2x2.sys, pipe2x2.frame, pipe2x2.data)
        ws = _closure_ws(pipe2x2, 0.0, 0.0)
        y = np.linspace(0.0, 5.0, 7)
        assert np.abs(layer.evaluate(y, ws)).max() < 1e-14

    def test_square_transfer_has_no_modes(self, pipe3):
        layer = build_eps_layer(pipe3.sys, pipe3.frame, pipe3.data)
        assert layer.mode_count == 0
        vals = layer.evaluate(np.array([0.0, 1.0]), np.zeros(0))
        assert vals.shape == (2, pipe3.sys.n)
        assert np.abs(vals).max() == 0.0


class TestDiffusionMatrix:
    def test_negative_definite(self, pipe3):
        D = diffusion_matrix(pipe3.sys, pipe3.eq)
        assert D.shape == (1, 1)
        assert D[0, 0] < 0.0
        np.testing.assert_allclose(D, D.T)

    def test_empty_without_zero_speed_modes(self, pipe2x2):
        D = diffusion_matrix(pipe2x2.sys, pipe2x2.eq)
        assert D.shape == (0, 0)

    def test_decoupled_zero_mode_rejected(self):
        # A12 = 0 with a singular A11 makes D = 0: the zero-speed mode never
        # feels the relaxation and the diffusive layer is ill-posed
        sys_obj = RelaxationSystem(
            d=1,
            n=2,
            r=1,
            A=(np.diag([0.0, 1.0]),),
            Q=np.diag([0.0, -1.0]),
            B=np.array([[0.0, 1.0]]),
        )
        eq = EquilibriumFrame(
            P1=np.zeros((1, 0)), P0=np.eye(1), Lam1=np.zeros(0)
        )
        with pytest.raises(AssumptionViolated, match="negative definite"):
            diffusion_matrix(sys_obj, eq)


class TestSqrtEpsLayer:
    def test_zero_boundary_is_zero(self, pipe3):
        layer = solve_sqrt_eps_layer(
            pipe3.sys, pipe3.eq, lambda t: np.zeros(1), T=0.4
        )
        assert np.abs(layer.m).max() == 0.0
        assert layer.tail_fraction <= 1e-8

    def test_empty_when_no_zero_speed_modes(self, pipe2x2):
        layer = solve_sqrt_eps_layer(
            pipe2x2.sys, pipe2x2.eq, lambda t: np.zeros(0), T=0.4
        )
        assert layer.m.shape[1] == 0
        assert layer.interp_m(np.array([0.0, 1.0])).shape == (2, 0)

    def test_constant_boundary_matches_erfc(self, pipe3):
        # with constant Dirichlet data the layer is the classical similarity
        # solution m0 * erfc(z / (2 sqrt(delta t)))
        D = diffusion_matrix(pipe3.sys, pipe3.eq)
        delta, T, m0 = -D[0, 0], 0.3, 1.7
        layer = solve_sqrt_eps_layer(
            pipe3.sys, pipe3.eq, lambda t: np.array([m0]), T=T
        )
        exact = m0 * erfc(layer.z / (2.0 * math.sqrt(delta * T)))
        assert np.abs(layer.m[:, 0] - exact).max() < 1e-3

    def test_maximum_principle(self, pipe3):
        layer = solve_sqrt_eps_layer(
            pipe3.sys, pipe3.eq, lambda t: np.array([math.sin(t)]), T=1.0
        )
        assert np.abs(layer.m).max() <= math.sin(1.0) + 1e-9

    def test_snapshots_saved(self, pipe3):
        layer = solve_sqrt_eps_layer(
            pipe3.sys,
            pipe3.eq,
            lambda t: np.array([math.sin(t)]),
            T=0.5,
            save_times=[0.25, 0.5],
        )
        assert set(layer.snapshots) == {0.25, 0.5}
        m_quarter, dm_quarter = layer.snapshots[0.25]
        assert m_quarter.shape == layer.m.shape
        assert dm_quarter.shape == layer.m.shape
        # the boundary forcing grows, so the earlier profile is smaller
        assert np.abs(m_quarter).max() < np.abs(layer.m).max()


class TestSecondCorrection:
    def test_coefficient_formulas(self, pipe3):
        sys_obj, eq = pipe3.sys, pipe3.eq
        layer = solve_sqrt_eps_layer(
            sys_obj, eq, lambda t: np.array([1.0]), T=0.2
        )
        second = build_second_correction(sys_obj, eq, layer)
        want_nu2 = np.linalg.solve(sys_obj.S, sys_obj.A12.T @ eq.P0)
        np.testing.assert_allclose(second.nu2_coeff, want_nu2, atol=1e-12)
        # the fast-mode correction carries no zero-speed component
        assert np.abs(eq.P0.T @ second.mu2_coeff).max() < 1e-12

    def test_evaluate_synthetic_profile(self, pipe3):
        # plant m(z) = exp(-z) so dm/dz is known in closed form
        z = np.linspace(0.0, 8.0, 400)
        m = np.exp(-z)[:, None]
        synthetic = SqrtEpsLayer(
            z=z,
            m=m,
            dm_dz=-m,
            P0=pipe3.eq.P0,
            D=diffusion_matrix(pipe3.sys, pipe3.eq),
            z_max=8.0,
            doublings=0,
            tail_fraction=0.0,
            snapshots={},
        )
        second = build_second_correction(pipe3.sys, pipe3.eq, synthetic)
        zq = z[[0, 50, 150]]  # on-grid queries keep the interpolation exact
        vals = second.evaluate(zq)
        n1 = pipe3.sys.n - pipe3.sys.r
        dm = -np.exp(-zq)[:, None]
        np.testing.assert_allclose(
            vals[:, :n1], dm @ second.mu2_coeff.T, atol=1e-12
        )
        np.testing.assert_allclose(
            vals[:, n1:], dm @ second.nu2_coeff.T, atol=1e-12
        )


class TestComposite:
    def test_outer_only(self, pipe2x2):
        x = np.linspace(0.0, 2.0, 11)
        ubar = np.cos(x)[:, None]
        U = assemble_composite(pipe2x2.sys, x, ubar, eps=1e-2)
        np.testing.assert_allclose(U[:, 0], np.cos(x))
        assert np.abs(U[:, 1]).max() == 0.0

    def test_boundary_exactness(self, pipe2x2):
        # without zero-speed modes the composite meets the boundary condition
        # exactly: B U(0) = b
        g, h = 0.2, 0.9
        layer = build_eps_layer(pipe2x2.sys, pipe2x2.frame, pipe2x2.data)
        ws = _closure_ws(pipe2x2, g, h)
        x = np.array([0.0, 0.05, 1.0])
        ubar = np.full((x.size, 1), g + h / 3.0)
        U = assemble_composite(
            pipe2x2.sys, x, ubar, eps=1e-3, eps_layer=layer, w_s=ws
        )
        np.testing.assert_allclose(
            pipe2x2.sys.B @ U[0], [g, h], atol=1e-12
        )

    def test_far_field_is_outer(self, pipe3):
        sys_obj, eq = pipe3.sys, pipe3.eq
        layer = build_eps_layer(sys_obj, pipe3.frame, pipe3.data)
        sqrt_layer = solve_sqrt_eps_layer(
            sys_obj, eq, lambda t: np.array([0.4]), T=0.3
        )
        second = build_second_correction(sys_obj, eq, sqrt_layer)
        x = np.array([0.9 * sqrt_layer.z_max * math.sqrt(1e-4), 50.0])
        n1 = sys_obj.n - sys_obj.r
        ubar = np.ones((x.size, n1))
        U = assemble_composite(
            sys_obj,
            x,
            ubar,
            eps=1e-4,
            eps_layer=layer,
            w_s=np.zeros(0),
            sqrt_layer=sqrt_layer,
            second=second,
        )
        np.testing.assert_allclose(U[:, :n1], ubar, atol=1e-6)
        assert np.abs(U[:, n1:]).max() < 1e-6
