import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import PRINTED_M
from vesselkeep.linalg import (
    DimensionError,
    NonFiniteDerivativeError,
    NotHurwitzError,
    SingularMatrixError,
    eig_real_parts,
    integrate,
    inverse,
    lyapunov_solve,
    mat_mul,
    rk4_step,
    solve_linear,
    sylvester_solve,
    unvec,
    vec,
)
from vesselkeep.plant import build_S
from vesselkeep.regulator import build_companion


def frac_inverse(rows):
    """Exact inverse by Gauss-Jordan over rationals."""
    n = len(rows)
    a = [[Fraction(x) for x in r] + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(rows)]
    for k in range(n):
        p = next(i for i in range(k, n) if a[i][k] != 0)
        a[k], a[p] = a[p], a[k]
        piv = a[k][k]
        a[k] = [x / piv for x in a[k]]
        for i in range(n):
            if i != k and a[i][k] != 0:
                f = a[i][k]
                a[i] = [x - f * y for x, y in zip(a[i], a[k])]
    return [[float(x) for x in r[n:]] for r in a]


def bisect_roots(coeffs, lo=-20.0, hi=20.0, n_grid=40001):
    """Real roots of a polynomial (highest degree first) by sign-change bisection."""
    p = np.poly1d(coeffs)
    xs = np.linspace(lo, hi, n_grid)
    vals = p(xs)
    roots = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb < 0.0:
            for _ in range(200):
                m = 0.5 * (a + b)
                if np.sign(p(m)) == np.sign(fa):
                    a, fa = m, p(m)
                else:
                    b = m
            roots.append(0.5 * (a + b))
    return np.array(roots)


class TestMatMul:
    def test_identity(self):
        assert np.array_equal(mat_mul(np.eye(3), np.eye(3)), np.eye(3))

    def test_inertia_times_inverse(self):
        M = np.array(PRINTED_M)
        assert np.max(np.abs(mat_mul(M, np.array(frac_inverse(PRINTED_M))) - np.eye(3))) < 1e-12

    def test_block_exosystem_derivative(self):
        q = (0.5625, 0.25, 0.0625)
        w = np.arange(1.0, 10.0)
        dw = mat_mul(build_S(q), w.reshape(9, 1)).ravel()
        expected = []
        for i, qi in enumerate(q):
            expected += [0.0, w[3 * i + 2], -qi * w[3 * i + 1]]
        assert np.array_equal(dw, expected)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            mat_mul(np.ones((2, 3)), np.ones((2, 3)))


class TestSolveLinear:
    def test_identity(self):
        assert np.array_equal(solve_linear(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_inertia_first_column(self):
        x = solve_linear(PRINTED_M, [1.0, 0.0, 0.0])
        assert np.allclose(x, [1.0 / 3.0, 0.0, 0.0], atol=1e-15)

    def test_inverse_matches_rational_oracle(self):
        assert np.max(np.abs(inverse(PRINTED_M) - np.array(frac_inverse(PRINTED_M)))) < 1e-14

    def test_singular_names_pivot(self):
        with pytest.raises(SingularMatrixError) as exc:
            solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])
        assert exc.value.column == 1
        assert "pivot" in str(exc.value)

    def test_printed_damping_is_singular(self):
        with pytest.raises(SingularMatrixError):
            inverse([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]])

    def test_matrix_rhs(self):
        b = np.arange(6.0).reshape(3, 2)
        x = solve_linear(PRINTED_M, b)
        assert np.allclose(np.array(PRINTED_M) @ x, b, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        arrays(np.float64, (5, 5), elements=st.floats(-1, 1)),
        arrays(np.float64, 5, elements=st.floats(-10, 10)),
    )
    def test_residual_property(self, a, b):
        a = a + 6.0 * np.eye(5)  # diagonally dominant, so nonsingular
        x = solve_linear(a, b)
        assert np.max(np.abs(a @ x - b)) <= 1e-9 * (1.0 + np.max(np.abs(b)))


class TestLyapunov:
    def test_scalar_case(self):
        assert np.allclose(lyapunov_solve(-np.eye(3), 2.0 * np.eye(3)), np.eye(3), atol=1e-14)

    def test_companion_block(self):
        F, _ = build_companion([1.0, 3.0, 3.0])
        p = lyapunov_solve(F, np.eye(3))
        assert np.max(np.abs(p - p.T)) <= 1e-12
        assert np.linalg.eigvalsh(p).min() > 0.0
        # independent Bartels-Stewart solution
        ref = scipy.linalg.solve_continuous_lyapunov(F.T, -np.eye(3))
        assert np.max(np.abs(p - ref)) < 1e-10

    def test_zero_eigenvalue_rejected(self):
        with pytest.raises(NotHurwitzError):
            lyapunov_solve(np.diag([0.0, -1.0, -2.0]), np.eye(3))

    def test_rejects_indefinite_q(self):
        with pytest.raises(ValueError):
            lyapunov_solve(-np.eye(2), np.diag([1.0, -1.0]))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (4, 4), elements=st.floats(-1, 1)))
    def test_symmetry_and_residual(self, a):
        a = a - 5.0 * np.eye(4)  # Gershgorin: Hurwitz
        q = np.eye(4) + 0.1 * (a + a.T) ** 2
        p = lyapunov_solve(a, q)
        assert np.max(np.abs(p - p.T)) <= 1e-12
        assert np.linalg.norm(p @ a + a.T @ p + q, 2) <= 1e-8


class TestSylvester:
    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 3)) - 4 * np.eye(3)
        b = build_S([0.5625, 0.25, 0.0625])[:3, :3]
        c = rng.normal(size=(3, 3))
        x = sylvester_solve(a, b, c)
        assert np.max(np.abs(x - scipy.linalg.solve_sylvester(a, b, c))) < 1e-12

    def test_vec_unvec_roundtrip(self):
        x = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(unvec(vec(x), 3, 4), x)
        assert np.array_equal(vec(x)[:3], x[:, 0])


class TestEigRealParts:
    def test_diagonal(self):
        assert np.allclose(eig_real_parts(np.diag([-1.0, -2.0, -3.0])), [-3.0, -2.0, -1.0])

    def test_internal_model_block(self):
        F, _ = build_companion([1.0, 3.0, 3.0])
        # triple root: perturbation of order eps^(1/3)
        assert np.max(np.abs(eig_real_parts(F) + 1.0)) < 1e-4

    def test_exosystem_block_marginal(self):
        assert np.max(np.abs(eig_real_parts(build_S([0.5625])))) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-5.0, -0.1), min_size=3, max_size=3, unique=True))
    def test_companion_matches_bisection(self, roots):
        roots = sorted(roots)
        if min(np.diff(roots)) < 1e-2:
            return
        coeffs = np.poly(roots)  # s^3 + c1 s^2 + c2 s + c3
        F, _ = build_companion(coeffs[::-1][:-1])
        found = np.sort(bisect_roots(coeffs))
        assert found.size == 3
        assert np.max(np.abs(eig_real_parts(F) - found)) < 1e-6


class TestRK4:
    def test_constant(self):
        assert np.array_equal(rk4_step(lambda t, y: np.zeros_like(y), 0.0, [4.0], 0.1), [4.0])

    def test_exponential_step(self):
        y = rk4_step(lambda t, y: -y, 0.0, [1.0], 0.1)
        assert abs(y[0] - 0.9048375) < 1e-7
        assert abs(y[0] - math.exp(-0.1)) < 1e-7

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-5.0, 5.0).filter(lambda lam: abs(lam) > 1e-2))
    def test_local_error_order(self, lam):
        dt = 0.1
        h = lam * dt
        y = rk4_step(lambda t, y: lam * y, 0.0, [1.0], dt)
        # one-step error of RK4 on y' = y is the Taylor remainder h^5/120 + ...
        assert abs(y[0] - math.exp(h)) <= 0.01 * abs(h) ** 5

    def test_nonfinite_derivative(self):
        def f(t, y):
            d = np.zeros(3)
            if t > 0.0:
                d[2] = np.nan
            return d

        with pytest.raises(NonFiniteDerivativeError) as exc:
            rk4_step(f, 0.0, np.zeros(3), 0.1)
        assert exc.value.index == 2
        assert exc.value.t == pytest.approx(0.05)

    def test_exosystem_channel_closed_form(self):
        q = 0.5625
        w0 = [2.0, 9.0 * math.sin(9.0), 9.0 * 0.75 * math.cos(9.0)]
        S = build_S([q])
        t, ys = integrate(lambda _t, w: S @ w, 0.0, w0, 1e-3, 10_000)
        ref = 2.0 + 9.0 * np.sin(0.75 * t + 9.0)
        assert np.max(np.abs(ys[:, 0] + ys[:, 1] - ref)) < 1e-6

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            rk4_step(lambda t, y: y, 0.0, [1.0], 0.0)
