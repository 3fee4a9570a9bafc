"""Estimator tests: AR simulation oracles, Sherman-Morrison consistency,
likelihood/robust step reductions, and the linear-procedure identities."""

import numpy as np
import pytest
from scipy import stats

from trunc_sa import (
    ARModel,
    DomainError,
    EstimatorState,
    LinearProcedureSpec,
    NoiseField,
    TruncationRegion,
    TruncationSchedule,
    g1_matrix,
    gaussian_score,
    huber_psi,
    initial_state,
    innovation_score,
    linear_step,
    rls_step,
    rml_step,
    robust_step,
    score_information,
    sherman_morrison_update,
    simulate_ar,
    student_score,
)


class TestSimulateAR:
    def test_noiseless_decay(self):
        model = ARModel(theta=[0.5], innovation=NoiseField.zero(), presample=[1.0])
        s = simulate_ar(model, 6, 0)
        np.testing.assert_allclose(s.values, 0.5 ** np.arange(1, 7), atol=1e-15)

    def test_zero_theta_reproduces_innovations(self):
        model = ARModel(theta=[0.0], innovation=NoiseField.gaussian(1.0))
        s = simulate_ar(model, 100, 3)
        rng = np.random.default_rng(3)
        np.testing.assert_array_equal(s.values, rng.standard_normal((100, 1))[:, 0])

    def test_matches_manual_recursion_ar2(self):
        theta = np.array([0.4, -0.3])
        model = ARModel(theta=theta, innovation=NoiseField.gaussian(0.8), presample=[0.5, -0.2])
        s = simulate_ar(model, 200, 17)
        rng = np.random.default_rng(17)
        xi = 0.8 * rng.standard_normal((200, 1))[:, 0]
        prev = [0.5, -0.2]  # X_0, X_{-1}
        manual = []
        for t in range(200):
            x = theta[0] * prev[0] + theta[1] * prev[1] + xi[t]
            manual.append(x)
            prev = [x, prev[0]]
        np.testing.assert_allclose(s.values, manual, rtol=1e-12, atol=1e-12)

    def test_stationary_variance_oracle(self):
        model = ARModel(theta=[0.5], innovation=NoiseField.gaussian(1.0))
        s = simulate_ar(model, 100_000, 1)
        assert np.var(s.values) == pytest.approx(1.0 / (1.0 - 0.25), abs=0.05)

    def test_explosive_series_truncated_with_status(self):
        model = ARModel(theta=[1.5], innovation=NoiseField.gaussian(1.0), overflow=1e6)
        s = simulate_ar(model, 500, 2)
        assert s.status.kind == "diverged"
        assert len(s) == s.status.step - 1
        assert np.all(np.abs(s.values) <= 1e6)

    def test_growing_variance_family(self):
        model = ARModel(
            theta=[0.0], innovation=NoiseField.variance_growth(1.0, 0.5)
        )
        s = simulate_ar(model, 200_000, 5)
        t = np.arange(1, 200_001)
        # normalize each draw by sigma_t and test unit variance
        z = s.values / np.sqrt(t**0.5)
        assert np.var(z) == pytest.approx(1.0, abs=0.02)

    def test_stationarity_predicate(self):
        assert ARModel(theta=[0.5], innovation=NoiseField.zero()).is_stationary()
        assert not ARModel(theta=[1.01], innovation=NoiseField.zero()).is_stationary()
        assert ARModel(theta=[0.4, -0.3], innovation=NoiseField.zero()).is_stationary()


class TestRLS:
    def test_zero_regressor_leaves_state_unchanged(self):
        st = initial_state(2, [1.0, -1.0])
        st2 = rls_step(st, [0.0, 0.0], 5.0)
        np.testing.assert_array_equal(st2.theta, st.theta)
        np.testing.assert_array_equal(st2.fisher_inv, st.fisher_inv)

    def test_hand_example(self):
        st = initial_state(1)
        st1 = rls_step(st, [1.0], 2.0)
        assert st1.fisher_inv[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert st1.theta[0] == pytest.approx(1.0, abs=1e-15)

    def test_matches_batch_ridge_formula(self):
        """theta_T from the recursion equals (I0 + sum xx^T)^-1 (I0 theta0 + sum x X)."""
        rng = np.random.default_rng(8)
        m = 2
        theta0 = rng.standard_normal(m)
        st = initial_state(m, theta0)
        I0 = np.eye(m)
        xs, ys = [], []
        for _ in range(60):
            x = rng.standard_normal(m)
            y = float(rng.standard_normal())
            st = rls_step(st, x, y)
            xs.append(x)
            ys.append(y)
        X = np.array(xs)
        info = I0 + X.T @ X
        batch = np.linalg.solve(info, I0 @ theta0 + X.T @ np.array(ys))
        np.testing.assert_allclose(st.theta, batch, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(st.fisher_inv, np.linalg.inv(info), rtol=1e-10, atol=1e-10)

    def test_sherman_morrison_consistency_500_steps(self):
        rng = np.random.default_rng(100)
        model = ARModel(theta=[0.4, -0.3], innovation=NoiseField.gaussian(1.0))
        s = simulate_ar(model, 502, 100)
        st = initial_state(2)
        info = np.eye(2)
        for i in range(2, 502):
            w = s.values[i - 2:i][::-1]
            st = rls_step(st, w, s.values[i])
            info += np.outer(w, w)
            assert np.linalg.eigvalsh(st.fisher_inv)[0] > 0
        assert np.max(np.abs(st.fisher_inv @ info - np.eye(2))) < 1e-8

    def test_shift_equivariance(self):
        """Shifting the data relationship and theta0 by a constant shifts every
        estimate by the same constant (regressors held fixed)."""
        rng = np.random.default_rng(4)
        m = 2
        shift = np.array([0.7, -1.3])
        xs = rng.standard_normal((40, m))
        resid = rng.standard_normal(40)
        theta0 = rng.standard_normal(m)
        st_a = initial_state(m, theta0)
        st_b = initial_state(m, theta0 + shift)
        for x, e in zip(xs, resid):
            y_a = float(x @ np.array([0.2, 0.1]) + e)
            y_b = y_a + float(x @ shift)
            st_a = rls_step(st_a, x, y_a)
            st_b = rls_step(st_b, x, y_b)
            np.testing.assert_allclose(st_b.theta, st_a.theta + shift, rtol=1e-10, atol=1e-12)


class TestRML:
    def test_gaussian_reduces_to_rls(self):
        rng = np.random.default_rng(5)
        score, l_g = gaussian_score(1.0), 1.0
        st_a = initial_state(2)
        st_b = initial_state(2)
        for _ in range(200):
            x = rng.standard_normal(2)
            y = float(rng.standard_normal())
            st_a = rls_step(st_a, x, y)
            st_b = rml_step(st_b, x, y, score, l_g)
            np.testing.assert_allclose(st_b.theta, st_a.theta, atol=1e-12)
            np.testing.assert_allclose(st_b.fisher_inv, st_a.fisher_inv, atol=1e-12)

    def test_zero_score_freezes_estimate_but_updates_information(self):
        st = initial_state(1)
        st1 = rml_step(st, [2.0], 7.0, lambda u: 0.0, 1.0)
        assert st1.theta[0] == 0.0
        assert st1.fisher_inv[0, 0] < 1.0

    def test_student_information_quadrature_matches_closed_form(self):
        """Fisher information of a scaled t location family: (nu+1)/((nu+3) s^2)."""
        for nu, scale in [(3.0, 1.0), (4.0, 0.5), (6.0, 2.0)]:
            sc = student_score(nu, scale)
            pdf = stats.t(df=nu, scale=scale).pdf
            got = score_information(sc, pdf)
            expected = (nu + 1.0) / ((nu + 3.0) * scale**2)
            assert got == pytest.approx(expected, rel=1e-8)

    def test_innovation_score_families(self):
        sc, lg = innovation_score(NoiseField.gaussian(2.0))
        assert lg == pytest.approx(0.25)
        assert sc(1.0) == pytest.approx(0.25)
        sc_t, lg_t = innovation_score(NoiseField.student(3.0, 1.0))
        assert lg_t == pytest.approx(4.0 / 6.0, rel=1e-8)
        with pytest.raises(DomainError):
            innovation_score(NoiseField.zero())

    def test_non_positive_information_rejected(self):
        st = initial_state(1)
        with pytest.raises(DomainError):
            rml_step(st, [1.0], 1.0, lambda u: u, 0.0)


class TestRobust:
    def test_identity_psi_reduces_to_rls(self):
        rng = np.random.default_rng(6)
        st_a = initial_state(2)
        st_b = initial_state(2)
        for _ in range(100):
            x = rng.standard_normal(2)
            y = float(rng.standard_normal())
            st_a = rls_step(st_a, x, y)
            st_b = robust_step(st_b, x, y, psi=lambda u: u)
            np.testing.assert_allclose(st_b.theta, st_a.theta, atol=1e-12)

    def test_huber_clips_large_residuals(self):
        psi = huber_psi(1.0)
        assert psi(10.0) == 1.0
        assert psi(-10.0) == -1.0
        assert psi(0.3) == 0.3
        st = initial_state(1)
        st1 = robust_step(st, [1.0], 10.0, psi=psi)  # residual 10 clipped to 1
        assert st1.theta[0] == pytest.approx(0.5 * 1.0)

    def test_truncation_keeps_estimate_in_region(self):
        rng = np.random.default_rng(9)
        sch = TruncationSchedule.shrinking_sphere(
            lambda t: np.zeros(1), lambda t: max(0.5, 5.0 * t**-0.5)
        )
        st = initial_state(1, [0.0])
        for t in range(1, 200):
            x = rng.standard_normal(1)
            y = float(5.0 * x[0] + rng.standard_normal())  # true theta far outside
            st = robust_step(st, x, y, psi=lambda u: u, schedule=sch, t=t)
            reg = sch.region_at(t)
            assert reg.contains(st.theta, tol=1e-12)

    def test_explicit_step_matrix_used(self):
        st = initial_state(1)
        st1 = robust_step(st, [1.0], 2.0, psi=lambda u: u, step_matrix=np.array([[0.1]]))
        assert st1.theta[0] == pytest.approx(0.2)
        # information still updated by the rank-one rule
        assert st1.fisher_inv[0, 0] == pytest.approx(0.5)

    def test_overflowing_update_signals_diverged(self):
        from trunc_sa import Diverged

        st = initial_state(1)
        with pytest.raises(Diverged):
            robust_step(st, [1.0], 2.0, psi=lambda u: np.inf)


class TestLinearProcedure:
    def test_equilibrium_fixed_point(self):
        spec = LinearProcedureSpec(
            gamma_fn=lambda t: np.eye(2) * 0.5,
            beta_fn=lambda t: np.eye(2),
            root=np.zeros(2),
        )
        z = np.array([1.0, -2.0])
        h = np.eye(2) @ z
        np.testing.assert_allclose(linear_step(spec, 1, z, h), z)

    def test_scalar_example(self):
        spec = LinearProcedureSpec(
            gamma_fn=lambda t: np.array([[0.5]]),
            beta_fn=lambda t: np.array([[1.0]]),
            root=np.zeros(1),
        )
        out = linear_step(spec, 1, [0.0], [2.0])
        assert out[0] == pytest.approx(1.0)

    def test_rls_is_a_linear_procedure(self):
        """gamma_t = running inverse information, beta_t = x x^T, h_t = x X_t
        reproduces the RLS estimate path on random data."""
        rng = np.random.default_rng(12)
        m = 2
        xs = rng.standard_normal((50, m))
        ys = rng.standard_normal(50)
        gammas = [np.eye(m)]
        for x in xs:
            gammas.append(sherman_morrison_update(gammas[-1], x, 1.0))
        spec = LinearProcedureSpec(
            gamma_fn=lambda t: gammas[t],
            beta_fn=lambda t: np.outer(xs[t - 1], xs[t - 1]),
            root=np.zeros(m),
        )
        z = np.zeros(m)
        st = initial_state(m)
        for t in range(1, 51):
            z = linear_step(spec, t, z, xs[t - 1] * ys[t - 1])
            st = rls_step(st, xs[t - 1], ys[t - 1])
            np.testing.assert_allclose(z, st.theta, rtol=1e-10, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        spec = LinearProcedureSpec(
            gamma_fn=lambda t: np.eye(2),
            beta_fn=lambda t: np.eye(2),
            root=np.zeros(2),
        )
        with pytest.raises(DomainError):
            linear_step(spec, 1, [1.0], [1.0, 2.0])


class TestG1Matrix:
    def test_scalar_identity_example(self):
        out = g1_matrix(1.0, 0.5, 1.0)
        assert out[0, 0] == pytest.approx(-0.5, abs=1e-15)

    def test_zero_beta_constant_gamma(self):
        out = g1_matrix(np.eye(3) * 0.2, np.eye(3) * 0.2, np.zeros((3, 3)))
        np.testing.assert_allclose(out, np.zeros((3, 3)), atol=1e-14)

    def test_inverse_increment_construction_identity_and_nsd(self):
        """When the inverse-step increment equals beta, the drift matrix equals
        gamma_prev^-1 (gamma_curr - gamma_prev) gamma_prev^-1 and is NSD."""
        rng = np.random.default_rng(13)
        for _ in range(200):
            m = int(rng.integers(1, 4))
            A = rng.standard_normal((m, m))
            gamma_prev = np.linalg.inv(A @ A.T + np.eye(m))
            x = rng.standard_normal(m)
            beta = np.outer(x, x)
            gamma_curr = np.linalg.inv(np.linalg.inv(gamma_prev) + beta)
            G = g1_matrix(gamma_prev, gamma_curr, beta)
            gp_inv = np.linalg.inv(gamma_prev)
            ref = gp_inv @ (gamma_curr - gamma_prev) @ gp_inv
            np.testing.assert_allclose(G, (ref + ref.T) / 2, rtol=0, atol=1e-10)
            assert np.linalg.eigvalsh(G)[-1] <= 1e-10

    def test_singular_input_rejected(self):
        with pytest.raises(DomainError):
            g1_matrix(np.zeros((2, 2)), np.eye(2), np.eye(2))


class TestStateValidation:
    def test_initial_state_scalar_inverse(self):
        st = initial_state(3, fisher_inv0=2.0)
        np.testing.assert_array_equal(st.fisher_inv, 2.0 * np.eye(3))

    def test_bad_shapes_rejected(self):
        with pytest.raises(DomainError):
            EstimatorState(theta=np.zeros(2), fisher_inv=np.eye(3))
        with pytest.raises(DomainError):
            rls_step(initial_state(2), [1.0], 1.0)
