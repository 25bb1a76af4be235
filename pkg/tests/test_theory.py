import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deeplms.cancelers import choose_mu
from deeplms.channel_model import ToneChannel
from deeplms.errors import DivergentF, DomainError, SingularCovariance
from deeplms.signal_engine import exact_stats, hermitian_apply, received_signal, streams
from deeplms.theory import (alpha, analytic_mse, bound_report, build_F, delta, eta_inf_bound,
                            f_norm1_closed_form, f_norm1_sinr_bound, g, gamma, gershgorin_bounds,
                            induced_norm1, mc_coefficient_mse, mse_recursion_init,
                            mse_recursion_step, mse_trajectory, random_normalized_channel,
                            spectral_radius, steady_state_S, theorem1_bound, theorem1_constants,
                            wiener, write_bound_csv)
from deeplms import textio

eigs = st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8).map(np.array)


def _iterate_to_steady(state, doublings=80):
    """Compose the affine map S -> F S + b with itself 2^doublings times."""
    F = state.F
    b = 4 * state.mu ** 2 * np.outer(state.lam, state.eps_star)
    for _ in range(doublings):
        b = F @ b + b
        F = F @ F
    return F @ state.S + b


class TestScalars:
    def test_alpha(self):
        assert alpha(1, 2) == 4
        assert alpha(16, 2) == 10
        assert alpha(0, 2) == 2

    def test_g(self):
        assert g(0) == 0 and g(0, "real") == 0
        assert g(1) == 0.5 and g(1, "real") == 0
        assert g(0.5) == 0.375 and g(0.5, "real") == 0.25

    def test_unknown_field(self):
        with pytest.raises(ValueError):
            g(0.5, "quaternion")

    def test_constants_hand_example(self):
        assert delta(16, 2) == pytest.approx(3.5)
        assert gamma(16, 2) == pytest.approx(11 / 17)
        c, a = theorem1_constants(16, 2)
        assert c == pytest.approx(2 / 9, rel=1e-14)
        expected_a = 1 / (1 - 8 / 9 * (3 / 17 - 0.5 * (3 / 17) ** 2))
        assert a == pytest.approx(expected_a, rel=1e-14)
        assert a == pytest.approx(1.1669, abs=5e-5)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            theorem1_constants(4, 2)
        with pytest.raises(DomainError):
            gershgorin_bounds(4, 2)

    def test_limits(self):
        c, a = theorem1_constants(1e14, 3)
        assert 1 - 1e-5 < c < 1
        assert a == pytest.approx(1 / (1 - 8 / 9 * g(1 / 3)), rel=1e-5)
        cb, lt, _ = gershgorin_bounds(1e14, 3)
        assert cb == pytest.approx(1, abs=1e-5)
        assert lt == pytest.approx(1 / 3, rel=1e-5)

    @pytest.mark.parametrize("N", [2, 3, 4, 6])
    def test_monotone_above_threshold(self, N):
        phi = np.linspace(1.5 * N ** 2 + 3 * N + 1e-6, 1e5, 4000)
        ca = np.array([theorem1_constants(p, N) for p in phi])
        assert np.all(np.diff(ca[:, 0]) > 0)
        assert np.all(np.diff(ca[:, 1]) > 0)
        assert np.all(ca[:, 0] <= 1) and np.all(ca[:, 1] >= 1)

    def test_gershgorin_hand(self):
        cb, lt, bb = gershgorin_bounds(16, 2)
        assert cb == pytest.approx(4.5)
        assert lt == pytest.approx(3 / 17)
        assert bb == pytest.approx(10 / 16)


class TestTheorem1Bound:
    def test_zero_gap(self):
        c, _ = theorem1_constants(16, 2)
        b = theorem1_bound(16, 0, 0.0, 2)
        assert b.value == pytest.approx(c * 16 - 1, rel=1e-13)
        assert b.valid

    def test_trivial(self):
        assert not theorem1_bound(16, 10, 1.0, 2).valid

    def test_composed(self):
        c, a = 2 / 9, theorem1_constants(16, 2)[1]
        b = theorem1_bound(16, 100, 1e-4, 2)
        assert b.value == pytest.approx(1 / (1 / (c * a ** 100 * 16) + 1e-4) - 1, rel=1e-12)
        assert b.valid

    def test_huge_gap_tends_to_eta(self):
        b = theorem1_bound(100, 10 ** 6, 1e-3, 2)
        assert b.value == pytest.approx(1 / 1e-3 - 1, rel=1e-12)

    def test_negative_gap(self):
        with pytest.raises(ValueError):
            theorem1_bound(16, -1, 0.0, 2)


class TestBuildF:
    def test_scalar_complex(self):
        np.testing.assert_allclose(build_F([2.0], 1 / 6), [[5 / 9]], rtol=1e-14)

    def test_scalar_real(self):
        np.testing.assert_allclose(build_F([2.0], 1 / 6, "real"), [[1.0]], rtol=1e-14)

    def test_zero_mu(self):
        np.testing.assert_array_equal(build_F([1.0, 2.0, 3.0], 0.0), np.eye(3))

    def test_closed_form_examples(self):
        assert f_norm1_closed_form([3.0]) == pytest.approx(5 / 9)
        assert f_norm1_closed_form([3.0], "real") == pytest.approx(1.0)
        assert f_norm1_closed_form([1.0, 1.0]) == pytest.approx(2 / 3)

    @settings(max_examples=200, deadline=None)
    @given(eigs, st.sampled_from(["complex", "real"]))
    def test_closed_form_matches_column_sums(self, lam, field):
        F = build_F(lam, 1 / (3 * lam.sum()), field)
        assert induced_norm1(F) == pytest.approx(f_norm1_closed_form(lam, field), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(eigs, st.sampled_from(["complex", "real"]))
    def test_eigenvalues_below_one(self, lam, field):
        F = build_F(lam, 1 / (3 * lam.sum()), field)
        rho = spectral_radius(F)
        assert rho <= induced_norm1(F) + 1e-12
        if lam.size > 1:
            assert rho < 1

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-2, 1e2), min_size=2, max_size=6).map(np.array))
    def test_similarity_spectrum(self, lam):
        F = build_F(lam, 1 / (3 * lam.sum()))
        Ft = lam[:, None] * F / lam[None, :]
        a = np.sort_complex(np.linalg.eigvals(F))
        b = np.sort_complex(np.linalg.eigvals(Ft))
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_sinr_bound_dominates_closed_form(self):
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(500):
            N = int(rng.integers(2, 6))
            ch = random_normalized_channel(rng, N, rng.uniform(0.01, 0.2), 10 ** rng.uniform(-6, -2))
            try:
                rep = bound_report(ch)
            except DomainError:
                continue
            checked += 1
            assert rep.f_norm1 <= rep.f_norm1_bound + 1e-12
            assert rep.f_norm1 == pytest.approx(f_norm1_closed_form(
                np.linalg.eigvalsh(exact_stats(ch).R)), abs=1e-12)
        assert checked > 200


class TestWiener:
    def test_noiseless_identity(self):
        W, eps = wiener(exact_stats(ToneChannel(H=np.eye(2), noise_variance=1e-300)))
        np.testing.assert_allclose(W, np.eye(2))
        np.testing.assert_allclose(eps, 0, atol=1e-15)

    def test_noisy_identity(self):
        W, eps = wiener(exact_stats(ToneChannel(H=np.eye(2), noise_variance=0.01)))
        np.testing.assert_allclose(W, np.eye(2) / 1.01, rtol=1e-14)
        np.testing.assert_allclose(eps, 1 - 1 / 1.01, rtol=1e-12)

    def test_monte_carlo_floor(self):
        rng = np.random.default_rng(1)
        ch = random_normalized_channel(rng, 3, 0.4, 0.05)
        W, eps = wiener(exact_stats(ch))
        pilots, noise = streams(1)
        m = 100_000
        d = pilots.draw(3, size=m)
        err = np.abs(d - hermitian_apply(W, received_signal(ch, d, rng=noise))) ** 2
        se = err.std(axis=0) / np.sqrt(m)
        assert np.all(np.abs(err.mean(axis=0) - eps) < 5 * se)

    def test_preprocessor_invariance(self):
        rng = np.random.default_rng(2)
        ch = random_normalized_channel(rng, 3, 0.4, 0.05)
        W_P = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
        np.testing.assert_allclose(wiener(exact_stats(ch, W_P))[1], wiener(exact_stats(ch))[1], rtol=1e-10)

    def test_singular(self):
        from deeplms.signal_engine import SecondOrderStats
        R = np.ones((2, 2), dtype=complex)
        with pytest.raises(SingularCovariance):
            wiener(SecondOrderStats(R=R, R_ud=R, noise_cov=0 * R, sigma_tilde=np.zeros(2)))


class TestRecursion:
    def _state(self, seed=0, N=3, noise=1e-2):
        ch = random_normalized_channel(np.random.default_rng(seed), N, 0.3, noise)
        return ch, mse_recursion_init(exact_stats(ch))

    def test_zero_fixed_point(self):
        _, s = self._state()
        s0 = type(s)(**{**s.__dict__, "S": np.zeros_like(s.S), "eps_star": np.zeros(3)})
        np.testing.assert_array_equal(mse_recursion_step(s0).S, 0)

    def test_one_step_from_zero(self):
        _, s = self._state()
        s0 = type(s)(**{**s.__dict__, "S": np.zeros_like(s.S)})
        np.testing.assert_allclose(mse_recursion_step(s0).S, 4 * s.mu ** 2 * np.outer(s.lam, s.eps_star))
        np.testing.assert_allclose(analytic_mse(s0), s.eps_star)

    def test_zero_start_identity_channel(self):
        st_ = exact_stats(ToneChannel(H=np.eye(2), noise_variance=0.01))
        s = mse_recursion_init(st_, W0=np.zeros((2, 2)))
        W_star, eps = wiener(st_)
        S0 = np.abs(s.U @ (0 - W_star)) ** 2
        np.testing.assert_allclose(s.S, S0)
        # the empty filter outputs nothing: MSE = E|d_i|^2 = 1
        np.testing.assert_allclose(analytic_mse(s), 1.0, rtol=1e-12)

    def test_entries_nonnegative(self):
        _, s = self._state(N=4)
        S, _ = mse_trajectory(s, 300)
        assert np.all(S >= 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_steady_state_solve_vs_iterate(self, seed):
        _, s = self._state(seed)
        np.testing.assert_allclose(_iterate_to_steady(s), steady_state_S(s), rtol=1e-9, atol=1e-15)
        S_inf = steady_state_S(s)
        np.testing.assert_allclose(s.F @ S_inf + 4 * s.mu ** 2 * np.outer(s.lam, s.eps_star), S_inf,
                                   rtol=1e-12)

    def test_column_convention_by_monte_carlo(self):
        # asymmetric users so a transposed S would be visible
        H = np.array([[1.0, 0.5j], [0.05, 1.0]])
        ch = ToneChannel(H=H, noise_variance=1e-2)
        s = mse_recursion_init(exact_stats(ch))
        S, eps = mse_trajectory(s, 50)
        mc = mc_coefficient_mse(ch, None, s.mu, 50, 5000, seed=3)
        np.testing.assert_allclose(mc.S_mean[50], S[50], rtol=0.05)
        np.testing.assert_allclose(mc.mse_mean, eps, rtol=0.05)


class TestEtaInf:
    def test_scalar_like(self):
        # lambda = (1, 1, ...) is not scalar, so compare the N = 1 algebra directly
        lam, mu = np.array([1.0]), 1 / 3
        F = build_F(lam, mu)
        assert F[0, 0] == pytest.approx(5 / 9)
        misadj = 4 * mu ** 2 * lam @ np.linalg.solve(np.eye(1) - F, lam)
        assert 1 + misadj == pytest.approx(2.0)

    def test_zero_floor(self):
        _, s = TestRecursion()._state()
        s0 = type(s)(**{**s.__dict__, "eps_star": np.zeros(3)})
        assert eta_inf_bound(s0).bound == 0

    def test_divergent(self):
        _, s = TestRecursion()._state()
        bad = type(s)(**{**s.__dict__, "F": build_F(s.lam, 10 * s.mu)})
        with pytest.raises(DivergentF):
            eta_inf_bound(bad)

    @pytest.mark.parametrize("seed", range(10))
    def test_series_and_limit(self, seed):
        _, s = TestRecursion()._state(seed, N=4)
        e = eta_inf_bound(s)
        assert e.series == pytest.approx(e.bound, rel=1e-10)
        limit = analytic_mse(type(s)(**{**s.__dict__, "S": _iterate_to_steady(s)}))
        assert limit.max() <= e.bound * (1 + 1e-9)
        np.testing.assert_allclose(limit, e.steady_state_mse, rtol=1e-9)


class TestMonteCarlo:
    def test_zero_mu(self):
        ch = random_normalized_channel(np.random.default_rng(0), 2, 0.3, 1e-2)
        mc = mc_coefficient_mse(ch, None, 0.0, 20, 50, seed=0)
        np.testing.assert_array_equal(mc.S_mean, np.broadcast_to(mc.S_mean[0], mc.S_mean.shape))

    def test_seed_determinism(self):
        ch = random_normalized_channel(np.random.default_rng(0), 2, 0.3, 1e-2)
        a = mc_coefficient_mse(ch, None, 0.05, 20, 300, seed=5, block=128)
        b = mc_coefficient_mse(ch, None, 0.05, 20, 300, seed=5, block=128)
        np.testing.assert_array_equal(a.S_mean, b.S_mean)
        np.testing.assert_array_equal(a.mse_se, b.mse_se)


class TestBoundReport:
    def test_fields_and_csv(self, tmp_path):
        ch = random_normalized_channel(np.random.default_rng(3), 3, 0.05, 1e-5)
        rep = bound_report(ch)
        assert rep.c <= 1 and rep.a >= 1
        assert rep.lemma3_holds
        assert math.isfinite(rep.eta_inf_bound)
        write_bound_csv(tmp_path / "b.csv", [rep.row(case=0)])
        schema, rows = textio.read_csv(tmp_path / "b.csv")
        assert schema == "deeplms-bounds/1"
        assert float(rows[0]["Phi"]) == rep.Phi

    def test_normalization_invariant(self):
        ch = random_normalized_channel(np.random.default_rng(4), 3, 0.05, 1e-5)
        W_P = np.diag([2.0, 1j, -0.5])
        a, b = bound_report(ch), bound_report(ch, W_P)
        assert a.Phi == pytest.approx(b.Phi, rel=1e-12)
        assert a.f_norm1 == pytest.approx(b.f_norm1, rel=1e-12)

    def test_low_sinr(self):
        ch = random_normalized_channel(np.random.default_rng(5), 3, 0.8, 0.5)
        with pytest.raises(DomainError):
            bound_report(ch)
