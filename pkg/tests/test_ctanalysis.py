"""Continuous-time layer: interpolation, inclusion solvers, certificates."""

import math

import numpy as np
import pytest

import regretlab as rl
from regretlab.ctanalysis import (
    DIProblem,
    PiecewiseBetaLipschitz,
    consistency_monitor,
    delta_accumulation,
    deviation_bound,
    euler_solve,
    exp_lipschitz,
    gamma_bar,
    harmonic_times,
    interpolate,
    lyapunov_phi,
    lyapunov_psi,
    m_of_s,
    membership_defect,
    project_simplex,
    tracking_solve,
)
from regretlab.engine import NoiseRecord, extract_noise, run
from regretlab.game import best_response_value
from regretlab.seqcert import adaptive_simpson
from regretlab.smoothing import entropy_perturbation, perturbed_value

from oracles import M_TABLE, PENNIES_CENTER_VALUE_BETA1, REGRET_LIMIT, brute_force_m

PENNIES = rl.PayoffMatrix([[1.0, 0.0], [0.0, 1.0]])
PRIOR = rl.SimplexPoint([1.0 / 3.0, 2.0 / 3.0])
ENTROPY = entropy_perturbation()


def _problem(schedule):
    return DIProblem(pm=PENNIES, schedule=schedule, rho=ENTROPY)


def _vsfp_run(n_stages, seed, nu=0.5):
    sched = rl.BetaSchedule.power(nu)
    learner = rl.StrategySpec(kind="VSFP", schedule=sched)
    adversary = rl.StrategySpec(kind="AlternatingDeterministic")
    return run(PENNIES, learner, adversary, PRIOR, n_stages=n_stages, seed=seed,
               stride="full"), sched


class TestHarmonicClock:
    def test_knot_gaps_are_reciprocals(self):
        times = harmonic_times(500)
        gaps = np.diff(times)
        expected = 1.0 / np.arange(2, 501)
        assert np.allclose(gaps, expected, rtol=1e-9, atol=1e-15)

    def test_counting_inverts_knots_exactly(self):
        times = harmonic_times(2000)
        for n in (1, 2, 17, 500, 1999):
            assert m_of_s(float(times[n - 1])) == n

    def test_counting_matches_direct_search(self):
        for s in (1.0, 1.49, 1.5, 2.0, 3.0, 4.7, 6.0):
            assert m_of_s(s) == brute_force_m(s)

    def test_frozen_integer_table(self):
        for s, expected in M_TABLE.items():
            assert m_of_s(float(s)) == expected

    def test_growth_envelope(self):
        # e^{s-1} <= m(s) <= e^s - 1 on integer s
        for s in range(1, 13):
            m = m_of_s(float(s))
            assert math.exp(s - 1) <= m <= math.exp(s) - 1.0

    def test_below_first_knot(self):
        assert m_of_s(0.0) == 0
        assert m_of_s(0.999) == 0

    def test_step_envelope(self):
        assert gamma_bar(1.0) == 0.5
        assert gamma_bar(3.0) == pytest.approx(1.0 / 11.0)


class TestProjectSimplex:
    def test_already_on_simplex(self):
        v = np.array([0.2, 0.5, 0.3])
        assert np.allclose(project_simplex(v), v, atol=1e-15)

    def test_matches_quadratic_minimum(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            v = rng.normal(size=4) * 2.0
            p = project_simplex(v)
            assert p.min() >= 0.0
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            # projection optimality: no feasible direction improves distance
            for q in np.vstack([np.eye(4), np.full((1, 4), 0.25)]):
                assert np.dot(v - p, q - p) <= 1e-10


@pytest.fixture(scope="module")
def path():
    traj, _ = _vsfp_run(4000, seed=3)
    return interpolate(traj)


class TestInterpolatedPath:
    def test_knot_identity(self, path):
        for n in (1, 2, 100, 2500, 4000):
            assert np.array_equal(path.values_at(float(path.knot_times[n - 1])),
                                  path.knot_values[n - 1])

    def test_affine_midpoint(self, path):
        for n in (1, 50, 1234):
            mid = 0.5 * (path.knot_times[n - 1] + path.knot_times[n])
            expected = 0.5 * (path.knot_values[n - 1] + path.knot_values[n])
            assert np.allclose(path.values_at(float(mid)), expected,
                               rtol=0.0, atol=1e-12)

    def test_piecewise_constant_evaluator(self, path):
        s = float(path.knot_times[9]) + 1e-4
        assert np.array_equal(path.values_bar(s), path.knot_values[9])
        assert path.m(s) == 10

    def test_slope_is_weighted_increment(self, path):
        n = 77
        s = float(path.knot_times[n - 1]) + 1e-5
        expected = (path.knot_values[n] - path.knot_values[n - 1]) * (n + 1)
        assert np.array_equal(path.slope_at(s), expected)

    def test_slope_undefined_at_knots(self, path):
        with pytest.raises(ValueError, match="knot"):
            path.slope_at(float(path.knot_times[10]))

    def test_domain_enforced(self, path):
        lo, hi = path.domain
        for s in (lo - 1e-9, hi + 1e-9):
            with pytest.raises(ValueError, match="domain"):
                path.values_at(s)

    def test_interpolation_close_to_held_value(self, path):
        # |v(s) - v_bar(s)| <= diam(M) * gamma_bar(s), pathwise
        prob = _problem(rl.BetaSchedule.power(0.5))
        rng = np.random.default_rng(8)
        lo, hi = path.domain
        for s in rng.uniform(lo, hi, size=300):
            gap = np.linalg.norm(path.values_at(float(s)) - path.values_bar(float(s)))
            assert gap <= prob.diam_m * path.gamma_bar(float(s)) + 1e-12

    def test_state_accessors(self, path):
        st = path.state_at(2.5)
        assert len(st.x) == 2 and len(st.y) == 2
        first = path.knot_state(1)
        assert first.pi == pytest.approx(float(path.knot_values[0][-1]))

    def test_full_stride_required(self):
        sched = rl.BetaSchedule.power(0.5)
        learner = rl.StrategySpec(kind="VSFP", schedule=sched)
        adversary = rl.StrategySpec(kind="AlternatingDeterministic")
        traj = run(PENNIES, learner, adversary, PRIOR, n_stages=500, seed=1,
                   stride="geometric")
        with pytest.raises(ValueError, match="full"):
            interpolate(traj)


class TestDIProblem:
    def test_velocity_norm_bounded(self):
        prob = _problem(rl.BetaSchedule.constant_beta(4.0))
        rng = np.random.default_rng(2)
        for _ in range(200):
            x = rng.dirichlet(np.ones(2))
            y = rng.dirichlet(np.ones(2))
            pi = float(rng.uniform(-1.0, 1.0))
            tau = rng.dirichlet(np.ones(2))
            w = np.concatenate([x, y, [pi]])
            v = prob.velocity(float(rng.uniform(1.0, 9.0)), w, tau)
            assert np.linalg.norm(v) <= prob.f_sup_norm + 1e-12

    def test_velocity_affine_in_selection(self):
        prob = _problem(rl.BetaSchedule.power(0.5))
        w = np.array([0.4, 0.6, 0.3, 0.7, 0.2])
        t1 = np.array([1.0, 0.0])
        t2 = np.array([0.0, 1.0])
        for lam in (0.0, 0.25, 0.7, 1.0):
            mix = lam * t1 + (1 - lam) * t2
            blend = lam * prob.velocity(2.0, w, t1) + (1 - lam) * prob.velocity(2.0, w, t2)
            assert np.allclose(prob.velocity(2.0, w, mix), blend, atol=1e-14)

    def test_smoothed_value_routes_agree(self):
        prob = _problem(rl.BetaSchedule.constant_beta(3.0))
        rng = np.random.default_rng(4)
        for _ in range(25):
            y = rl.SimplexPoint(rng.dirichlet(np.ones(2)))
            direct = prob.smoothed_value(3.0, y.coords)
            reference = perturbed_value(PENNIES, y, 3.0, ENTROPY)
            assert direct == pytest.approx(reference, abs=1e-10)

    def test_gain_follows_the_clock(self):
        prob = _problem(rl.BetaSchedule.power(0.5))
        assert prob.beta_at(1.0) == 1.0
        assert prob.beta_at(3.0) == pytest.approx(math.sqrt(10))
        assert prob.beta_at(0.2) == 1.0  # floor before the first knot

    def test_geometry_constants(self):
        prob = _problem(rl.BetaSchedule.constant_beta(1.0))
        assert prob.diam_m == pytest.approx(math.sqrt(2 + 2 + 4))
        assert prob.f_sup_norm == pytest.approx(4.0 + math.sqrt(2.0))

    def test_membership_predicate(self):
        prob = _problem(rl.BetaSchedule.constant_beta(1.0))
        assert prob.contains(np.array([0.5, 0.5, 0.3, 0.7, 0.9]))
        assert not prob.contains(np.array([0.5, 0.5, 0.3, 0.7, 1.5]))
        assert not prob.contains(np.array([0.7, 0.5, 0.3, 0.7, 0.0]))


class TestLyapunov:
    def test_clamped_at_saturating_payoff(self):
        prob = _problem(rl.BetaSchedule.constant_beta(5.0))
        v = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.5, 0.5]),
                           PENNIES.sup_norm)
        assert lyapunov_phi(prob, 2.0, v) == 0.0

    def test_frozen_center_value(self):
        prob = _problem(rl.BetaSchedule.constant_beta(1.0))
        v = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.5, 0.5]), 0.0)
        assert lyapunov_phi(prob, 1.0, v) == pytest.approx(
            PENNIES_CENTER_VALUE_BETA1, abs=1e-12)

    def test_independent_of_learner_block(self):
        prob = _problem(rl.BetaSchedule.power(0.5))
        y = rl.SimplexPoint([0.3, 0.7])
        a = rl.StateTriple(rl.SimplexPoint([1.0, 0.0]), y, 0.1)
        b = rl.StateTriple(rl.SimplexPoint([0.2, 0.8]), y, 0.1)
        assert lyapunov_phi(prob, 4.0, a) == lyapunov_phi(prob, 4.0, b)

    def test_converges_to_unsmoothed_gap(self):
        # 0 <= Phi - max(0, Pi(y) - pi) <= log(2)/beta_{m(s)}
        prob = _problem(rl.BetaSchedule.power(0.5))
        for s in (1.0, 3.2, 7.5):
            beta = prob.beta_at(s)
            for y0 in np.linspace(0.0, 1.0, 11):
                y = rl.SimplexPoint([y0, 1.0 - y0])
                for pi in (-1.0, -0.3, 0.0, 0.4, 1.0):
                    v = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), y, pi)
                    phi = lyapunov_phi(prob, s, v)
                    g = max(0.0, best_response_value(PENNIES, y) - pi)
                    assert -1e-12 <= phi - g <= math.log(2.0) / beta + 1e-12

    def test_lipschitz_uniform_in_gain(self):
        # difference quotients stay below |pi|_inf + 1 for every beta
        rng = np.random.default_rng(12)
        L = PENNIES.sup_norm + 1.0
        for beta in (1.0, 10.0, 100.0):
            prob = _problem(rl.BetaSchedule.constant_beta(beta))
            for _ in range(60):
                y1 = rng.dirichlet(np.ones(2))
                y2 = rng.dirichlet(np.ones(2))
                p1, p2 = rng.uniform(-1.0, 1.0, size=2)
                v1 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint(y1), p1)
                v2 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint(y2), p2)
                diff = abs(lyapunov_phi(prob, 2.0, v1) - lyapunov_phi(prob, 2.0, v2))
                dist = np.sum(np.abs(y1 - y2)) + abs(p1 - p2)
                assert diff <= L * dist + 1e-12

    def test_negative_time_rejected(self):
        prob = _problem(rl.BetaSchedule.constant_beta(1.0))
        v = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.5, 0.5]), 0.0)
        with pytest.raises(ValueError, match="nonnegative"):
            lyapunov_psi(prob, -0.1, v)


class TestEulerSolve:
    def test_constant_selection_exponential_contraction(self):
        # y' = tau - y with constant tau: closed form, first-order accuracy
        prob = _problem(rl.BetaSchedule.constant_beta(2.0))
        tau = np.array([0.25, 0.75])
        w0 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.9, 0.1]), 0.0)
        y0 = np.array([0.9, 0.1])
        exact = tau + (y0 - tau) * math.exp(-2.0)

        errs = []
        for h in (2e-3, 1e-3):
            sol = euler_solve(prob, w0, 1.0, 3.0, h, rl.SimplexPoint(tau))
            y_end = sol.states[-1][2:4]
            errs.append(float(np.max(np.abs(y_end - exact))))
        assert errs[1] < 5 * 1e-3
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.2)  # halving h halves error

    def test_equilibrium_is_stationary(self):
        beta = 2.0
        prob = _problem(rl.BetaSchedule.constant_beta(beta))
        tau = np.array([0.3, 0.7])
        xstar = prob.smooth_response(beta, tau)
        pi = float(xstar @ PENNIES.entries @ tau)
        w0 = np.concatenate([xstar, tau, [pi]])
        sol = euler_solve(prob, w0, 1.0, 2.0, 1e-2, rl.SimplexPoint(tau))
        drift = np.max(np.abs(sol.states - sol.states[0]))
        assert drift <= 1e-9

    def test_increments_match_selected_velocity(self):
        prob = _problem(rl.BetaSchedule.power(0.5))
        w0 = rl.StateTriple(rl.SimplexPoint([0.2, 0.8]), rl.SimplexPoint([0.6, 0.4]), -0.3)
        sol = euler_solve(prob, w0, 1.0, 2.0, 1e-2, "worst_phi")
        for i in range(0, sol.times.size - 1, 7):
            dt = float(sol.times[i + 1] - sol.times[i])
            f = prob.velocity(float(sol.times[i]), sol.states[i], sol.selections[i])
            assert np.max(np.abs(sol.states[i + 1] - sol.states[i] - dt * f)) <= 1e-12

    def test_states_stay_in_play_region(self):
        prob = _problem(rl.BetaSchedule.power(0.3))
        w0 = rl.StateTriple(rl.SimplexPoint([1.0, 0.0]), rl.SimplexPoint([0.0, 1.0]), 1.0)
        sol = euler_solve(prob, w0, 1.0, 5.0, 5e-3, "worst_phi")
        for w in sol.states[:: 50]:
            assert prob.contains(w, tol=1e-9)

    def test_gap_decay_along_solutions(self):
        # Psi(t+T) <= e^{-T} Psi(t) + 1/beta_{m(t)} + 10h for every policy
        h = 2e-3
        prob = _problem(rl.BetaSchedule.power(0.5))
        w0 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.9, 0.1]), -0.5)
        policies = [rl.SimplexPoint([0.5, 0.5]), "worst_phi",
                    lambda s, w: rl.SimplexPoint([0.8, 0.2])]
        for policy in policies:
            sol = euler_solve(prob, w0, 1.0, 3.0, h, policy)
            psi = sol.psi_series()
            for t in (1.0, 2.0):
                i0 = int(np.argmin(np.abs(sol.times - t)))
                i1 = int(np.argmin(np.abs(sol.times - (t + 1.0))))
                lhs = psi[i1]
                rhs = math.exp(-1.0) * psi[i0] + 1.0 / prob.beta_at(float(sol.times[i0]))
                assert lhs <= rhs + 10 * h

    def test_supplied_selection_array(self):
        prob = _problem(rl.BetaSchedule.constant_beta(1.0))
        w0 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.5, 0.5]), 0.0)
        n_steps = 100
        taus = np.tile([0.25, 0.75], (n_steps, 1))
        via_array = euler_solve(prob, w0, 1.0, 2.0, 1e-2, taus)
        via_const = euler_solve(prob, w0, 1.0, 2.0, 1e-2, rl.SimplexPoint([0.25, 0.75]))
        assert np.array_equal(via_array.states, via_const.states)

    def test_validation(self):
        prob = _problem(rl.BetaSchedule.constant_beta(1.0))
        w0 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.5, 0.5]), 0.0)
        with pytest.raises(ValueError, match="positive"):
            euler_solve(prob, w0, 1.0, 2.0, 0.0, "worst_phi")
        with pytest.raises(ValueError, match="b > a"):
            euler_solve(prob, w0, 2.0, 1.0, 1e-2, "worst_phi")
        with pytest.raises(ValueError, match="policy"):
            euler_solve(prob, w0, 1.0, 2.0, 1e-2, "nonsense")
        with pytest.raises(ValueError, match="shape"):
            euler_solve(prob, w0, 1.0, 2.0, 1e-2, np.zeros((3, 2)))
        with pytest.raises(ValueError, match="not in M"):
            euler_solve(prob, np.array([0.5, 0.5, 0.3, 0.7, 9.0]), 1.0, 2.0,
                        1e-2, "worst_phi")

    def test_solution_accessors(self):
        prob = _problem(rl.BetaSchedule.constant_beta(1.0))
        w0 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.9, 0.1]), 0.0)
        sol = euler_solve(prob, w0, 1.0, 2.0, 1e-2, rl.SimplexPoint([0.5, 0.5]))
        assert np.array_equal(sol.values_at(1.0), sol.states[0])
        assert np.array_equal(sol.values_at(2.0), sol.states[-1])
        mid = 0.5 * (sol.times[3] + sol.times[4])
        assert np.allclose(sol.values_at(float(mid)),
                           0.5 * (sol.states[3] + sol.states[4]), atol=1e-12)
        with pytest.raises(ValueError, match="domain"):
            sol.values_at(0.5)


class TestTrackingSolve:
    def test_reproduces_own_solution(self):
        prob = _problem(rl.BetaSchedule.constant_beta(2.0))
        w0 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.8, 0.2]), 0.2)
        h = 1e-3
        target = euler_solve(prob, w0, 1.0, 2.0, h, rl.SimplexPoint([0.3, 0.7]))
        tracked = tracking_solve(prob, target, 1.0, 2.0, h)
        dev = np.max(np.linalg.norm(tracked.states - target.states, axis=1))
        assert dev <= 10 * h

    def test_payoff_offset_decays(self):
        # target shifted by d in the payoff coordinate only: deviation from the
        # true solution never exceeds d, and the Gronwall envelope covers it
        prob = _problem(rl.BetaSchedule.constant_beta(1.0))
        w0 = rl.StateTriple(rl.SimplexPoint([0.5, 0.5]), rl.SimplexPoint([0.8, 0.2]), 0.0)
        h = 1e-3
        base = euler_solve(prob, w0, 1.0, 2.0, h, rl.SimplexPoint([0.3, 0.7]))
        d = 0.05
        shifted_states = base.states.copy()
        shifted_states[:, -1] += d
        target = type(base)(times=base.times, states=shifted_states,
                            selections=base.selections, problem=prob)
        tracked = tracking_solve(prob, target, 1.0, 2.0, h)
        dev_true = np.max(np.linalg.norm(tracked.states - base.states, axis=1))
        assert dev_true <= d + 10 * h
        L = PiecewiseBetaLipschitz(2.0, rl.BetaSchedule.constant_beta(1.0))
        assert dev_true <= deviation_bound(L, d, d, 1.0, 2.0) + 10 * h

    def test_stochastic_window_within_bound(self):
        traj, sched = _vsfp_run(2000, seed=21)
        path = interpolate(traj)
        noise = extract_noise(traj)
        prob = _problem(sched)
        nu = 0.5
        k = 5
        T = 1.0 / (nu * np.arange(1, k + 2))
        S = np.cumsum(T)
        a, b = float(S[k - 1]), float(S[k])
        h = 1e-3
        tracked = tracking_solve(prob, path, a, b, h)
        dev = max(np.linalg.norm(tracked.values_at(float(s)) - path.values_at(float(s)))
                  for s in np.linspace(a, b, 101))
        delta = delta_accumulation(noise, path, a, b - a)
        R = deviation_bound(exp_lipschitz(nu), prob.diam_m * gamma_bar(a), delta, a, b)
        assert dev <= R + 10 * h

    def test_window_must_be_covered(self):
        traj, sched = _vsfp_run(300, seed=2)
        path = interpolate(traj)
        prob = _problem(sched)
        with pytest.raises(ValueError, match="covered"):
            tracking_solve(prob, path, 1.0, 50.0, 1e-2)


class TestDeltaAccumulation:
    @staticmethod
    def _zero_noise(path):
        return NoiseRecord(values=np.zeros((path.n_knots, 5)), n_rows=2, n_cols=2,
                           sup_norm_bound=4.0)

    def test_zero_noise_gives_zero(self):
        traj, _ = _vsfp_run(1000, seed=5)
        path = interpolate(traj)
        noise = self._zero_noise(path)
        for t, T in ((1.0, 0.0), (2.0, 1.5), (5.0, 2.0)):
            assert delta_accumulation(noise, path, t, T) == 0.0

    def test_single_increment_weighted_by_step(self):
        traj, _ = _vsfp_run(1000, seed=5)
        path = interpolate(traj)
        values = np.zeros((path.n_knots, 5))
        k = 40                       # U_40 lives on [tau_39, tau_40), weight 1/40
        u = np.array([0.6, -0.6, 0.3, -0.3, 1.2])
        values[k - 1] = u
        noise = NoiseRecord(values=values, n_rows=2, n_cols=2, sup_norm_bound=4.0)
        t = float(path.knot_times[k - 2] - 0.01)
        out = delta_accumulation(noise, path, t, 0.5)
        assert out == pytest.approx(np.linalg.norm(u) / k, rel=1e-12)

    def test_window_edge_clipping(self):
        traj, _ = _vsfp_run(1000, seed=5)
        path = interpolate(traj)
        values = np.zeros((path.n_knots, 5))
        k = 40
        values[k - 1, 0] = 1.0
        noise = NoiseRecord(values=values, n_rows=2, n_cols=2, sup_norm_bound=4.0)
        # window ends halfway through [tau_39, tau_40)
        t0 = float(path.knot_times[k - 2])
        half = 0.5 / k
        assert delta_accumulation(noise, path, t0, half) == pytest.approx(half, rel=1e-12)

    def test_monotone_in_window_length(self):
        traj, _ = _vsfp_run(2000, seed=9)
        path = interpolate(traj)
        noise = extract_noise(traj)
        vals = [delta_accumulation(noise, path, 3.0, T) for T in (0.25, 0.5, 1.0, 2.0)]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_median_decay_with_time(self):
        # unit windows starting later accumulate less noise; the median over
        # seeds should decay at least like e^{-t/2} up to a 1.5x slack
        sched = rl.BetaSchedule.constant_beta(4.0)
        learner = rl.StrategySpec(kind="SFP", schedule=sched)
        adversary = rl.StrategySpec(kind="IIDMixed",
                                    fixed_mix=rl.SimplexPoint([0.5, 0.5]))
        ts = np.arange(2.0, 8.0)
        samples = {t: [] for t in ts}
        for seed in range(16):
            traj = run(PENNIES, learner, adversary, PRIOR, n_stages=3000,
                       seed=seed, stride="full")
            path = interpolate(traj)
            noise = extract_noise(traj)
            for t in ts:
                samples[t].append(delta_accumulation(noise, path, float(t), 1.0))
        medians = np.array([np.median(samples[t]) for t in ts])
        envelope = 1.5 * medians[0] * np.exp(-(ts - ts[0]) / 2.0)
        assert np.all(medians <= envelope)

    def test_stage_count_mismatch_rejected(self):
        traj, _ = _vsfp_run(500, seed=5)
        path = interpolate(traj)
        bad = NoiseRecord(values=np.zeros((400, 5)), n_rows=2, n_cols=2,
                          sup_norm_bound=4.0)
        with pytest.raises(ValueError, match="stage counts"):
            delta_accumulation(bad, path, 2.0, 1.0)


class TestDeviationBound:
    def test_zero_inputs_give_zero(self):
        assert deviation_bound(exp_lipschitz(0.5), 0.0, 0.0, 1.0, 2.0) == 0.0

    def test_zero_rate_returns_initial_gap(self):
        R = deviation_bound(lambda s: np.zeros_like(np.asarray(s, dtype=float)),
                            0.3, 0.7, 1.0, 4.0)
        assert R == pytest.approx(0.7, abs=1e-12)

    def test_exponential_envelope_closed_form(self):
        nu = 0.5
        a, b = 1.0, 3.0
        int_exact = (math.exp(nu * b) - math.exp(nu * a)) / nu
        quad = adaptive_simpson(exp_lipschitz(nu), a, b)
        assert quad == pytest.approx(int_exact, rel=1e-8)
        R = deviation_bound(exp_lipschitz(nu), 0.0, 1.0, a, b)
        assert R == pytest.approx(math.exp(int_exact), rel=1e-7)

    def test_window_growth_factor_uniform_in_k(self):
        # exp(int_{S_k}^{S_{k+1}} e^{nu s} ds) <= exp(T_{k+1} e^{nu S_{k+1}}),
        # and the majorant stays bounded by its k=1 value
        nu = 0.5
        T = 1.0 / (nu * np.arange(1, 102))
        S = np.cumsum(T)
        majorants = []
        for k in range(1, 101):
            a, b = float(S[k - 1]), float(S[k])
            growth = math.exp(adaptive_simpson(exp_lipschitz(nu), a, b))
            majorant = math.exp(T[k] * math.exp(nu * b))
            assert growth <= majorant * (1.0 + 1e-9)
            majorants.append(majorant)
        assert max(majorants) == majorants[0]

    def test_piecewise_gain_envelope_integral(self):
        sched = rl.BetaSchedule.power(0.5)
        L = PiecewiseBetaLipschitz(1.5, sched)
        # within one gain interval the integrand is constant
        times = harmonic_times(12)
        a = float(times[9]) + 1e-4          # inside [tau_10, tau_11)
        b = float(times[10]) - 1e-4
        assert L.integral(a, b) == pytest.approx((b - a) * 1.5 * 10 ** 0.5, rel=1e-12)
        # across knots the exact sum matches quadrature on the smooth pieces
        a, b = 2.0, 5.0
        manual = 0.0
        n = m_of_s(a)
        s = a
        while s < b:
            nxt = min(float(harmonic_times(n + 1)[n]), b)
            manual += (nxt - s) * 1.5 * n ** 0.5
            s = nxt
            n += 1
        assert L.integral(2.0, 5.0) == pytest.approx(manual, rel=1e-12)

    def test_piecewise_envelope_calls(self):
        sched = rl.BetaSchedule.power(0.5)
        L = PiecewiseBetaLipschitz(2.0, sched)
        assert L(1.4) == pytest.approx(2.0 * 1.0)     # m = 1 before tau_2 = 1.5
        assert L(1.5) == pytest.approx(2.0 * math.sqrt(2.0))
        assert L(3.0) == pytest.approx(2.0 * math.sqrt(10))
        arr = L(np.array([1.4, 3.0]))
        assert np.allclose(arr, [2.0, 2.0 * math.sqrt(10)])

    def test_validation(self):
        with pytest.raises(ValueError, match="nonnegative"):
            deviation_bound(exp_lipschitz(0.5), -0.1, 0.0, 1.0, 2.0)
        with pytest.raises(ValueError, match="nu"):
            exp_lipschitz(1.2)
        with pytest.raises(ValueError, match="nonnegative"):
            PiecewiseBetaLipschitz(-1.0, rl.BetaSchedule.power(0.5))


class TestMembership:
    def test_denoised_slope_in_velocity_set(self):
        traj, sched = _vsfp_run(5000, seed=11)
        path = interpolate(traj)
        noise = extract_noise(traj)
        prob = _problem(sched)
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, path.n_knots - 1))
            s = float(path.knot_times[n - 1]) + float(rng.uniform(0.1, 0.9)) / (n + 1)
            defect, tau = membership_defect(path, noise, prob, s)
            worst = max(worst, defect)
            assert tau.min() >= -1e-9
            assert tau.sum() == pytest.approx(1.0, abs=1e-9)
        assert worst <= 1e-9

    def test_constant_gain_run_also_exact(self):
        sched = rl.BetaSchedule.constant_beta(4.0)
        learner = rl.StrategySpec(kind="SFP", schedule=sched)
        adversary = rl.StrategySpec(kind="IIDMixed",
                                    fixed_mix=rl.SimplexPoint([0.4, 0.6]))
        traj = run(PENNIES, learner, adversary, PRIOR, n_stages=3000, seed=6,
                   stride="full")
        path = interpolate(traj)
        noise = extract_noise(traj)
        prob = _problem(sched)
        for n in (10, 100, 1000, 2500):
            s = float(path.knot_times[n - 1]) + 0.5 / (n + 1)
            defect, _ = membership_defect(path, noise, prob, s)
            assert defect <= 1e-9

    def test_knot_time_rejected(self):
        traj, sched = _vsfp_run(500, seed=11)
        path = interpolate(traj)
        noise = extract_noise(traj)
        prob = _problem(sched)
        with pytest.raises(ValueError, match="knot"):
            membership_defect(path, noise, prob, float(path.knot_times[20]))


class TestConsistencyMonitor:
    def test_stationary_saturated_run_vanishes_with_gain(self):
        # both players pinned to the payoff-1 cell: pi_bar = Pi(y_bar) = 1,
        # so the observed gap is exactly the smoothing excess <= log2/beta
        sched = rl.BetaSchedule.power(0.5)
        learner = rl.StrategySpec(kind="IIDMixed", fixed_mix=rl.SimplexPoint([1.0, 0.0]))
        adversary = rl.StrategySpec(kind="IIDMixed", fixed_mix=rl.SimplexPoint([1.0, 0.0]))
        traj = run(PENNIES, learner, adversary, PRIOR, n_stages=4000, seed=0,
                   stride="full")
        prob = _problem(sched)
        report = consistency_monitor(traj, prob, nu=0.5)
        for phi, s in zip(report.phi_observed, report.s_values):
            assert phi <= math.log(2.0) / prob.beta_at(float(s)) + 1e-12
        assert report.decays
        assert report.phi_observed[-1] < 0.01

    def test_consistent_play_decays(self):
        for seed in (1, 2, 3):
            traj, sched = _vsfp_run(6000, seed=seed)
            report = consistency_monitor(traj, _problem(sched), nu=0.5, k_max=50)
            assert report.ks[-1] == 50
            assert report.phi_observed[-1] < 0.05

    def test_growing_gain_counterexample_plateaus(self):
        N = 200_000
        table = rl.BetaSchedule.from_table(np.arange(1, N + 1, dtype=float))
        learner = rl.StrategySpec(kind="VSFP", schedule=table, use_prior_blending=True)
        adversary = rl.StrategySpec(kind="AlternatingDeterministic")
        traj = run(PENNIES, learner, adversary, PRIOR, n_stages=N, seed=11,
                   stride="full")
        prob = _problem(table)
        report = consistency_monitor(traj, prob, nu=0.5)
        assert not report.decays
        assert report.observed_tail == pytest.approx(REGRET_LIMIT, abs=0.02)
        assert report.observed_tail > 0.1

    def test_grid_covers_horizon(self):
        traj, sched = _vsfp_run(3000, seed=4)
        report = consistency_monitor(traj, _problem(sched), nu=0.5)
        horizon = interpolate(traj).domain[1]
        K = int(report.ks[-1])
        assert report.s_values[-1] <= horizon
        next_s = report.s_values[-1] + 1.0 / (0.5 * (K + 1))
        assert next_s > horizon

    def test_schedule_exponent_mismatch_rejected(self):
        traj, sched = _vsfp_run(500, seed=4)
        with pytest.raises(ValueError, match="exponent"):
            consistency_monitor(traj, _problem(sched), nu=0.3)

    def test_horizon_too_short_rejected(self):
        traj, sched = _vsfp_run(500, seed=4)
        with pytest.raises(ValueError, match="horizon"):
            consistency_monitor(traj, _problem(sched), nu=0.5, k_max=500)

    def test_report_serialization(self, tmp_path):
        traj, sched = _vsfp_run(2000, seed=4)
        report = consistency_monitor(traj, _problem(sched), nu=0.5)
        out = tmp_path / "certificate.csv"
        report.to_csv(out)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "k,S_k,Phi,H_k,eta_k,bound"
        assert len(lines) == int(report.ks[-1]) + 1
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == 1.0
        assert first[2] == pytest.approx(float(report.phi_observed[0]))
        text = report.summary()
        assert "observed gap tail" in text
        assert ("pass" in text) or ("FAIL" in text)
