import math
import warnings

import numpy as np
import pytest

import eventfdi as ef
from eventfdi import (
    AttackParams,
    AttackState,
    ConfigError,
    DomainError,
    SuccessCriteria,
    alarm_probability,
    attack_effect_update,
    feasible_delta_interval,
    feedback_attack,
    forward_attack,
    solve_optimal_params,
    trigger_probability,
)

PAPER_MU = 2.7705
PAPER_DELTA = 2.4828


@pytest.fixture(scope="module")
def criteria():
    return SuccessCriteria(M=0.99865, Upsilon=0.01)


@pytest.fixture(scope="module")
def paper_params():
    return AttackParams.scalar_bias(PAPER_MU, PAPER_DELTA, 2)


class TestAttackParams:
    def test_derived_norms(self, paper_params):
        assert paper_params.delta_bar == PAPER_DELTA
        assert paper_params.phi == pytest.approx(PAPER_DELTA)
        assert paper_params.psi == pytest.approx(PAPER_DELTA)
        assert paper_params.xi == pytest.approx(PAPER_MU**2 * PAPER_DELTA**2)

    def test_single_nonzero_component(self):
        with pytest.raises(DomainError):
            AttackParams(mu=2.0, delta=np.array([1.0, 1.0]))

    def test_mu_lower_bound(self):
        with pytest.raises(DomainError):
            AttackParams(mu=0.5, delta=np.zeros(2))

    def test_off_params(self):
        off = AttackParams.off(2)
        assert off.is_off and off.phi == 0.0 and off.xi == 0.0


class TestForwardAttack:
    def test_identity_when_off(self, rng):
        eps = rng.standard_normal(2)
        out = forward_attack(eps, AttackParams.off(2))
        assert np.allclose(out, eps, atol=1e-15)

    def test_zero_input_gives_bias(self, paper_params):
        out = forward_attack(np.zeros(2), paper_params)
        assert np.allclose(out, [PAPER_DELTA, 0.0], atol=1e-12)

    def test_moments(self, paper_params, rng):
        eps = rng.standard_normal((100_000, 2))
        out = eps / paper_params.mu + paper_params.delta
        ref = np.array([forward_attack(e, paper_params) for e in eps[:100]])
        assert np.allclose(out[:100], ref, atol=1e-14)
        assert out[:, 0].mean() == pytest.approx(PAPER_DELTA, abs=0.01)
        assert out[:, 0].var() == pytest.approx(1 / PAPER_MU**2, rel=0.03)


class TestAttackEffect:
    def test_no_transmission_propagates(self, steady, paper_model, paper_params):
        state = AttackState.zeros(3, 2)
        state.x_tilde_post = np.array([0.5, -0.2, 0.1])
        new = attack_effect_update(state, 0, np.zeros(2), steady, paper_params, paper_model)
        expected = paper_model.A @ state.x_tilde_post
        assert np.allclose(new.x_tilde_prior, expected, atol=1e-14)
        assert np.allclose(new.x_tilde_post, expected, atol=1e-14)

    def test_attack_off_keeps_zero(self, steady, paper_model, rng):
        state = AttackState.zeros(3, 2)
        off = AttackParams.off(2)
        for _ in range(20):
            state = attack_effect_update(
                state, int(rng.integers(2)), rng.standard_normal(2), steady, off, paper_model
            )
        assert np.allclose(state.x_tilde_post, 0.0, atol=1e-15)

    def test_redundant_path_consistency(self, steady):
        """The effect recursion must reproduce the direct filter difference.

        The attacker replicates the estimator's gain sequence (it knows the
        model and observes gamma), so the reference recursion here replays
        the filter covariance from the traced trigger decisions and feeds
        attack_effect_update the per-step gain bundle. Agreement is required
        at every attacked step, including excursions after silent steps.
        """
        config = ef.config_from_dict(
            ef.paper_scenario(steps=320, trajectories=1, burn_in=300)
        )
        import tempfile, os, csv

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "trace.csv")
            ef.run_scenario(config, trace_path=path)
            with open(path) as fh:
                rows = list(csv.DictReader(fh))

        from eventfdi.estimator import (
            SteadyState,
            initial_filter_state,
            measurement_update,
            time_update,
        )

        filt = initial_filter_state(config.model)
        state = AttackState.zeros(3, 2)
        for row in rows:
            k = int(row["k"])
            gamma = int(row["gamma"])
            if k > 0:
                filt = time_update(filt, config.model)
            if k >= config.attack_start:
                bundle = SteadyState(P=filt.P_prior, K=filt.K, F=filt.F, S=filt.S, L=filt.L)
                z = np.array([float(row["z_1"]), float(row["z_2"])])  # sensor-side = nominal
                state = attack_effect_update(
                    state, gamma, z, bundle, config.attack_params, config.model
                )
                diff = np.array(
                    [float(row[f"xhata_{i}"]) - float(row[f"xhat_{i}"]) for i in (1, 2, 3)]
                )
                assert np.allclose(state.x_tilde_post, diff, atol=1e-9)
            filt = measurement_update(filt, np.zeros(2), gamma, config.beta, config.model)

    def test_feedback_cancellation_identity(self, attacked_big):
        assert attacked_big.cancellation_max <= 1e-9

    def test_forward_only_innovation_drifts(self, paper_payload, steady):
        # negative control: without the feedback correction the sensor-side
        # innovation is no longer N(0, S); the bias -C A E dominates the
        # second moment about the nominal zero mean
        config = ef.config_from_dict(
            dict(paper_payload, attack_mode="forward_only", steps=2200, trajectories=5)
        )
        result = ef.run_scenario(config)
        second_moment = result.sensor_innovation_cov + np.outer(
            result.sensor_innovation_mean, result.sensor_innovation_mean
        )
        drift = abs(np.trace(second_moment) - np.trace(steady.S))
        assert drift / np.trace(steady.S) > 0.25
        assert np.linalg.norm(result.sensor_innovation_mean) > 0.1

    def test_two_channel_innovation_stays_nominal(self, attacked_big, steady):
        # positive control for the negative control above
        assert np.linalg.norm(attacked_big.sensor_innovation_mean) < 0.01
        second_moment = attacked_big.sensor_innovation_cov + np.outer(
            attacked_big.sensor_innovation_mean, attacked_big.sensor_innovation_mean
        )
        assert abs(np.trace(second_moment) - np.trace(steady.S)) / np.trace(steady.S) < 0.05


class TestFeedbackAttack:
    def test_zero_state(self, paper_model):
        assert np.array_equal(feedback_attack(AttackState.zeros(3, 2), paper_model), np.zeros(2))

    def test_formula(self, paper_model, rng):
        state = AttackState.zeros(3, 2)
        state.x_tilde_prior = rng.standard_normal(3)
        assert np.allclose(
            feedback_attack(state, paper_model),
            -paper_model.C @ state.x_tilde_prior,
            atol=1e-14,
        )


class TestTriggerProbability:
    def test_nominal_paper_rate(self):
        p = trigger_probability(AttackParams.off(2), 1.4, 2)
        assert p == pytest.approx(0.29694, abs=1e-5)

    def test_attacked_paper_rate(self, paper_params):
        p = trigger_probability(paper_params, 1.4, 2)
        assert p == pytest.approx(0.99865, abs=1e-4)

    def test_zero_threshold_triggers(self, paper_params):
        assert trigger_probability(paper_params, 0.0, 2) == 1.0

    def test_monte_carlo_agreement(self, paper_params, rng):
        eps = rng.standard_normal((200_000, 2))
        out = eps / paper_params.mu + paper_params.delta
        emp = (np.abs(out).max(axis=1) > 1.4).mean()
        p = trigger_probability(paper_params, 1.4, 2)
        assert emp == pytest.approx(p, abs=3 * math.sqrt(p * (1 - p) / len(out)))


class TestAlarmProbability:
    def test_nominal_matches_design(self):
        assert alarm_probability(AttackParams.off(3), 11.34, 3) == pytest.approx(
            0.0100, abs=5e-4
        )

    def test_attacked_paper_design_dof(self, paper_params):
        assert alarm_probability(paper_params, 11.34, 3) == pytest.approx(0.0100, abs=5e-4)

    def test_vanishes_for_large_sigma(self, paper_params):
        assert alarm_probability(paper_params, 4e4, 3) == pytest.approx(0.0, abs=1e-12)

    def test_monte_carlo_agreement_channel_dof(self, paper_params, rng):
        eps = rng.standard_normal((200_000, 2))
        out = eps / paper_params.mu + paper_params.delta
        emp = ((out * out).sum(axis=1) >= 11.34).mean()
        p = alarm_probability(paper_params, 11.34, 2)
        assert emp == pytest.approx(p, abs=3 * math.sqrt(p * (1 - p) / len(out)))


class TestSolver:
    def test_paper_reproduction(self, criteria):
        params = solve_optimal_params(1.4, 11.34, criteria, 3)
        assert params.mu == pytest.approx(PAPER_MU, abs=5e-3)
        assert params.delta_bar == pytest.approx(PAPER_DELTA, abs=5e-3)

    def test_constraint_residuals(self, criteria):
        params = solve_optimal_params(1.4, 11.34, criteria, 3)
        psi = criteria.Psi
        trig_res = params.mu * (params.delta_bar - 1.4) - psi
        marcum_res = (
            ef.marcum_q(1.5, params.mu * params.delta_bar, params.mu * math.sqrt(11.34))
            - 0.01
        )
        assert abs(trig_res) < 1e-9
        assert abs(marcum_res) < 1e-9

    def test_channel_dof_regression(self, criteria):
        # self-consistent 2-dof mode (exact integer-order Marcum), frozen anchor
        params = solve_optimal_params(1.4, 11.34, criteria, 2)
        assert params.mu == pytest.approx(2.7391335, abs=1e-6)
        assert params.delta_bar == pytest.approx(2.4952285, abs=1e-6)

    def test_constraints_hold_as_inequalities(self, criteria):
        params = solve_optimal_params(1.4, 11.34, criteria, 3, m=2)
        assert trigger_probability(params, 1.4, 2) >= criteria.M - 1e-9
        assert alarm_probability(params, 11.34, 3) <= criteria.Upsilon + 1e-9

    def test_invalid_beta(self, criteria):
        with pytest.raises(ConfigError):
            solve_optimal_params(4.0, 11.34, criteria, 3)

    def test_boundary_solution_warns(self):
        # a huge alarm budget leaves the detector constraint slack at mu = 1
        lax = SuccessCriteria(M=0.9, Upsilon=0.999)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            params = solve_optimal_params(1.4, 11.34, lax, 2)
        assert params.mu == 1.0
        assert any("inactive" in str(w.message) for w in caught)


class TestFeasibleInterval:
    def test_degenerate_at_optimum(self, criteria):
        params = solve_optimal_params(1.4, 11.34, criteria, 3)
        low, high = feasible_delta_interval(params.mu, 1.4, 11.34, criteria, 3)
        assert low == pytest.approx(params.delta_bar, abs=1e-6)
        assert high == pytest.approx(params.delta_bar, abs=1e-6)

    def test_widens_above_optimum(self, criteria):
        params = solve_optimal_params(1.4, 11.34, criteria, 3)
        low, high = feasible_delta_interval(2 * params.mu, 1.4, 11.34, criteria, 3)
        assert high - low > 0.0

    def test_sampled_biases_satisfy_both_constraints(self, criteria):
        params = solve_optimal_params(1.4, 11.34, criteria, 3)
        mu = 1.5 * params.mu
        low, high = feasible_delta_interval(mu, 1.4, 11.34, criteria, 3)
        for delta_bar in np.linspace(low, high, 7):
            candidate = AttackParams.scalar_bias(mu, float(delta_bar), 3)
            assert trigger_probability(candidate, 1.4, 3) >= criteria.M - 1e-9
            assert alarm_probability(candidate, 11.34, 3) <= criteria.Upsilon + 1e-9

    def test_below_optimum_rejected(self, criteria):
        with pytest.raises(DomainError):
            feasible_delta_interval(1.2, 1.4, 11.34, criteria, 3)
