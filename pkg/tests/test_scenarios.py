import math

import numpy as np
import pytest

from qmetro import (GateModel, ProbeFamily, Scenario, bell_povm, cs_gate_povm,
                    evaluate_kappa, haar_random_basis, kappa_scan,
                    optimize_kappa, product_projective_povm,
                    random_collective_search)
from qmetro.scenarios import ProductProjectiveGenerator, default_delta_grid


def ideal_bell_scenario(**overrides):
    kwargs = dict(
        family=ProbeFamily.phase_dephasing(copies=2),
        measurement=bell_povm(),
        free_inputs=("phi", "xi_1", "xi_2"),
        fixed_inputs={},
        sweep="delta")
    kwargs.update(overrides)
    return Scenario(**kwargs)


def ideal_kappa(delta):
    # at the optimal phases the two-copy Bell statistics give
    # kappa = c^2 + c^2/(1 + c^2) with c^2 = exp(-2 delta^2)
    c2 = math.exp(-2.0 * delta * delta)
    return c2 + c2 / (1.0 + c2)


class TestScenarioValidation:
    def test_free_fixed_overlap_rejected(self):
        with pytest.raises(ValueError):
            ideal_bell_scenario(free_inputs=("phi",),
                                fixed_inputs={"phi": 0.0, "xi_1": 0.0, "xi_2": 0.0})

    def test_missing_inputs_rejected(self):
        with pytest.raises(ValueError):
            ideal_bell_scenario(free_inputs=("phi",), fixed_inputs={})

    def test_two_phase_requires_shared_phase(self):
        with pytest.raises(ValueError):
            Scenario(family=ProbeFamily.two_phase(copies=2),
                     measurement=bell_povm(),
                     free_inputs=("xi_1", "xi_2"),
                     fixed_inputs={"phi_y": 0.4, "phi_z": 0.3},
                     sweep="phi_z")

    def test_unused_sweep_rejected(self):
        with pytest.raises(ValueError):
            Scenario(family=ProbeFamily.two_phase(copies=2),
                     measurement=bell_povm(),
                     free_inputs=("xi",),
                     fixed_inputs={"phi_y": 0.4, "phi_z": 0.3},
                     sweep="delta")


class TestOptimizeKappa:
    def test_matches_analytic_optimum_at_small_delta(self):
        out = optimize_kappa(ideal_bell_scenario(), 0.3, budget=2000)
        assert abs(out.result.kappa - ideal_kappa(0.3)) < 1e-5
        assert out.result.kappa > 1.0

    def test_no_advantage_beyond_crossing(self):
        # the ideal curve crosses 1 near delta = 0.4905
        out = optimize_kappa(ideal_bell_scenario(), 0.5, budget=2000)
        assert abs(out.result.kappa - ideal_kappa(0.5)) < 1e-5
        assert out.result.kappa < 1.0

    def test_deterministic_for_fixed_budget(self):
        a = optimize_kappa(ideal_bell_scenario(), 0.4, budget=600)
        b = optimize_kappa(ideal_bell_scenario(), 0.4, budget=600)
        assert a.result.kappa == b.result.kappa
        assert a.settings == b.settings

    def test_never_exceeds_parameter_count(self):
        for delta in (0.05, 0.3, 1.0):
            out = optimize_kappa(ideal_bell_scenario(), delta, budget=400)
            assert out.result.kappa <= 2.0 + 1e-6

    def test_product_measurement_bounded_by_one(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            angles = (rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi),
                      rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
            scenario = ideal_bell_scenario(
                measurement=product_projective_povm(angles))
            out = optimize_kappa(scenario, 0.4, budget=300)
            assert out.result.kappa <= 1.0 + 1e-9

    def test_two_phase_bell_bounded_by_one(self):
        scenario = Scenario(family=ProbeFamily.two_phase(copies=2),
                            measurement=bell_povm(),
                            free_inputs=("xi",),
                            fixed_inputs={"phi_y": 0.4},
                            sweep="phi_z")
        out = optimize_kappa(scenario, 0.3, budget=400)
        assert out.result.kappa <= 1.0 + 1e-6

    def test_free_measurement_angles_via_generator(self):
        # equal analysis azimuths would leave both copies' derivative
        # directions parallel (singular Fisher matrix), so free the azimuths
        scenario = Scenario(
            family=ProbeFamily.phase_dephasing(copies=2),
            measurement=ProductProjectiveGenerator(),
            free_inputs=("eta_1", "eta_2"),
            fixed_inputs={"phi": 0.3, "xi_1": 0.0, "xi_2": 0.0,
                          "theta_1": math.pi / 2, "theta_2": math.pi / 2},
            sweep="delta")
        out = optimize_kappa(scenario, 0.4, budget=150)
        assert 0.0 < out.result.kappa <= 1.0 + 1e-9
        assert set(out.settings) == {"eta_1", "eta_2"}

    def test_singular_everywhere_raises_with_diagnostics(self):
        # frozen equal azimuths: rank-1 Fisher matrix at every grid point
        scenario = Scenario(
            family=ProbeFamily.phase_dephasing(copies=2),
            measurement=ProductProjectiveGenerator(),
            free_inputs=("theta_1", "theta_2"),
            fixed_inputs={"phi": 0.3, "xi_1": 0.0, "xi_2": 0.0,
                          "eta_1": 0.0, "eta_2": 0.0},
            sweep="delta")
        with pytest.raises(RuntimeError, match="singular"):
            optimize_kappa(scenario, 0.4, budget=60)

    def test_budget_validated(self):
        with pytest.raises(ValueError):
            optimize_kappa(ideal_bell_scenario(), 0.3, budget=0)


class TestKappaScan:
    def test_curve_matches_analytic_form(self):
        grid = np.array([0.1, 0.3, 0.7, 1.2])
        curve = kappa_scan(ideal_bell_scenario(), grid, budget=1200)
        expected = [ideal_kappa(d) for d in grid]
        assert np.abs(curve.kappa_values - expected).max() < 1e-4
        assert all(err is None for err in curve.failed)

    def test_reversal_invariance(self):
        grid = np.array([0.2, 0.6, 1.1])
        forward = kappa_scan(ideal_bell_scenario(), grid, budget=400)
        backward = kappa_scan(ideal_bell_scenario(), grid[::-1].copy()[::-1],
                              budget=400)
        assert np.array_equal(forward.kappa_values, backward.kappa_values)

    def test_contributions_bounded_by_one(self):
        grid = np.array([0.1, 0.4, 0.9])
        curve = kappa_scan(ideal_bell_scenario(), grid, budget=800)
        assert curve.per_parameter.max() <= 1.0 + 1e-9

    def test_rows_layout(self):
        curve = kappa_scan(ideal_bell_scenario(), [0.3, 0.8], budget=200)
        header, rows = curve.rows()
        assert header[:2] == ["delta", "kappa"]
        assert header[2:4] == ["contrib_phi", "contrib_delta"]
        assert set(header[4:]) == {"best_phi", "best_xi_1", "best_xi_2"}
        assert len(rows) == 2 and len(rows[0]) == len(header)

    def test_grid_validated(self):
        with pytest.raises(ValueError):
            kappa_scan(ideal_bell_scenario(), [], budget=100)
        with pytest.raises(ValueError):
            kappa_scan(ideal_bell_scenario(), [0.5, 0.2], budget=100)

    def test_default_grid(self):
        grid = default_delta_grid()
        assert len(grid) == 40
        assert abs(grid[0] - 0.02) < 1e-12
        assert abs(grid[-1] - 3.0) < 1e-12


class TestVisibilityDegradation:
    def test_low_delta_information_drop(self):
        ideal = optimize_kappa(ideal_bell_scenario(), 0.05, budget=800)
        degraded_povm, _ = cs_gate_povm(GateModel(visibility=0.9))
        degraded = optimize_kappa(
            ideal_bell_scenario(measurement=degraded_povm), 0.05, budget=800)
        assert ideal.result.kappa - degraded.result.kappa > 0.1


class TestDecoherenceTail:
    def test_entangling_strategy_needs_coherence(self):
        # at delta = 3 the Bell strategy collapses while a split product
        # strategy (one copy read for the phase, one for the dephasing)
        # still attains kappa = 1
        bell_out = optimize_kappa(ideal_bell_scenario(), 3.0, budget=600)
        product = Scenario(
            family=ProbeFamily.phase_dephasing(copies=2),
            measurement=ProductProjectiveGenerator(),
            free_inputs=("eta_1", "eta_2"),
            fixed_inputs={"phi": 0.0, "xi_1": 0.0, "xi_2": 0.0,
                          "theta_1": math.pi / 2, "theta_2": math.pi / 2},
            sweep="delta")
        product_out = optimize_kappa(product, 3.0, budget=350)
        assert bell_out.result.kappa < 0.01
        assert product_out.result.kappa > 0.9
        assert product_out.result.kappa <= 1.0 + 1e-9


class TestCollectiveSearch:
    def test_deterministic(self):
        family = ProbeFamily.two_phase(copies=2)
        a = random_collective_search(family, trials=20, seed=5)
        b = random_collective_search(family, trials=20, seed=5)
        assert a.max_kappa == b.max_kappa
        assert a.trial_index == b.trial_index
        assert a.xi == b.xi
        assert np.array_equal(a.basis, b.basis)

    def test_single_trial_is_bounded(self):
        family = ProbeFamily.two_phase(copies=2)
        result = random_collective_search(family, trials=1, seed=11)
        assert 0.0 <= result.max_kappa <= 1.0 + 1e-6

    def test_requires_two_copy_two_phase(self):
        with pytest.raises(ValueError):
            random_collective_search(ProbeFamily.two_phase(copies=1),
                                     trials=1, seed=0)
        with pytest.raises(ValueError):
            random_collective_search(ProbeFamily.phase_dephasing(copies=2),
                                     trials=1, seed=0)

    def test_haar_basis_is_orthonormal(self):
        rng = np.random.default_rng(0)
        basis = haar_random_basis(rng, 4)
        assert np.abs(basis.conj().T @ basis - np.eye(4)).max() < 1e-12

    def test_haar_average_projector_is_uniform(self):
        rng = np.random.default_rng(123)
        total = np.zeros((4, 4), dtype=complex)
        samples = 100_000
        for _ in range(samples):
            basis = haar_random_basis(rng, 4)
            total += np.outer(basis[:, 0], basis[:, 0].conj())
        assert np.abs(total / samples - np.eye(4) / 4.0).max() < 5e-3


class TestEvaluateKappa:
    def test_asymmetric_input_phases_supported(self):
        scenario = ideal_bell_scenario(
            free_inputs=(), fixed_inputs={"phi": 0.89, "xi_1": 0.0, "xi_2": 0.10})
        result = evaluate_kappa(scenario, {"delta": 0.3})
        assert 0.0 < result.kappa <= 1.5 + 1e-9

    def test_shared_xi_alias_for_dephasing(self):
        shared = ideal_bell_scenario(
            free_inputs=(), fixed_inputs={"phi": 0.2, "xi": 0.4})
        split = ideal_bell_scenario(
            free_inputs=(), fixed_inputs={"phi": 0.2, "xi_1": 0.4, "xi_2": 0.4})
        a = evaluate_kappa(shared, {"delta": 0.5})
        b = evaluate_kappa(split, {"delta": 0.5})
        assert abs(a.kappa - b.kappa) < 1e-12
