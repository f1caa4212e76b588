import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sidar.lambda_opt import GridSpec, Region, derivative, dp_oracle, objective, solve_finite, worst_energy
from sidar.model import ProblemInstance, example_system
from sidar.riccati import lambda_lower_bound

from conftest import instance, random_system


def test_objective_examples():
    assert objective(1.7, instance(1), 2) == pytest.approx(0.85, abs=1e-15)
    assert objective(1.5, instance(1, 2.0), 2) == pytest.approx(4.25, abs=1e-12)
    assert objective(1.0, instance(1, 2.0), 2) == pytest.approx(4.5, abs=1e-12)


def test_derivative_examples():
    assert derivative(1.3, instance(1), 2) == 0.5
    assert abs(derivative(1.5, instance(1, 2.0), 2)) <= 1e-14
    assert derivative(2.0, instance(1, 2.0), 2) == pytest.approx(5 / 18, abs=1e-14)


def test_derivative_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = random_system(rng)
        inst = ProblemInstance(s, rng.normal(size=s.n), float(rng.uniform(0.3, 3)))
        N = int(rng.integers(1, 8))
        lo = lambda_lower_bound(s, N)
        for lam in lo + np.array([0.3, 1.0, 4.0]):
            h = 1e-5 * max(1.0, lam)
            fd = (objective(lam + h, inst, N) - objective(lam - h, inst, N)) / (2 * h)
            val = objective(lam, inst, N)
            assert abs(fd - derivative(lam, inst, N)) <= max(1e-6, 1e-4 * abs(val))


def test_solve_finite_boundary_case():
    sol = solve_finite(instance(1), 2)
    assert sol.lambda_star == 1.0 == sol.lambda_lo
    assert sol.region is Region.LINEAR
    assert sol.value == pytest.approx(0.5, abs=1e-14)


def test_solve_finite_interior_closed_form():
    sol = solve_finite(instance(1, 2.0), 2)
    assert abs(sol.lambda_star - 1.5) <= 1e-9
    assert abs(sol.value - 4.25) <= 1e-9
    assert sol.region is Region.NONLINEAR
    assert abs(sol.worst_energy - 1.0) <= 1e-6


def test_solve_finite_long_horizon_tends_to_steady_value():
    sol = solve_finite(instance(1, 0.0), 100)
    assert abs(sol.lambda_star - 2.0) <= 1e-4


def test_value_formula():
    inst = instance(4, [1.0, -0.5], 0.7)
    sol = solve_finite(inst, 7)
    xt = inst.scaled_state
    assert sol.value == pytest.approx(0.5 * xt @ sol.Pi0 @ xt + 0.5 * sol.lambda_star, abs=1e-10)


def test_dp_oracle_matches_closed_form():
    assert abs(dp_oracle(instance(1, 2.0), 2, GridSpec(0.01, 6.0)) - 4.25) <= 0.05


def test_dp_oracle_zero_state():
    for N in (1, 2, 3):
        lo = solve_finite(instance(1), N).lambda_lo
        assert abs(dp_oracle(instance(1), N, GridSpec(0.02, 4.0, 100)) - lo / 2) <= 0.05


def test_dp_oracle_homogeneous():
    a = dp_oracle(instance(2, 0.5, 1.0), 2, GridSpec(0.02, 4.0, 80))
    b = dp_oracle(instance(2, 1.0, 4.0), 2, GridSpec(0.02, 4.0, 80))
    assert abs(a - b) <= 0.05


def test_dp_oracle_against_solver_on_other_plants():
    for k, x0, N in [(2, 1.0, 2), (2, 0.3, 3), (1, 1.0, 3)]:
        v = solve_finite(instance(k, x0), N).value
        assert abs(dp_oracle(instance(k, x0), N, GridSpec(0.02, 4.0, 100)) - v) <= 0.05


def test_dp_oracle_rejects_vector_system():
    with pytest.raises(ValueError):
        dp_oracle(instance(4), 2)


def _draw(seed, pf=True):
    rng = np.random.default_rng(seed)
    s = random_system(rng, pf=pf)
    return ProblemInstance(s, rng.normal(size=s.n) * rng.uniform(0, 3), float(rng.uniform(0.2, 2))), int(rng.integers(1, 10))


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1))
def test_derivative_nondecreasing(seed):
    inst, N = _draw(seed)
    lo = lambda_lower_bound(inst.system, N)
    d = [derivative(l, inst, N) for l in lo + np.linspace(0, 10, 50)]
    assert np.all(np.diff(d) >= -1e-9)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1))
def test_multiplier_nondecreasing_in_horizon(seed):
    # relies on stage monotonicity of the recursion, hence a zero terminal weight
    inst, N = _draw(seed, pf=False)
    a = solve_finite(inst, N).lambda_star
    b = solve_finite(inst, N + 1).lambda_star
    assert b >= a - 1e-9 * max(1.0, a)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1))
def test_budget_saturation_in_nonlinear_region(seed):
    inst, N = _draw(seed)
    sol = solve_finite(inst, N)
    assert sol.lambda_star >= sol.lambda_lo - 1e-12
    if sol.region is Region.NONLINEAR:
        assert abs(sol.worst_energy - 1.0) <= 1e-6
    else:
        assert sol.lambda_star == sol.lambda_lo and sol.worst_energy <= 1.0 + 1e-9


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1), c=st.sampled_from([2.0, 10.0]))
def test_scaling_invariance(seed, c):
    inst, N = _draw(seed)
    a = solve_finite(inst, N)
    b = solve_finite(inst.replace(x0=c * inst.x0, alpha=c * c * inst.alpha), N)
    assert abs(a.lambda_star - b.lambda_star) <= 1e-9 * max(1.0, a.lambda_star)
    assert abs(a.value - b.value) <= 1e-9 * max(1.0, a.value)
