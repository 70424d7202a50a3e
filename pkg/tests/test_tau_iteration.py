import math

import numpy as np
import pytest

import coagdrift as cd


@pytest.fixture(scope="module")
def setup():
    params = cd.ModelParams(0.5, 0.005)
    grid = cd.build_grid(1e5, 1025, 0.5)
    seed = cd.seed_profile(params, grid)
    constants = cd.derive_constants(params)
    return params, grid, seed, constants


def _const_tau(grid, value, slope0, cap=None):
    return cd.TauFunction(
        grid, np.full(grid.n, value), slope0=slope0, limit_inf=value, cap=cap
    )


def test_operator_positivity_and_zero_at_origin(setup):
    params, grid, seed, constants = setup
    tau = _const_tau(grid, constants.tau_star, params.linear_coefficient)
    out = cd.apply_tau_operator(seed, tau, params)
    assert out.values[0] == 0.0
    assert np.all(out.values >= 0.0)
    assert out.slope0 == pytest.approx(params.linear_coefficient)


def test_operator_monotone_in_tau(setup):
    params, grid, seed, _ = setup
    lo = cd.TauFunction(grid, 0.5 * grid.nodes / (1.0 + grid.nodes) * 3.0,
                        slope0=1.5, limit_inf=3.0)
    hi = cd.TauFunction(grid, lo.values + 0.3, slope0=1.5, limit_inf=3.3)
    out_lo = cd.apply_tau_operator(seed, lo, params)
    out_hi = cd.apply_tau_operator(seed, hi, params)
    assert np.all(out_lo.values <= out_hi.values + 1e-14)


def test_operator_far_field_limits(setup):
    # h -> 2 m0 and the update -> (2-v)/(1-v) far out
    params, grid, seed, constants = setup
    tau = _const_tau(grid, 3.0, params.linear_coefficient)
    out = cd.apply_tau_operator(seed, tau, params)
    z_end = grid.nodes[-1]
    h_end = out.values[-1] * ((1.0 - params.v) * z_end + 1.0) / z_end \
        - params.linear_coefficient
    assert h_end == pytest.approx(2.0 * params.m0, rel=1e-3)
    assert out.values[-1] == pytest.approx(params.tau_inf, rel=1e-3)


def test_operator_barrier_property(setup):
    # with M0(G) <= m0_bar the constant barrier maps below itself
    params, grid, seed, constants = setup
    barrier = _const_tau(grid, constants.tau_star, params.linear_coefficient)
    out = cd.apply_tau_operator(seed, barrier, params)
    assert np.all(out.values <= constants.tau_star * (1.0 + 1e-13))


def test_operator_h_upper_bound(setup):
    # h[G, tau](z) <= 2 m0 2^(sup tau)
    params, grid, seed, _ = setup
    tau = _const_tau(grid, 2.0, params.linear_coefficient)
    out = cd.apply_tau_operator(seed, tau, params)
    z = grid.nodes[1:]
    h = out.values[1:] * ((1.0 - params.v) * z + 1.0) / z - params.linear_coefficient
    assert np.max(h) <= 2.0 * params.m0 * 2.0**2.0 * (1.0 + 1e-9)


def test_operator_grid_mismatch(setup):
    params, grid, seed, constants = setup
    other = cd.build_grid(1e5, 513, 0.5)
    tau = _const_tau(other, constants.tau_star, params.linear_coefficient)
    with pytest.raises(cd.GridMismatchError):
        cd.apply_tau_operator(seed, tau, params)


def test_inner_solve_monotone_decrease(setup):
    params, grid, seed, constants = setup
    result = cd.inner_solve(seed, params, keep_history=True)
    assert result.certified
    slack = 1e-13 * constants.tau_star
    hist = result.history
    assert len(hist) == result.iterations + 1
    for prev, nxt in zip(hist, hist[1:]):
        assert np.all(nxt <= prev + slack)
        assert np.all(nxt >= -slack)
    assert np.all(result.tau.values <= constants.tau_star)
    assert np.all(result.tau.values >= 0.0)
    assert result.residual <= 1e-10
    # tau approaches the limiting tail exponent at the far end
    assert result.tau.values[-1] == pytest.approx(3.0, rel=1e-3)


def test_inner_solve_iteration_cap(setup):
    params, _, seed, _ = setup
    with pytest.raises(cd.ConvergenceError) as err:
        cd.inner_solve(seed, params, cd.InnerSolveOptions(tol=1e-10, max_iter=1))
    assert err.value.residual > 0.0
    assert err.value.best is not None


def test_inner_solve_rejects_wrong_mass(setup):
    params, grid, _, _ = setup
    bad = cd.GridFunction(grid, 2.0 * cd.seed_profile(params, grid).values,
                          tail_exponent=math.inf)
    with pytest.raises(cd.ParameterDomainError):
        cd.inner_solve(bad, params)


def test_inner_solve_options_validation():
    with pytest.raises(cd.ParameterDomainError):
        cd.InnerSolveOptions(tol=0.0)
    with pytest.raises(cd.ParameterDomainError):
        cd.InnerSolveOptions(max_iter=0)


def test_reconstruct_exponential_tau():
    # tau(z) = v z reconstructs to m0 v e^(-v z) after normalization
    v, m0 = 0.5, 0.4
    params = cd.ModelParams(v, m0)
    grid = cd.build_grid(1e3, 2049, v)
    tau = cd.TauFunction(grid, v * grid.nodes, slope0=v, limit_inf=5.0)
    F = cd.reconstruct_profile(tau, params)
    sel = grid.nodes < 40.0
    want = m0 * v * np.exp(-v * grid.nodes[sel])
    np.testing.assert_allclose(F.values[sel], want, rtol=1e-6)
    assert cd.moment(F, 0) == pytest.approx(m0, rel=1e-14)
    assert np.all(np.diff(F.values) <= 0.0)


def test_reconstruct_divergent_normalization(setup):
    params, grid, _, _ = setup
    tau = cd.TauFunction(grid, np.full(grid.n, 0.9), slope0=1.0, limit_inf=0.9)
    with pytest.raises(cd.DivergentMomentError):
        cd.reconstruct_profile(tau, params)


def test_forced_inner_solve_above_threshold():
    params = cd.ModelParams(0.5, 0.02)  # above m0_bar(0.5) ~ 0.0166
    grid = cd.build_grid(1e4, 513, 0.5)
    seed = cd.seed_profile(params, grid)
    with pytest.raises(cd.ThresholdExceededError):
        cd.inner_solve(seed, params)
    with pytest.warns(RuntimeWarning):
        result = cd.inner_solve(seed, params, force=True)
    assert not result.certified
    assert result.barrier == pytest.approx(2.0 * params.tau_inf)
    assert np.all(result.tau.values >= 0.0)
