import json

import numpy as np
import pytest

from roughflow.continuity import (
    ParticleMeasure,
    discontinuous_drift_experiment,
    integrated_controlled_path,
    push_forward,
    weak_residual,
)
from roughflow.errors import ConfigurationError
from roughflow.fbm import FbmSpec, lift_fbm, sample
from roughflow.presets import drift_preset, eta_preset, plateau_covering
from roughflow.rough_flow import compose_lift, solve_flow
from roughflow.rough_path import RoughPathGrid, TimeGrid
from roughflow.sewing import rough_integral
from roughflow.stacks import PolyGauss1D, SmoothFunctionStack


def square_stack():
    return SmoothFunctionStack([PolyGauss1D([0.0, 0.0, 1.0], a=0.0, max_order=6)])


# -- particle measures ------------------------------------------------------------


def test_particle_measure_basics():
    mu = ParticleMeasure([[-1.0], [0.0], [1.0]], [0.5, -0.25, 0.25])
    assert mu.n_particles == 3 and mu.dim == 1
    assert mu.total_variation == 1.0
    assert mu.mass == pytest.approx(0.5)
    assert mu.pair(lambda x: x[:, 0] ** 2) == pytest.approx(0.5 + 0.25)
    with pytest.raises(ValueError):
        ParticleMeasure([[0.0], [1.0]], [1.0])


def test_quantile_stratified_placement():
    # uniform density on [-1, 1]: mid-quantile particles are symmetric and
    # equally weighted
    mu = ParticleMeasure.from_quantiles(lambda q: 2 * q - 1, n_particles=8)
    assert mu.mass == pytest.approx(1.0)
    np.testing.assert_allclose(mu.points[:, 0], -mu.points[::-1, 0], atol=1e-15)
    assert np.all(np.diff(mu.points[:, 0]) > 0)


def test_push_forward_translation():
    grid = TimeGrid.uniform(1.0, 8)
    driver = grid.nodes.reshape(-1, 1)
    mu0 = ParticleMeasure([[0.0]], [1.0])
    flow = solve_flow(drift_preset("zero", 1), grid, driver, mu0.points)
    eta = square_stack()
    # t = 0 leaves the measure untouched
    np.testing.assert_array_equal(push_forward(mu0, flow, 0.0).points, mu0.points)
    # delta_0 translated by X_t = t: mu_t(eta) = eta(t)
    for t in (0.5, 1.0):
        assert push_forward(mu0, flow, t).pair(eta) == pytest.approx(t ** 2, abs=1e-14)
    # mass is conserved
    assert push_forward(mu0, flow, 1.0).mass == mu0.mass


def test_push_forward_three_points():
    grid = TimeGrid.uniform(1.0, 4)
    driver = np.sin(grid.nodes).reshape(-1, 1)
    mu0 = ParticleMeasure([[-1.0], [0.0], [1.0]], [1 / 3] * 3)
    flow = solve_flow(drift_preset("zero", 1), grid, driver, mu0.points)
    eta = square_stack()
    got = push_forward(mu0, flow, 1.0).pair(eta)
    want = np.mean((np.array([-1.0, 0.0, 1.0]) + np.sin(1.0)) ** 2)
    assert got == pytest.approx(want, abs=1e-14)
    with pytest.raises(ValueError):
        push_forward(ParticleMeasure([[5.0]], [1.0]), flow, 1.0)


# -- integrated controlled path -----------------------------------------------------


def test_single_particle_matches_compose_lift():
    grid = TimeGrid.uniform(1.0, 16)
    spec = FbmSpec(hurst=0.3, dim=1, grid=grid, seed=2)
    noise = sample(spec)
    path = lift_fbm(noise, 0.28)
    mu0 = ParticleMeasure([[0.4]], [1.0])
    flow = solve_flow(drift_preset("sine", 1), grid, noise.values, mu0.points, substeps=2)
    eta = eta_preset("gauss-bump-1", 1)
    integrated = integrated_controlled_path(mu0, eta, flow, path)
    direct = compose_lift(eta, flow, path, 0)
    for k in range(1, path.level + 1):
        np.testing.assert_allclose(
            integrated.component(k), direct.component(k), atol=1e-14
        )


def test_opposite_weights_cancel():
    grid = TimeGrid.uniform(1.0, 8)
    driver = np.cos(grid.nodes).reshape(-1, 1) - 1.0
    path = RoughPathGrid.lift_piecewise_linear(grid, driver, 2)
    mu = ParticleMeasure([[0.3], [0.3]], [1.0, -1.0])
    flow = solve_flow(drift_preset("sine", 1), grid, driver, mu.points, substeps=2)
    eta = eta_preset("gauss-bump-1", 1)
    integrated = integrated_controlled_path(mu, eta, flow, path)
    for k in range(1, path.level + 1):
        np.testing.assert_allclose(integrated.component(k), 0.0, atol=1e-15)


def test_integrated_path_linear_in_measure():
    rng = np.random.default_rng(8)
    grid = TimeGrid.uniform(1.0, 16)
    spec = FbmSpec(hurst=0.3, dim=1, grid=grid, seed=12)
    noise = sample(spec)
    path = lift_fbm(noise, 0.28)
    pts = rng.uniform(-1, 1, size=(6, 1))
    w1, w2 = rng.standard_normal(6), rng.standard_normal(6)
    flow = solve_flow(drift_preset("sine", 1), grid, noise.values, pts, substeps=2)
    eta = eta_preset("gauss-bump-1", 1)
    a = integrated_controlled_path(ParticleMeasure(pts, w1), eta, flow, path)
    b = integrated_controlled_path(ParticleMeasure(pts, w2), eta, flow, path)
    both = integrated_controlled_path(ParticleMeasure(pts, w1 + w2), eta, flow, path)
    for k in range(1, path.level + 1):
        np.testing.assert_allclose(
            both.component(k), a.component(k) + b.component(k), atol=1e-12
        )


def test_particle_level_fubini():
    # rough integral of the weighted-sum path equals the weighted sum of the
    # per-particle rough integrals: finite sums commute with partition sums
    grid = TimeGrid.dyadic(1.0, 6)
    spec = FbmSpec(hurst=0.3, dim=1, grid=grid, seed=3)
    noise = sample(spec)
    path = lift_fbm(noise, 0.28)
    pts = np.array([[-0.5], [0.1], [0.7]])
    weights = np.array([0.5, 1.25, -0.75])
    mu0 = ParticleMeasure(pts, weights)
    flow = solve_flow(drift_preset("sine", 1), grid, noise.values, pts, substeps=2)
    eta = eta_preset("gauss-bump-1", 1)
    whole = rough_integral(
        integrated_controlled_path(mu0, eta, flow, path), 0.0, 1.0, 0.28
    )
    parts = sum(
        w * rough_integral(compose_lift(eta, flow, path, i), 0.0, 1.0, 0.28)
        for i, w in enumerate(weights)
    )
    assert whole == pytest.approx(parts, abs=1e-10)


# -- weak residual -------------------------------------------------------------------


def test_weak_residual_exact_translation_case():
    grid = TimeGrid.uniform(1.0, 16)
    driver = grid.nodes.reshape(-1, 1)
    path = RoughPathGrid.lift_piecewise_linear(grid, driver, 2)
    mu0 = ParticleMeasure([[0.0]], [1.0])
    flow = solve_flow(drift_preset("zero", 1), grid, driver, mu0.points)
    res = weak_residual(mu0, drift_preset("zero", 1), flow, path, square_stack(), 1.0, 0.45)
    assert res == 0.0


def test_weak_residual_vanishes_off_support():
    grid = TimeGrid.uniform(1.0, 16)
    spec = FbmSpec(hurst=0.3, dim=1, grid=grid, seed=21)
    noise = sample(spec)
    path = lift_fbm(noise, 0.28)
    mu0 = ParticleMeasure([[0.0], [0.5]], [1.0, 1.0])
    drift = drift_preset("sine", 1)
    flow = solve_flow(drift, grid, noise.values, mu0.points, substeps=2)
    # bump centered far away from anything the particles can reach by T = 1
    far = SmoothFunctionStack(
        [PolyGauss1D([1.0], a=4.0, c=50.0, max_order=6)], name="far"
    )
    assert weak_residual(mu0, drift, flow, path, far, 1.0, 0.28) == 0.0


def test_weak_residual_smooth_regime_small():
    grid = TimeGrid.dyadic(1.0, 9)
    driver = (0.4 * np.sin(2 * np.pi * grid.nodes) + 0.2 * grid.nodes).reshape(-1, 1)
    path = RoughPathGrid.lift_piecewise_linear(grid, driver, 3)
    mu0 = ParticleMeasure.from_quantiles(lambda q: 2 * q - 1, n_particles=32)
    drift = drift_preset("sine", 1)
    flow = solve_flow(drift, grid, driver, mu0.points, substeps=2)
    eta = eta_preset("gauss-bump-1", 1)
    res = weak_residual(mu0, drift, flow, path, eta, 1.0, 0.3)
    assert res < 1e-4


def test_weak_residual_linear_in_weights():
    grid = TimeGrid.dyadic(1.0, 6)
    spec = FbmSpec(hurst=0.3, dim=1, grid=grid, seed=14)
    noise = sample(spec)
    path = lift_fbm(noise, 0.28)
    pts = np.linspace(-1, 1, 5).reshape(-1, 1)
    drift = drift_preset("sine", 1)
    flow = solve_flow(drift, grid, noise.values, pts, substeps=2)
    eta = eta_preset("gauss-bump-1", 1)

    def signed_terms(weights):
        mu = ParticleMeasure(pts, weights)
        mu_t = push_forward(mu, flow, 1.0)
        from roughflow.rough_flow import time_integral

        lhs = mu_t.pair(eta) - mu.pair(eta)
        drift_term = time_integral(
            flow,
            lambda r, pos: float(
                np.sum(weights * np.sum(eta.gradient(pos) * drift.fn(r, pos), axis=-1))
            ),
            1.0,
        )
        rough = rough_integral(
            integrated_controlled_path(mu, eta, flow, path), 0.0, 1.0, 0.28
        )
        return lhs - drift_term - rough

    rng = np.random.default_rng(0)
    w1, w2 = rng.standard_normal(5), rng.standard_normal(5)
    assert signed_terms(w1 + w2) == pytest.approx(
        signed_terms(w1) + signed_terms(w2), abs=1e-10
    )


def test_mass_conservation_with_covering_cutoff():
    grid = TimeGrid.dyadic(1.0, 7)
    spec = FbmSpec(hurst=0.3, dim=1, grid=grid, seed=6)
    noise = sample(spec)
    path = lift_fbm(noise, 0.28)
    mu0 = ParticleMeasure.from_quantiles(lambda q: 2 * q - 1, n_particles=16)
    drift = drift_preset("sine", 1)
    flow = solve_flow(drift, grid, noise.values, mu0.points, substeps=2)
    eta = plateau_covering(flow.trajectories.reshape(-1, 1), margin=0.5)
    values = [push_forward(mu0, flow, t).pair(eta) for t in grid.nodes[:: grid.n_segments // 8]]
    np.testing.assert_allclose(values, mu0.mass, atol=1e-12)
    # the weak-form identity is exact here: every derivative term vanishes
    assert weak_residual(mu0, drift, flow, path, eta, 1.0, 0.28) <= 1e-8


def test_classical_riemann_integrals_converge_to_rough_integral():
    # piecewise-linear refinements of one fBm draw: classical integrals
    # int mu_0(Deta(phi^eps)) dX^eps are Cauchy with shrinking increments,
    # and the matched-resolution rough integral closes in on them
    from roughflow.fbm import FbmPath

    gamma, hurst = 0.28, 0.3
    fine = TimeGrid.dyadic(1.0, 10)
    noise = sample(FbmSpec(hurst=hurst, dim=1, grid=fine, seed=44))
    drift = drift_preset("sine", 1)
    eta = eta_preset("gauss-bump-1", 1)
    mu0 = ParticleMeasure.from_quantiles(lambda q: q - 0.5, n_particles=8)

    classical, gaps_to_rough = [], []
    for step in (64, 16, 4, 1):
        grid = fine.subsample(step) if step > 1 else fine
        vals = noise.values[::step]
        flow = solve_flow(drift, grid, vals, mu0.points, substeps=2)
        # dense-output Riemann integral of the piecewise-linear system:
        # within cells the driver derivative is constant
        total = 0.0
        quad = 8
        for i in range(grid.n_segments):
            h = grid.nodes[i + 1] - grid.nodes[i]
            slope = (vals[i + 1, 0] - vals[i, 0]) / h
            for q in range(quad):
                w = (q + 0.5) / quad
                pos = (1 - w) * flow.trajectories[i] + w * flow.trajectories[i + 1]
                total += (
                    float(np.sum(mu0.weights * eta.gradient(pos)[:, 0]))
                    * slope * h / quad
                )
        classical.append(total)
        path = lift_fbm(FbmPath(FbmSpec(hurst, 1, grid, 44), vals), gamma)
        rough = rough_integral(
            integrated_controlled_path(mu0, eta, flow, path), 0.0, 1.0, gamma
        )
        gaps_to_rough.append(abs(total - rough))

    cauchy = np.abs(np.diff(classical))
    assert cauchy[0] > cauchy[1] > cauchy[2]
    assert gaps_to_rough[0] > gaps_to_rough[1] > gaps_to_rough[3]


# -- the mollified-drift experiment ---------------------------------------------------


def test_experiment_rejects_bad_configurations():
    mu0 = ParticleMeasure([[0.0]], [1.0])
    eta = eta_preset("gauss-bump-1", 1)
    sign = drift_preset("sign-cutoff", 1)
    with pytest.raises(ConfigurationError):
        discontinuous_drift_experiment(sign, 0.3, 1, mu0, eta, [0.25, 0.125], seed=1)
    with pytest.raises(ConfigurationError):
        discontinuous_drift_experiment(sign, 0.2, 1, mu0, eta, [0.125, 0.25], seed=1)


def test_experiment_report_structure_and_determinism(tmp_path):
    mu0 = ParticleMeasure.from_quantiles(lambda q: q - 0.5, n_particles=24)
    eta = eta_preset("gauss-bump-1", 1)
    sign = drift_preset("sign-cutoff", 1)
    grid = TimeGrid.dyadic(1.0, 7)
    ladder = [2.0 ** -k for k in range(2, 5)]
    rep = discontinuous_drift_experiment(
        sign, 0.2, 1, mu0, eta, ladder, seed=11, grid=grid, substeps=2
    )
    assert len(rep.mu_values) == 3
    assert len(rep.cauchy_increments) == 2
    assert all(np.isfinite(rep.residuals))
    assert all(np.isfinite(rep.equicontinuity_seminorms))
    assert rep.lift == "piecewise-linear interpolation"
    assert rep.runtime is None

    again = discontinuous_drift_experiment(
        sign, 0.2, 1, mu0, eta, ladder, seed=11, grid=grid, substeps=2
    )
    assert rep.mu_values == again.mu_values

    f = tmp_path / "report.json"
    with open(f, "w") as fh:
        rep.write_json(fh)
    doc = json.loads(f.read_text())
    assert doc["H"] == 0.2 and doc["d"] == 1 and doc["seed"] == 11
    assert len(doc["eps_ladder"]) == 3
    g = tmp_path / "report.csv"
    with open(g, "w", newline="") as fh:
        rep.write_csv(fh)
    assert g.read_text().splitlines()[0].startswith("eps,")


def test_experiment_seed_changes_path_not_shape():
    mu0 = ParticleMeasure.from_quantiles(lambda q: q - 0.5, n_particles=16)
    eta = eta_preset("gauss-bump-1", 1)
    sign = drift_preset("sign-cutoff", 1)
    grid = TimeGrid.dyadic(1.0, 6)
    ladder = [0.25, 0.125]
    a = discontinuous_drift_experiment(sign, 0.2, 1, mu0, eta, ladder, seed=1, grid=grid)
    b = discontinuous_drift_experiment(sign, 0.2, 1, mu0, eta, ladder, seed=2, grid=grid)
    assert a.mu_values != b.mu_values
    assert len(a.mu_values) == len(b.mu_values)
    assert len(a.cauchy_increments) == len(b.cauchy_increments)
    assert all(np.isfinite(b.residuals))


def test_experiment_smooth_drift_baseline():
    # mollifying an already-smooth drift barely changes the flow: the pairing
    # values across the ladder agree to the mollification error scale
    mu0 = ParticleMeasure.from_quantiles(lambda q: q - 0.5, n_particles=16)
    eta = eta_preset("gauss-bump-1", 1)
    smooth = drift_preset("sine", 1)
    # give the smooth drift a piecewise description so it can be mollified
    smooth.pieces = [([0.0], [lambda y: np.sin(y), lambda y: np.sin(y)])]
    smooth.support_radius = 8.0
    grid = TimeGrid.dyadic(1.0, 7)
    rep = discontinuous_drift_experiment(
        smooth, 0.2, 1, mu0, eta, [2.0 ** -k for k in (3, 4, 5)], seed=5,
        grid=grid, substeps=2,
    )
    assert max(rep.cauchy_increments) < 1e-2
    assert all(r < 0.2 for r in rep.residuals)
