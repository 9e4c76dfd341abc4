import numpy as np
import pytest

import sidlab as sl
from sidlab.dynamics import _orbit_l2, free_energy_values
from sidlab.kernels import sup_norm


@pytest.fixture(scope="module")
def grid():
    return sl.make_grid(1, 64)


def random_density(grid, rng, scale=1.2):
    x = grid.points[:, 0]
    g = np.zeros(grid.n_nodes)
    for k in (1, 2, 3):
        g += scale * rng.standard_normal() / k * np.cos(k * x + rng.uniform(0, 2 * np.pi))
    return sl.DensityField(grid, sl.gibbs_values(grid, g))


def smooth_density(grid, rng, scale=0.8, min_floor=0.1):
    # finite differences of the entropy term lose accuracy like 1/min(f)^3,
    # so derivative-consistency checks use densities bounded away from zero
    while True:
        f = random_density(grid, rng, scale=scale)
        if np.min(f.values) >= min_floor:
            return f


def random_kernels(grid, rng):
    coeffs = {}
    for k in (1, 2, 3):
        v = float(rng.standard_normal())
        coeffs[(k,)] = v
        coeffs[(-k,)] = v
    yield sl.make_translation_invariant(coeffs)
    x = grid.points[:, 0]
    funcs = [np.ones(grid.n_nodes), np.cos(x), np.sin(x), np.cos(2 * x)]
    entries = np.zeros((grid.n_nodes, grid.n_nodes))
    for f in funcs:
        for h in funcs:
            c = rng.standard_normal() * 0.4
            entries += c * (np.outer(f, h) + np.outer(h, f)) / 2
    yield sl.make_grid_matrix(grid, entries)


class TestFreeEnergy:
    def test_zero_kernel_uniform(self, grid):
        assert sl.free_energy(sl.uniform_density(grid), sl.zero_kernel()) == 0.0

    def test_zero_kernel_is_entropy(self, grid):
        rng = np.random.default_rng(1)
        for _ in range(5):
            f = random_density(grid, rng)
            j = sl.free_energy(f, sl.zero_kernel())
            entropy = sl.inner_product(grid, f.values, np.log(f.values))
            assert abs(j - entropy) < 1e-14
            assert j >= -1e-14  # relative entropy to lambda is nonnegative

    def test_circle_dot_at_uniform(self, grid):
        assert abs(sl.free_energy(sl.uniform_density(grid), sl.make_circle_dot(-4.0))) < 1e-14


class TestFieldX:
    def test_zero_kernel_at_uniform(self, grid):
        assert np.max(np.abs(sl.field_X(sl.uniform_density(grid), sl.zero_kernel()))) == 0.0

    def test_zero_kernel_general(self, grid):
        rng = np.random.default_rng(2)
        f = random_density(grid, rng)
        np.testing.assert_allclose(sl.field_X(f, sl.zero_kernel()), 1.0 - f.values, atol=1e-13)

    def test_mean_zero(self, grid):
        rng = np.random.default_rng(3)
        for kern in random_kernels(grid, rng):
            for _ in range(5):
                f = random_density(grid, rng)
                x = sl.field_X(f, kern)
                assert abs(np.sum(x) * grid.weight) < 1e-12


class TestFieldY:
    def test_zero_kernel(self, grid):
        h = sl.PotentialField(grid, np.cos(grid.points[:, 0]))
        out = sl.field_Y(h, sl.zero_kernel())
        np.testing.assert_array_equal(out.values, -h.values)

    def test_circle_dot_at_zero(self, grid):
        h = sl.PotentialField(grid, np.zeros(grid.n_nodes))
        out = sl.field_Y(h, sl.make_circle_dot(1.0))
        assert np.max(np.abs(out.values)) < 1e-14

    def test_vanishes_at_potential_of_fixed_point(self, grid):
        kern = sl.make_circle_dot(-4.0)
        recs = sl.find_fixed_points(kern, grid, n_starts=6, seed=1)
        bump = recs[0].density
        h = sl.eval_potential(kern, bump)
        out = sl.field_Y(h, kern)
        assert np.max(np.abs(out.values)) < 1e-8


class TestDerivativeConsistency:
    def test_gradient_matches_finite_differences(self, grid):
        rng = np.random.default_rng(4)
        eps = 1e-5
        for kern in random_kernels(grid, rng):
            for _ in range(5):
                f = smooth_density(grid, rng)
                u = rng.standard_normal(grid.n_nodes)
                u -= u.mean()
                jp = free_energy_values(grid, f.values + eps * u, kern)
                jm = free_energy_values(grid, f.values - eps * u, kern)
                fd = (jp - jm) / (2 * eps)
                analytic = sl.inner_product(grid, sl.free_energy_gradient(f, kern), u)
                assert abs(fd - analytic) / max(1.0, abs(analytic)) < 1e-6

    def test_hessian_matches_finite_differences(self, grid):
        rng = np.random.default_rng(5)
        eps = 2e-4
        for kern in random_kernels(grid, rng):
            for _ in range(5):
                f = smooth_density(grid, rng)
                u = rng.standard_normal(grid.n_nodes)
                u -= u.mean()
                u /= max(1.0, np.max(np.abs(u)) / 3.0)
                j0 = free_energy_values(grid, f.values, kern)
                jp = free_energy_values(grid, f.values + eps * u, kern)
                jm = free_energy_values(grid, f.values - eps * u, kern)
                fd = (jp - 2 * j0 + jm) / eps ** 2
                analytic = sl.hessian_quadratic(f, kern, u)
                assert abs(fd - analytic) / max(1.0, abs(analytic)) < 1e-5


class TestFlowX:
    def test_zero_kernel_converges_to_uniform(self, grid):
        rng = np.random.default_rng(6)
        trace = sl.flow_X(random_density(grid, rng), sl.zero_kernel(), 0.05, 40.0)
        assert np.max(np.abs(trace.terminal.values - 1.0)) < 1e-10
        assert trace.energies[-1] < 1e-12
        assert np.all(np.diff(trace.energies) <= 1e-11)

    def test_fixed_point_start_stays(self, grid):
        kern = sl.make_circle_dot(-4.0)
        bump = sl.find_fixed_points(kern, grid, n_starts=6, seed=1)[0].density
        trace = sl.flow_X(bump, kern, 0.05, 5.0)
        assert np.max(np.abs(trace.terminal.values - bump.values)) < 1e-8
        assert np.max(trace.energies) - np.min(trace.energies) < 1e-12

    def test_attracting_kernel_descends_to_bump(self, grid):
        # cross-check the flow terminal against the independent fixed-point
        # solver, modulo the translation orbit
        kern = sl.make_circle_dot(-4.0)
        x = grid.points[:, 0]
        f0 = sl.DensityField(grid, sl.gibbs_values(grid, -0.1 * np.cos(x)))
        trace = sl.flow_X(f0, kern, 0.05, 60.0)
        assert trace.residuals[-1] < 1e-8
        assert np.all(np.diff(trace.energies) <= 1e-11)
        assert np.max(trace.terminal.values) - np.min(trace.terminal.values) > 1.0
        picard = sl.find_fixed_points(kern, grid, n_starts=6, seed=2)[0].density
        assert _orbit_l2(grid, trace.terminal.values, picard.values) < 1e-6

    def test_positivity_lower_bound(self, grid):
        # min f >= exp(-2||V||_inf) (1 - e^{-t}) after time t, by the
        # convex-combination structure of the exponential step
        rng = np.random.default_rng(7)
        kern = sl.make_circle_dot(-3.0)
        delta = np.exp(-2.0 * sup_norm(kern, grid))
        f0 = random_density(grid, rng, scale=3.0)
        for t_end in (1.0, 5.0):
            trace = sl.flow_X(f0, kern, 0.05, t_end)
            bound = delta * (1.0 - np.exp(-t_end))
            assert np.min(trace.terminal.values) >= bound - 1e-12

    def test_step_validation(self, grid):
        with pytest.raises(ValueError):
            sl.flow_X(sl.uniform_density(grid), sl.zero_kernel(), 1.5, 10.0)


class TestLyapunov:
    def test_strict_decrease_away_from_equilibrium(self, grid):
        rng = np.random.default_rng(8)
        for kern in random_kernels(grid, rng):
            trace = sl.flow_X(random_density(grid, rng), kern, 0.05, 20.0)
            diffs = np.diff(trace.energies)
            assert np.all(diffs <= 1e-11)
            moving = trace.residuals[:-1] > 1e-6
            assert np.all(diffs[moving] < 0.0)


class TestFlowY:
    def test_zero_kernel_decays(self, grid):
        h0 = sl.PotentialField(grid, np.cos(grid.points[:, 0]))
        trace = sl.flow_Y(h0, sl.zero_kernel(), 0.05, 20.0)
        np.testing.assert_allclose(trace.terminal.values,
                                   np.exp(-20.0) * h0.values, atol=1e-12)

    def test_constant_at_fixed_point_potential(self, grid):
        kern = sl.make_circle_dot(-4.0)
        bump = sl.find_fixed_points(kern, grid, n_starts=6, seed=1)[0].density
        h0 = sl.eval_potential(kern, bump)
        trace = sl.flow_Y(h0, kern, 0.05, 5.0)
        assert np.max(np.abs(trace.terminal.values - h0.values)) < 1e-7

    def test_conjugacy_with_flow_X(self, grid):
        # V applied to the density flow equals the potential flow of Vf,
        # step by step, because the exponential scheme commutes with V
        rng = np.random.default_rng(9)
        for kern in random_kernels(grid, rng):
            f0 = random_density(grid, rng)
            steps, t_end = 0.05, 10.0
            trX = sl.flow_X(f0, kern, steps, t_end)
            trY = sl.flow_Y(sl.eval_potential(kern, f0), kern, steps, t_end)
            gap = 0.0
            f = f0
            for j in range(len(trY.times)):
                if j > 0:
                    f = sl.flow_X(f, kern, steps, steps).terminal
                vf = sl.eval_potential(kern, f).values
                gap = max(gap, float(np.max(np.abs(vf - trY.values[j]))))
            assert gap <= 1e-8


class TestHessianSpectrum:
    def test_zero_kernel_identity(self, grid):
        rep = sl.hessian_spectrum(sl.uniform_density(grid), sl.zero_kernel())
        np.testing.assert_allclose(rep.eigenvalues, 1.0, atol=1e-12)
        assert rep.verdict == "sink" and rep.index == 0 and not rep.degenerate

    @pytest.mark.parametrize("a", [-4.0, -1.0, 2.0])
    def test_circle_dot_closed_form(self, grid, a):
        # oracle: on mean-zero functions the stability operator acts
        # diagonally in the Fourier basis with eigenvalue 1 + v_k, so the
        # spectrum is {1 + a/2 (x2)} plus ones
        rep = sl.hessian_spectrum(sl.uniform_density(grid), sl.make_circle_dot(a))
        n = grid.n_nodes
        oracle = np.sort(np.concatenate([[1 + a / 2, 1 + a / 2], np.ones(n - 3)]))
        np.testing.assert_allclose(rep.eigenvalues, oracle, atol=1e-8)

    def test_degenerate_at_minus_two(self, grid):
        rep = sl.hessian_spectrum(sl.uniform_density(grid), sl.make_circle_dot(-2.0))
        assert rep.degenerate and rep.verdict == "degenerate"

    def test_classification_flip(self, grid):
        verdicts = [sl.hessian_spectrum(sl.uniform_density(grid), sl.make_circle_dot(a)).verdict
                    for a in (-1.0, -2.0, -4.0)]
        assert verdicts == ["sink", "degenerate", "saddle"]

    def test_saddle_index_two(self, grid):
        rep = sl.hessian_spectrum(sl.uniform_density(grid), sl.make_circle_dot(-4.0))
        assert rep.index == 2 and rep.verdict == "saddle"


class TestFindFixedPoints:
    def test_mercer_with_constant_row_integral_gives_uniform_sink(self, grid):
        for kern in (sl.make_circle_dot(2.0), sl.make_heat(1.0, 0.5)):
            recs = sl.find_fixed_points(kern, grid, n_starts=12, seed=3)
            assert len(recs) == 1
            assert np.max(np.abs(recs[0].density.values - 1.0)) < 1e-8
            assert recs[0].spectral.verdict == "sink"
            assert recs[0].residual < 1e-10

    def test_zero_kernel(self, grid):
        recs = sl.find_fixed_points(sl.zero_kernel(), grid, n_starts=4, seed=3)
        assert len(recs) == 1
        assert np.max(np.abs(recs[0].density.values - 1.0)) < 1e-12

    def test_attracting_kernel_census(self, grid):
        recs = sl.find_fixed_points(sl.make_circle_dot(-4.0), grid, n_starts=16, seed=3)
        assert len(recs) == 2
        bump, uniform = recs
        assert bump.symmetry_orbit and bump.spectral.verdict == "degenerate"
        assert bump.spectral.index == 0
        assert not uniform.symmetry_orbit and uniform.spectral.verdict == "saddle"
        assert uniform.spectral.index == 2
        assert bump.energy < uniform.energy

    def test_criticality_equivalence_at_terminals(self, grid):
        # at a solver terminal the dual pairing of Vf + log f against the
        # mean-zero basis is controlled by the residual, and conversely a
        # visibly non-critical density has a visibly nonzero pairing
        kern = sl.make_circle_dot(-4.0)
        tol = 1e-10
        recs = sl.find_fixed_points(kern, grid, n_starts=8, seed=4, tol=tol)
        for rec in recs:
            g = sl.free_energy_gradient(rec.density, kern)
            dual = grid.weight * (np.max(g) - np.min(g))
            c_tol = 3.0 * tol * grid.weight / np.min(rec.density.values)
            assert dual < c_tol
        rng = np.random.default_rng(10)
        f = random_density(grid, rng)
        if sl.residual(f, kern) > 1e-3:
            g = sl.free_energy_gradient(f, kern)
            dual = grid.weight * (np.max(g) - np.min(g))
            assert dual > 3.0 * tol * grid.weight / np.min(f.values)

    def test_convexity_certificate_implies_positive_spectra(self, grid):
        mixed = sl.make_translation_invariant(
            {(1,): -0.3, (-1,): -0.3, (2,): 1.0, (-2,): 1.0})
        for kern in (sl.make_circle_dot(2.0), sl.make_heat(1.0, 0.5), mixed):
            assert sl.convexity_certificate(kern, grid)
            recs = sl.find_fixed_points(kern, grid, n_starts=12, seed=5)
            for rec in recs:
                assert np.min(rec.spectral.eigenvalues) > 0.0

    def test_no_convergence_returns_empty(self, grid):
        x = grid.points[:, 0]
        entries = np.add.outer(np.cos(x), np.cos(x))  # no constant-row-sum fixed uniform
        kern = sl.make_grid_matrix(grid, entries)
        recs = sl.find_fixed_points(kern, grid, n_starts=1, seed=1,
                                    max_picard=1, max_newton=0, tol=1e-14)
        assert recs == []

    def test_input_validation(self, grid):
        with pytest.raises(ValueError):
            sl.find_fixed_points(sl.zero_kernel(), grid, n_starts=0)
        with pytest.raises(ValueError):
            sl.find_fixed_points(sl.zero_kernel(), grid, picard_damping=0.0)

    def test_deterministic_ordering(self, grid):
        kern = sl.make_circle_dot(-4.0)
        r1 = sl.find_fixed_points(kern, grid, n_starts=10, seed=3)
        r2 = sl.find_fixed_points(kern, grid, n_starts=10, seed=3)
        assert len(r1) == len(r2)
        for a, b in zip(r1, r2):
            assert a.energy == b.energy and a.residual == b.residual
            assert np.array_equal(a.density.values, b.density.values)


class Test2d:
    def test_hessian_closed_form_2d(self):
        # at the uniform density the stability operator is diagonal in the
        # 2-d Fourier basis: eigenvalue 1 + v_k on each nonzero frequency
        g = sl.make_grid(2, 8)
        coeffs = {(1, 0): -0.5, (-1, 0): -0.5, (0, 1): 0.25, (0, -1): 0.25}
        kern = sl.TranslationInvariantKernel(dim=2, coeffs=coeffs)
        rep = sl.hessian_spectrum(sl.uniform_density(g), kern)
        oracle = np.sort(np.concatenate([[0.5, 0.5, 1.25, 1.25],
                                         np.ones(g.n_nodes - 5)]))
        np.testing.assert_allclose(rep.eigenvalues, oracle, atol=1e-10)
        assert rep.verdict == "sink"

    def test_repelling_2d_unique_uniform(self):
        g = sl.make_grid(2, 8)
        kern = sl.make_heat(1.0, 0.7, 2, dim=2)
        recs = sl.find_fixed_points(kern, g, n_starts=6, seed=12)
        assert len(recs) == 1
        assert np.max(np.abs(recs[0].density.values - 1.0)) < 1e-8
        assert recs[0].spectral.verdict == "sink"

    def test_attracting_2d_flow_descends(self):
        # n = 16 keeps e^{c cos} bumps resolved (aliasing well below the
        # residual target); coarser grids pin the translation orbit
        g = sl.make_grid(2, 16)
        coeffs = {(1, 0): -1.25, (-1, 0): -1.25, (0, 1): -1.25, (0, -1): -1.25}
        kern = sl.TranslationInvariantKernel(dim=2, coeffs=coeffs)
        x, y = g.points[:, 0], g.points[:, 1]
        f0 = sl.DensityField(g, sl.gibbs_values(
            g, 0.3 * np.cos(x + 0.4) + 0.2 * np.cos(y - 1.0)))
        trace = sl.flow_X(f0, kern, 0.05, 80.0)
        assert np.all(np.diff(trace.energies) <= 1e-11)
        assert trace.residuals[-1] < 1e-8
        assert np.max(trace.terminal.values) > 1.5  # localized in both axes


class TestMorseSum:
    def test_single_sink(self, grid):
        recs = sl.find_fixed_points(sl.make_circle_dot(2.0), grid, n_starts=8, seed=3)
        assert sl.morse_sum(recs) == 1

    def test_degenerate_is_undefined(self, grid):
        recs = sl.find_fixed_points(sl.make_circle_dot(-4.0), grid, n_starts=12, seed=3)
        assert sl.morse_sum(recs) is None

    def test_symmetry_broken_kernel(self):
        # -4cos(x-y) + 0.3 cos x cos y: the cosine product breaks translation
        # invariance, lifting the orbit degeneracy into sinks and saddles
        grid = sl.make_grid(1, 32)
        x = grid.points[:, 0]
        entries = -4.0 * np.cos(np.subtract.outer(x, x)) + 0.3 * np.outer(np.cos(x), np.cos(x))
        kern = sl.make_grid_matrix(grid, entries)
        recs = sl.find_fixed_points(kern, grid, n_starts=24, seed=6)
        assert all(not r.spectral.degenerate for r in recs)
        assert sl.morse_sum(recs) == 1
