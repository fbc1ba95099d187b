import math

import numpy as np
import pytest

from manibo import (
    GpDataset,
    GpModel,
    Grassmann,
    InvalidInputError,
    KernelBounds,
    KernelParams,
    Spd,
    Sphere,
    ManifoldPoint,
    default_bounds,
    fit_hyperparams,
    gram_matrix,
    kernel_eval,
    log_marginal_likelihood,
    median_heuristic_params,
    posterior,
    random_point,
)

from conftest import FAMILY_KINDS


def _dataset(kind, n, rng, fn=None):
    points = [random_point(kind, rng) for _ in range(n)]
    if fn is None:
        values = rng.standard_normal(n)
    else:
        values = [fn(p) for p in points]
    return GpDataset.from_points(points, values)


class TestKernelParams:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            KernelParams(lengthscale=0.0, amplitude=1.0, noise=0.0)
        with pytest.raises(InvalidInputError):
            KernelParams(lengthscale=1.0, amplitude=-1.0, noise=0.0)
        with pytest.raises(InvalidInputError):
            KernelParams(lengthscale=1.0, amplitude=1.0, noise=-1e-3)

    def test_zero_noise_allowed(self):
        KernelParams(lengthscale=1.0, amplitude=1.0, noise=0.0)


class TestKernelEval:
    def test_same_point_gives_amplitude(self, rng):
        params = KernelParams(lengthscale=0.7, amplitude=2.5, noise=0.0)
        x = random_point(Sphere(2), rng)
        assert kernel_eval(params, x, x) == pytest.approx(2.5, rel=1e-14)

    def test_sphere_poles_value(self):
        # Embedded distance between the poles is 2, so the kernel value is
        # exp(-4 / (2 * 2^2)) = exp(-1/2).
        params = KernelParams(lengthscale=2.0, amplitude=1.0, noise=0.0)
        north = ManifoldPoint(Sphere(2), [0.0, 0.0, 1.0])
        south = ManifoldPoint(Sphere(2), [0.0, 0.0, -1.0])
        assert kernel_eval(params, north, south) == pytest.approx(
            math.exp(-0.5), rel=1e-14
        )

    def test_grassmann_frame_invariance(self, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.0, noise=0.0)
        kind = Grassmann(2, 3)
        x = random_point(kind, rng)
        theta = 1.1
        rot = np.array(
            [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
        )
        same_span = ManifoldPoint(kind, x.coords @ rot)
        z = random_point(kind, rng)
        assert kernel_eval(params, x, z) == pytest.approx(
            kernel_eval(params, same_span, z), abs=1e-12
        )
        assert kernel_eval(params, x, same_span) == pytest.approx(1.0, abs=1e-12)

    def test_kind_mismatch(self, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.0, noise=0.0)
        with pytest.raises(InvalidInputError):
            kernel_eval(params, random_point(Sphere(2), rng), random_point(Spd(2), rng))


class TestGramMatrix:
    def test_single_point(self, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.0, noise=0.01)
        data = _dataset(Sphere(2), 1, rng)
        np.testing.assert_allclose(gram_matrix(params, data), [[1.01]], rtol=1e-14)

    def test_duplicate_points_need_noise_or_jitter(self, rng):
        x = random_point(Sphere(2), rng)
        data = GpDataset.from_points([x, x], [0.3, 0.3])
        noisy = KernelParams(lengthscale=1.0, amplitude=1.0, noise=1e-4)
        model = GpModel.build(noisy, data)
        assert model.jitter == 0.0
        noiseless = KernelParams(lengthscale=1.0, amplitude=1.0, noise=0.0)
        model = GpModel.build(noiseless, data)
        assert model.jitter > 0.0

    def test_eigenvalues_at_least_noise(self, rng):
        # Oracle: eigendecomposition of the assembled matrix.
        params = KernelParams(lengthscale=0.8, amplitude=2.0, noise=0.05)
        data = _dataset(Sphere(2), 5, rng)
        eigs = np.linalg.eigvalsh(gram_matrix(params, data))
        assert eigs.min() >= params.noise - 1e-10

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_kernel_part_psd_random_sets(self, kind, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.5, noise=0.0)
        for n in (2, 5, 9):
            data = _dataset(kind, n, rng)
            eigs = np.linalg.eigvalsh(gram_matrix(params, data))
            assert eigs.min() >= -1e-8 * params.amplitude

    def test_chol_reconstructs_gram(self, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.0, noise=1e-4)
        data = _dataset(Spd(3), 6, rng)
        model = GpModel.build(params, data)
        gram = gram_matrix(params, data)
        np.testing.assert_allclose(model.chol @ model.chol.T, gram, rtol=1e-8)


class TestPosterior:
    def test_noise_free_interpolation(self, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.0, noise=0.0)
        data = _dataset(Sphere(2), 5, rng)
        model = GpModel.build(params, data)
        for point, value in zip(data.points, data.values):
            mean, var = posterior(model, point)
            assert mean == pytest.approx(value, abs=1e-8)
            assert var <= 1e-8

    def test_prior_reversion_far_away(self, rng):
        params = KernelParams(lengthscale=0.05, amplitude=1.7, noise=1e-6)
        north = ManifoldPoint(Sphere(2), [0.0, 0.0, 1.0])
        nearby = [
            ManifoldPoint(Sphere(2), [math.sin(0.01 * (i + 1)), 0.0, math.cos(0.01 * (i + 1))])
            for i in range(3)
        ]
        data = GpDataset.from_points(nearby, [1.0, 2.0, 3.0])
        model = GpModel.build(params, data)
        south = ManifoldPoint(Sphere(2), [0.0, 0.0, -1.0])
        mean, var = posterior(model, south)
        assert abs(mean) < 1e-6
        assert var == pytest.approx(params.amplitude, abs=1e-6)
        del north

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_matches_dense_solve_oracle(self, kind, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.3, noise=1e-3)
        data = _dataset(kind, 5, rng)
        model = GpModel.build(params, data)
        gram = gram_matrix(params, data)
        query = random_point(kind, rng)
        k_vec = np.array([kernel_eval(params, p, query) for p in data.points])
        solve = np.linalg.solve(gram, data.values)
        mean_oracle = float(k_vec @ solve)
        var_oracle = params.amplitude - float(k_vec @ np.linalg.solve(gram, k_vec))
        mean, var = posterior(model, query)
        assert mean == pytest.approx(mean_oracle, abs=1e-10)
        assert var == pytest.approx(var_oracle, abs=1e-10)

    def test_variance_shrinks_with_data(self, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.0, noise=1e-4)
        kind = Sphere(2)
        for _ in range(20):
            data = _dataset(kind, 4, rng)
            query = random_point(kind, rng)
            _, var_before = posterior(GpModel.build(params, data), query)
            grown = data.append(random_point(kind, rng), 0.5)
            _, var_after = posterior(GpModel.build(params, grown), query)
            assert var_after <= var_before + 1e-10

    def test_mean_invariant_under_permutation(self, rng):
        params = KernelParams(lengthscale=1.0, amplitude=1.0, noise=1e-5)
        data = _dataset(Sphere(2), 6, rng)
        query = random_point(Sphere(2), rng)
        mean, _ = posterior(GpModel.build(params, data), query)
        perm = np.random.default_rng(3).permutation(6)
        shuffled = GpDataset.from_points(
            [data.points[i] for i in perm], data.values[perm]
        )
        mean_shuffled, _ = posterior(GpModel.build(params, shuffled), query)
        assert mean_shuffled == pytest.approx(mean, abs=1e-12)

    def test_depends_only_on_embeddings(self, rng):
        # Replacing a frame by a rotation of itself changes nothing.
        kind = Grassmann(2, 3)
        params = KernelParams(lengthscale=1.0, amplitude=1.0, noise=1e-5)
        points = [random_point(kind, rng) for _ in range(4)]
        values = rng.standard_normal(4)
        theta = 0.9
        rot = np.array(
            [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
        )
        rotated = [ManifoldPoint(kind, p.coords @ rot) for p in points]
        query = random_point(kind, rng)
        mean_a, var_a = posterior(
            GpModel.build(params, GpDataset.from_points(points, values)), query
        )
        mean_b, var_b = posterior(
            GpModel.build(params, GpDataset.from_points(rotated, values)), query
        )
        assert mean_b == pytest.approx(mean_a, abs=1e-10)
        assert var_b == pytest.approx(var_a, abs=1e-10)


class TestLogMarginalLikelihood:
    def test_single_standard_normal_observation(self, rng):
        # With one observation of 0 under unit prior variance the evidence is
        # the standard normal density at zero: -log(sqrt(2 pi)).
        x = random_point(Sphere(2), rng)
        data = GpDataset.from_points([x], [0.0])
        params = KernelParams(lengthscale=1.0, amplitude=0.75, noise=0.25)
        model = GpModel.build(params, data)
        assert log_marginal_likelihood(model) == pytest.approx(
            -0.5 * math.log(2.0 * math.pi), rel=1e-12
        )


class TestFitHyperparams:
    def test_requires_two_points(self, rng):
        data = _dataset(Sphere(2), 1, rng)
        bounds = KernelBounds((0.1, 10.0), (0.1, 10.0), (1e-8, 1.0))
        with pytest.raises(InvalidInputError):
            fit_hyperparams(data, median_heuristic_params(data), bounds)

    def test_fitted_within_bounds(self, rng):
        data = _dataset(Sphere(2), 8, rng)
        bounds = default_bounds(data)
        fitted = fit_hyperparams(data, median_heuristic_params(data), bounds, seed=1)
        assert bounds.lengthscale[0] <= fitted.lengthscale <= bounds.lengthscale[1]
        assert bounds.amplitude[0] <= fitted.amplitude <= bounds.amplitude[1]
        assert bounds.noise[0] <= fitted.noise <= bounds.noise[1]

    def test_recovers_known_lengthscale(self):
        # Self-consistency: data drawn from a surrogate with lengthscale 1
        # should be fitted with a lengthscale in [0.5, 2].
        gen = np.random.default_rng(0)
        kind = Sphere(2)
        points = [random_point(kind, gen) for _ in range(40)]
        true = KernelParams(lengthscale=1.0, amplitude=1.0, noise=1e-8)
        gram = gram_matrix(true, GpDataset.from_points(points, np.zeros(40)))
        values = np.linalg.cholesky(gram) @ gen.standard_normal(40)
        data = GpDataset.from_points(points, values)
        fitted = fit_hyperparams(
            data, median_heuristic_params(data), default_bounds(data), seed=0
        )
        assert 0.5 <= fitted.lengthscale <= 2.0

    def test_deterministic(self, rng):
        data = _dataset(Sphere(2), 10, rng)
        bounds = default_bounds(data)
        init = median_heuristic_params(data)
        a = fit_hyperparams(data, init, bounds, seed=5)
        b = fit_hyperparams(data, init, bounds, seed=5)
        assert a == b


class TestMedianHeuristic:
    def test_single_point_fallbacks(self, rng):
        data = _dataset(Sphere(2), 1, rng)
        params = median_heuristic_params(data)
        assert params.lengthscale == 1.0
        assert params.amplitude == 1e-6

    def test_scales_with_spread(self, rng):
        data = _dataset(Sphere(2), 12, rng)
        params = median_heuristic_params(data)
        assert 0.1 < params.lengthscale < 2.5
        assert params.noise == pytest.approx(1e-6 * params.amplitude)


class TestDatasetValidation:
    def test_mixed_kinds_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            GpDataset.from_points(
                [random_point(Sphere(2), rng), random_point(Spd(2), rng)], [0.0, 1.0]
            )

    def test_nonfinite_values_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            GpDataset.from_points([random_point(Sphere(2), rng)], [np.inf])

    def test_append_preserves_original(self, rng):
        data = _dataset(Sphere(2), 3, rng)
        grown = data.append(random_point(Sphere(2), rng), 1.0)
        assert len(data) == 3
        assert len(grown) == 4
