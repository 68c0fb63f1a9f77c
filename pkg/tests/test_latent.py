import json

import numpy as np
import pytest

from ivmcd import (LatentSpec, ValidationError, build_moments,
                   cross_expectation, latent_mean, latent_second_moment,
                   specs_from_config)
from oracles import midpoint_quadrature, triangular_quantile

# one-off oracle values, frozen from 1e6-point midpoint quadrature of scipy's
# triangular quantile (see oracles.py); closed forms shown for reference
TRI_MODE = -0.3
TRI_MEAN = -0.1                      # mode / 3
TRI_SECOND = 0.18166666666666667     # (1 + mode^2) / 6
TRI_CROSS_UNIFORM = 0.2363333331629428


class TestLatentMean:
    def test_uniform_zero(self):
        assert latent_mean(LatentSpec.uniform()) == 0.0

    def test_degenerate_zero(self):
        assert latent_mean(LatentSpec.degenerate()) == 0.0

    def test_triangular_matches_quadrature_oracle(self):
        oracle = midpoint_quadrature(triangular_quantile(TRI_MODE))
        assert oracle == pytest.approx(TRI_MEAN, abs=1e-6)
        assert latent_mean(LatentSpec.triangular(TRI_MODE)) == pytest.approx(
            oracle, abs=1e-6)

    def test_empirical_is_sample_mean(self, rng):
        sample = rng.uniform(-1, 1, 101)
        assert latent_mean(LatentSpec.empirical(sample)) == pytest.approx(
            sample.mean())


class TestLatentSecondMoment:
    def test_uniform_third(self):
        # delta = E(U^2)/4 = 1/12, the standard uniform-latent case
        assert latent_second_moment(LatentSpec.uniform()) == pytest.approx(1 / 3)

    def test_degenerate_zero(self):
        assert latent_second_moment(LatentSpec.degenerate()) == 0.0

    def test_triangular_matches_quadrature_oracle(self):
        q = triangular_quantile(TRI_MODE)
        oracle = midpoint_quadrature(lambda t: q(t) ** 2)
        assert oracle == pytest.approx(TRI_SECOND, abs=1e-6)
        assert latent_second_moment(LatentSpec.triangular(TRI_MODE)) == pytest.approx(
            oracle, abs=1e-6)

    def test_empirical_converges_to_uniform(self):
        sample = np.random.default_rng(7).uniform(-1, 1, 100_000)
        assert latent_second_moment(LatentSpec.empirical(sample)) == pytest.approx(
            1 / 3, abs=0.02)


class TestCrossExpectation:
    def test_uniform_pair(self):
        # quadrature oracle of (2t-1)^2; analytic value 1/3
        oracle = midpoint_quadrature(lambda t: (2 * t - 1) ** 2)
        assert oracle == pytest.approx(1 / 3, abs=1e-9)
        got = cross_expectation(LatentSpec.uniform(), LatentSpec.uniform())
        assert got == pytest.approx(1 / 3, abs=1e-6)

    def test_degenerate_annihilates(self):
        got = cross_expectation(LatentSpec.degenerate(), LatentSpec.triangular(0.4))
        assert got == 0.0

    def test_triangular_uniform_frozen_oracle(self):
        got = cross_expectation(LatentSpec.triangular(TRI_MODE), LatentSpec.uniform())
        assert got == pytest.approx(TRI_CROSS_UNIFORM, abs=1e-5)

    def test_same_spec_equals_second_moment(self):
        # exact-quantile families agree to quadrature error; the empirical
        # family adds an O(1/k) interpolation bias, so use a large sample
        for spec, tol in ((LatentSpec.uniform(), 1e-7),
                          (LatentSpec.triangular(0.25), 1e-6),
                          (LatentSpec.empirical(np.linspace(-0.9, 0.8, 4001)), 1e-3)):
            got = cross_expectation(spec, spec, quad_points=65536)
            assert got == pytest.approx(latent_second_moment(spec), abs=tol)

    def test_rejects_tiny_quadrature(self):
        with pytest.raises(ValidationError):
            cross_expectation(LatentSpec.uniform(), LatentSpec.uniform(),
                              quad_points=1)


class TestBuildMoments:
    def test_two_uniforms(self):
        mom = build_moments((LatentSpec.uniform(), LatentSpec.uniform()))
        assert np.allclose(mom.mean, 0.0)
        assert np.allclose(mom.range_weight, 1 / 12)
        assert np.allclose(mom.cross, 1 / 3, atol=1e-6)
        # comonotonic identical uniforms: covariance equals variance
        assert np.allclose(mom.qcov, mom.cross)

    def test_all_degenerate_is_conventional_case(self):
        mom = build_moments((LatentSpec.degenerate(),) * 3)
        assert np.all(mom.cross == 0)
        assert np.all(mom.qcov == 0)
        assert np.allclose(mom.embed, np.hstack([np.eye(3), np.zeros((3, 3))]))

    def test_single_triangular_consistent_with_scalars(self):
        mom = build_moments((LatentSpec.triangular(TRI_MODE),))
        assert mom.mean[0] == pytest.approx(TRI_MEAN)
        assert mom.cross[0, 0] == pytest.approx(TRI_SECOND)
        assert mom.qcov[0, 0] == pytest.approx(TRI_SECOND - TRI_MEAN ** 2)

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            build_moments(())


class TestInvariants:
    def test_mean_sq_below_second_moment(self, rng):
        specs = [LatentSpec.uniform(), LatentSpec.degenerate()]
        specs += [LatentSpec.triangular(m) for m in rng.uniform(-0.95, 0.95, 20)]
        specs += [LatentSpec.empirical(rng.uniform(-1, 1, rng.integers(5, 200)))
                  for _ in range(20)]
        for spec in specs:
            second = latent_second_moment(spec)
            assert 0.0 <= second <= 1.0
            assert latent_mean(spec) ** 2 <= second + 1e-12

    def test_qcov_positive_semidefinite(self, rng):
        for trial in range(20):
            p = int(rng.integers(2, 7))
            specs = []
            for _ in range(p):
                kind = rng.integers(0, 3)
                if kind == 0:
                    specs.append(LatentSpec.uniform())
                elif kind == 1:
                    specs.append(LatentSpec.triangular(float(rng.uniform(-0.9, 0.9))))
                else:
                    specs.append(LatentSpec.empirical(rng.uniform(-1, 1, 128)))
            mom = build_moments(specs)
            assert np.linalg.eigvalsh(mom.qcov).min() >= -1e-10

    def test_symmetric_iid_reduction(self):
        # identical symmetric specs: mean vanishes and qcov equals cross, so the
        # covariance formula reduces to S_CC + delta * S_RR
        mom = build_moments((LatentSpec.uniform(),) * 4)
        assert np.allclose(mom.mean, 0.0)
        assert np.allclose(mom.qcov, mom.cross)


class TestQuantileAndValidation:
    def test_quantile_monotone_and_bounded(self, rng):
        t = np.sort(rng.uniform(0.001, 0.999, 500))
        for spec in (LatentSpec.uniform(), LatentSpec.triangular(-0.42),
                     LatentSpec.empirical(rng.uniform(-1, 1, 33)),
                     LatentSpec.degenerate()):
            q = spec.quantile(t)
            assert np.all(np.diff(q) >= -1e-12)
            assert np.all(q >= -1.0 - 1e-12) and np.all(q <= 1.0 + 1e-12)

    def test_boundary_mode_rejected(self):
        with pytest.raises(ValidationError):
            LatentSpec.triangular(1.0)

    def test_bad_empirical_rejected(self):
        with pytest.raises(ValidationError):
            LatentSpec.empirical([])
        with pytest.raises(ValidationError):
            LatentSpec.empirical([0.0, 1.5])

    def test_quantile_domain_is_open(self):
        with pytest.raises(ValidationError):
            LatentSpec.uniform().quantile(np.array([0.0, 0.5]))


class TestConfigParsing:
    def test_round_trip(self, tmp_path):
        (tmp_path / "u2.csv").write_text("0.5\n-0.25\n0.0\n")
        config = {"latent": [{"kind": "uniform"},
                             {"kind": "triangular", "mode": -0.3},
                             {"kind": "empirical", "file": "u2.csv"},
                             {"kind": "degenerate"}]}
        specs = specs_from_config(json.loads(json.dumps(config)), base_dir=tmp_path)
        assert [s.kind for s in specs] == ["uniform", "triangular", "empirical",
                                           "degenerate"]
        assert specs[1].mode == -0.3
        assert np.allclose(specs[2].sample, [-0.25, 0.0, 0.5])

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValidationError):
            specs_from_config({"latent": [{"kind": "beta"}]})
