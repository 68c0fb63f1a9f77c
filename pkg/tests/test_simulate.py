import numpy as np
import pytest

from ivmcd import (ValidationError, angle_error, classification_metrics,
                   frobenius_rel_error, generate_scenario, kl_divergence_gauss,
                   run_grid)
from ivmcd.estimator import ImcdConfig
from ivmcd.simulate import (ScenarioConfig, cells_from_config, paper_grid,
                            results_csv_bytes)


class TestGenerateScenario:
    def test_paper_ground_truth_diagonal(self):
        _, truth, _ = generate_scenario(ScenarioConfig(p=5, n=50, epsilon=0.0,
                                                       latent="uniform", seed=0))
        assert np.allclose(np.round(np.diag(truth.matrix), 2),
                           [0.02, 0.10, 0.22, 0.39, 0.61])
        off = truth.matrix - np.diag(np.diag(truth.matrix))
        assert np.allclose(off, 0.0, atol=1e-12)

    def test_no_contamination_no_labels(self):
        ds, _, _ = generate_scenario(ScenarioConfig(p=3, n=200, epsilon=0.0,
                                                    seed=1))
        assert ds.labels.sum() == 0

    def test_contamination_count_and_shift(self):
        cfg = ScenarioConfig(p=4, n=400, epsilon=0.1, scheme="both",
                             latent="uniform", seed=2)
        ds, _, _ = generate_scenario(cfg)
        assert ds.labels.sum() == 40
        out = ds.labels == 1
        # center shift +2 and range shift +5 on the first variable
        assert ds.centers[out, 0].mean() == pytest.approx(2.0, abs=0.2)
        assert ds.ranges[out, 0].mean() == pytest.approx(8.0, abs=0.3)
        assert ds.centers[~out, 0].mean() == pytest.approx(0.0, abs=0.15)

    def test_ranges_nonnegative(self):
        for seed in range(5):
            ds, _, _ = generate_scenario(ScenarioConfig(p=5, n=2000, epsilon=0.2,
                                                        scheme="range", seed=seed))
            assert np.all(ds.ranges >= 0.0)

    def test_large_sample_matches_target_cov(self):
        cfg = ScenarioConfig(p=3, n=100_000, epsilon=0.0, latent="uniform", seed=3)
        ds, _, _ = generate_scenario(cfg)
        from ivmcd.simulate import _population_cov_2p
        x = np.hstack([ds.centers, ds.ranges])
        emp = np.cov(x.T, bias=True)
        target = _population_cov_2p(cfg)
        assert np.max(np.abs(emp - target)) < 0.02

    def test_ground_truth_dual_path_symmetric_case(self):
        # symmetric iid latents: truth must equal S_CC + delta * S_RR
        cfg = ScenarioConfig(p=4, n=10, epsilon=0.0, latent="uniform", seed=4)
        _, truth, _ = generate_scenario(cfg)
        from ivmcd.simulate import _population_cov_2p
        cov2p = _population_cov_2p(cfg)
        p = 4
        want = cov2p[:p, :p] + (1 / 12) * cov2p[p:, p:]
        assert np.allclose(truth.matrix, want, atol=1e-7)

    def test_triangular_modes_in_band(self):
        ds, _, _ = generate_scenario(ScenarioConfig(p=6, n=10, epsilon=0.0,
                                                    latent="triangular", seed=5))
        for spec in ds.specs:
            assert -0.5 <= spec.mode <= -0.2

    def test_corr_block_is_spd_and_used(self):
        cfg = ScenarioConfig(p=5, n=10, epsilon=0.0, corr_block=True, seed=6)
        from ivmcd.simulate import _population_cov_2p
        cov2p = _population_cov_2p(cfg)
        assert np.linalg.eigvalsh(cov2p).min() > 0
        assert cov2p[0, 1] != 0.0

    def test_determinism(self):
        a, ta, _ = generate_scenario(ScenarioConfig(p=3, n=50, epsilon=0.1, seed=9))
        b, tb, _ = generate_scenario(ScenarioConfig(p=3, n=50, epsilon=0.1, seed=9))
        assert np.array_equal(a.centers, b.centers)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(ta.matrix, tb.matrix)

    def test_epsilon_validated(self):
        with pytest.raises(ValidationError):
            ScenarioConfig(p=2, n=10, epsilon=1.0)


class TestMatrixMetrics:
    def test_frobenius_trivial_values(self, rng):
        t = rng.normal(0, 1, (3, 3))
        assert frobenius_rel_error(t, t) == 0.0
        assert frobenius_rel_error(2 * t, t) == pytest.approx(1.0)

    def test_frobenius_matches_double_loop(self, rng):
        est = rng.normal(0, 1, (3, 3))
        tru = rng.normal(0, 1, (3, 3))
        num = sum((est[i, j] - tru[i, j]) ** 2 for i in range(3) for j in range(3))
        den = sum(tru[i, j] ** 2 for i in range(3) for j in range(3))
        assert frobenius_rel_error(est, tru) == pytest.approx(
            (num ** 0.5) / (den ** 0.5))

    def test_kl_trivial_and_hand_value(self):
        eye = np.eye(1)
        assert kl_divergence_gauss(eye, eye) == pytest.approx(0.0)
        # est = 2I, truth = I, p = 1: (2 - log 2 - 1)/2
        want = 0.5 * (2.0 - np.log(2.0) - 1.0)
        assert want == pytest.approx(0.1534, abs=5e-5)
        assert kl_divergence_gauss(2 * eye, eye) == pytest.approx(want)

    def test_kl_asymmetric_and_nonnegative(self, rng):
        a = rng.normal(0, 1, (3, 3))
        a = a @ a.T + np.eye(3)
        b = rng.normal(0, 1, (3, 3))
        b = b @ b.T + np.eye(3)
        ab = kl_divergence_gauss(a, b)
        ba = kl_divergence_gauss(b, a)
        assert ab >= 0 and ba >= 0
        assert ab != pytest.approx(ba)

    def test_angle_trivial_and_scale_invariant(self, rng):
        t = rng.normal(0, 1, (4, 4))
        t = t @ t.T
        assert angle_error(t, t) == pytest.approx(0.0, abs=1e-12)
        assert angle_error(3.7 * t, t) == pytest.approx(0.0, abs=1e-12)

    def test_angle_matches_dot_product_oracle(self, rng):
        a = rng.normal(0, 1, (3, 3)); a = a @ a.T
        b = rng.normal(0, 1, (3, 3)); b = b @ b.T
        ea = np.sort(np.linalg.eigvalsh(a))
        eb = np.sort(np.linalg.eigvalsh(b))
        want = 1 - float(ea @ eb) / (np.linalg.norm(ea) * np.linalg.norm(eb))
        assert angle_error(a, b) == pytest.approx(want, abs=1e-12)


class TestClassificationMetrics:
    def test_perfect_agreement(self):
        flags = np.array([0, 1, 0, 1, 1])
        m = classification_metrics(flags, flags)
        assert all(m[k] == 1.0 for k in ("pr1", "re1", "pr0", "re0", "acc",
                                         "f1", "gmean"))

    def test_all_missed(self):
        m = classification_metrics(np.zeros(6), np.array([0, 0, 1, 1, 0, 1]))
        assert m["re1"] == 0.0 and m["gmean"] == 0.0

    def test_hand_tabulated_case(self):
        flags = np.array([1, 1, 0, 0, 1, 0, 0, 0, 1, 0])
        labels = np.array([1, 0, 1, 0, 1, 0, 0, 1, 0, 0])
        # tp=2 fp=2 fn=2 tn=4 by direct count
        m = classification_metrics(flags, labels)
        assert m["pr1"] == pytest.approx(0.5)
        assert m["re1"] == pytest.approx(0.5)
        assert m["pr0"] == pytest.approx(4 / 6)
        assert m["re0"] == pytest.approx(4 / 6)
        assert m["acc"] == pytest.approx(0.6)
        assert m["f1"] == pytest.approx(0.5)

    def test_identities(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 40))
            flags = rng.integers(0, 2, n)
            labels = rng.integers(0, 2, n)
            m = classification_metrics(flags, labels)
            tp = int(np.sum((flags == 1) & (labels == 1)))
            tn = int(np.sum((flags == 0) & (labels == 0)))
            assert m["acc"] == (tp + tn) / n
            assert m["gmean"] ** 2 == pytest.approx(m["re0"] * m["re1"])


class TestRunGrid:
    CELL = ScenarioConfig(p=3, n=80, epsilon=0.1, scheme="center",
                          latent="uniform")
    FAST = ImcdConfig(n_starts=40)

    def test_row_counts(self):
        table = run_grid([self.CELL], reps=2, seed=5, imcd_config=self.FAST)
        for method in ("adjbox.Classic", "farness.IMCD"):
            rows = [r for r in table if r["method"] == method
                    and r["metric"] == "re1"]
            assert len(rows) == 2
        cov_rows = [r for r in table if r["method"] == "raw.Classic"]
        assert len(cov_rows) == 6  # 3 matrix metrics x 2 reps

    def test_deterministic_bytes_and_thread_invariance(self):
        t1 = run_grid([self.CELL], reps=3, seed=7, threads=1,
                      imcd_config=self.FAST)
        t2 = run_grid([self.CELL], reps=3, seed=7, threads=4,
                      imcd_config=self.FAST)
        t3 = run_grid([self.CELL], reps=3, seed=7, threads=1,
                      imcd_config=self.FAST)
        assert results_csv_bytes(t1) == results_csv_bytes(t2)
        assert results_csv_bytes(t1) == results_csv_bytes(t3)

    def test_paper_grid_has_96_cells(self):
        cells = paper_grid()
        assert len(cells) == 96
        assert len({(c.p, c.n, c.epsilon, c.scheme, c.latent)
                    for c in cells}) == 96

    def test_cells_config_rejects_unknown_key(self):
        with pytest.raises(ValidationError, match="unknown key"):
            cells_from_config({"cells": [{"p": 3, "n": 50, "epsilon": 0.1,
                                          "shape": "oops"}]})

    def test_scenario_numbering(self):
        assert ScenarioConfig(p=2, n=10, epsilon=0.0, scheme="center",
                              latent="uniform").scenario_id == 1
        assert ScenarioConfig(p=2, n=10, epsilon=0.0, scheme="range",
                              latent="triangular").scenario_id == 5
