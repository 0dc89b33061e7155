"""Monte-Carlo harness: stream contract, determinism, statistics."""

import math

import numpy as np
import pytest

import kscore.simulate as sim
from conftest import REFERENCE_CASES, coupled_joint, vec_dist
from kscore import (
    DiscreteDistribution,
    DiscreteMixture,
    GridCell,
    KernelSpec,
    SimulationConfig,
    covariance_exact,
    recommend_sizes,
    replication_rng,
    run_simulation,
    sample_paired_two_stage,
    sample_two_stage,
    variance_exact,
)

SPEC, MIX = REFERENCE_CASES["rbf_1d"]


class TestSampling:
    def test_draw_contract(self):
        """One replication consumes exactly n + n*m uniforms, cluster-major."""
        n, m = 3, 4
        rng = replication_rng(123, 0, 0)
        block = sample_two_stage(rng, MIX, n, m)

        ref = replication_rng(123, 0, 0)
        comp_u = ref.random(n)
        inner_u = ref.random((n, m))
        mix_cdf = np.cumsum(MIX.probs)
        for i in range(n):
            c = min(
                int(np.searchsorted(mix_cdf, comp_u[i], side="right")),
                len(MIX.components) - 1,
            )
            comp = MIX.components[c]
            cdf = np.cumsum(comp.weights)
            for j in range(m):
                idx = min(
                    int(np.searchsorted(cdf, inner_u[i, j], side="right")),
                    len(comp.weights) - 1,
                )
                expected = np.asarray(comp.atoms[idx], dtype=np.float64)
                assert np.array_equal(block.dense[i, j], expected)

    def test_point_mass_mixture(self):
        mix = DiscreteMixture([vec_dist([[7.0]], [1.0])], [1.0])
        rng = replication_rng(0, 0, 0)
        block = sample_two_stage(rng, mix, 4, 3)
        assert np.all(block.dense == 7.0)

    def test_component_frequencies(self):
        # Atoms of component 1 are {0,1}; of component 2 are {2,3}.
        rng = replication_rng(42, 0, 0)
        block = sample_two_stage(rng, MIX, 4000, 1)
        frac = float(np.mean(block.dense[:, 0, 0] <= 1.0))
        se = math.sqrt(0.6 * 0.4 / 4000)
        assert abs(frac - 0.6) <= 3 * se

    def test_atom_frequencies_within_component(self):
        rng = replication_rng(43, 0, 0)
        mix = DiscreteMixture([vec_dist([[0.0], [1.0]], [0.25, 0.75])], [1.0])
        block = sample_two_stage(rng, mix, 10, 500)
        frac = float(np.mean(block.dense == 1.0))
        se = math.sqrt(0.75 * 0.25 / 5000)
        assert abs(frac - 0.75) <= 3 * se

    def test_paired_sampling_shares_component_draws(self):
        a = vec_dist([[0.0]], [1.0])
        b = vec_dist([[1.0]], [1.0])
        joint = coupled_joint(DiscreteMixture([a, b], [0.5, 0.5]))
        rng = replication_rng(9, 0, 0)
        paired = sample_paired_two_stage(rng, joint, 50, 2)
        # Coupled point masses: both sides of each cluster identical.
        assert np.array_equal(paired.x.dense, paired.y.dense)

    def test_token_mixture_sampling(self):
        comp = DiscreteMixture(
            [DiscreteDistribution([("a",), ("b",)], [0.5, 0.5])], [1.0]
        )
        rng = replication_rng(1, 0, 0)
        block = sample_two_stage(rng, comp, 3, 4)
        assert block.dense is None
        assert block.sizes == (4, 4, 4)
        assert all(p in {("a",), ("b",)} for c in block.clusters for p in c)


class TestRun:
    def config(self, **kw):
        base = dict(
            seed=7,
            replications=40,
            grid=((4, 5),),
            estimator="variance",
            kernel=SPEC,
            source=MIX,
        )
        base.update(kw)
        return SimulationConfig(**base)

    def test_thread_count_does_not_change_results(self):
        r1 = run_simulation(self.config(), threads=1)
        r3 = run_simulation(self.config(), threads=3)
        for c1, c3 in zip(r1.cells, r3.cells):
            assert c1.mean == c3.mean
            assert c1.sd == c3.sd

    def test_repeat_runs_identical(self):
        r1 = run_simulation(self.config())
        r2 = run_simulation(self.config())
        assert [c.mean for c in r1.cells] == [c.mean for c in r2.cells]

    def test_exact_target_and_se(self):
        res = run_simulation(self.config())
        cell = res.cells[0]
        assert res.exact == variance_exact(SPEC, MIX)
        assert cell.exact == res.exact
        assert cell.se == cell.sd / math.sqrt(40)
        assert cell.mc_bias == cell.mean - cell.exact

    def test_advisory_flags(self):
        res = run_simulation(self.config(grid=((4, 5), (10, 10))))
        assert "below_recommended_sizes" in res.cells[0].flags
        assert res.cells[1].flags == ()
        assert "below_recommended_sizes" in res.flags

    def test_covariance_and_correlation_runs(self):
        joint = coupled_joint(MIX)
        res = run_simulation(
            self.config(estimator="covariance", source=joint, grid=((4, 1),))
        )
        assert res.exact == covariance_exact(SPEC, joint)
        assert math.isfinite(res.cells[0].mean)
        res = run_simulation(
            self.config(estimator="correlation", source=joint, grid=((6, 3),),
                        replications=20)
        )
        assert math.isfinite(res.cells[0].mean)

    def test_mc_mean_tracks_exact(self):
        res = run_simulation(self.config(replications=400, grid=((6, 6),)),
                             threads=2)
        cell = res.cells[0]
        assert abs(cell.mean - cell.exact) <= 4 * cell.se

    def test_config_validation(self):
        with pytest.raises(ValueError):
            self.config(replications=0)
        with pytest.raises(ValueError):
            self.config(grid=())
        with pytest.raises(ValueError):
            self.config(grid=((1, 5),))
        with pytest.raises(ValueError):
            self.config(grid=((4, 1),))  # variance needs m >= 2
        with pytest.raises(ValueError):
            self.config(estimator="median")
        with pytest.raises(ValueError):
            self.config(estimator="covariance")  # needs a joint source

    def test_recommend_sizes(self):
        assert recommend_sizes() == (10, 10)

    def test_resolve_threads(self, monkeypatch):
        monkeypatch.delenv("KSCORE_THREADS", raising=False)
        assert sim.resolve_threads(None) == 1
        monkeypatch.setenv("KSCORE_THREADS", "4")
        assert sim.resolve_threads(None) == 4
        assert sim.resolve_threads(2) == 2
        with pytest.raises(ValueError):
            sim.resolve_threads(0)


class TestSlopeFit:
    def synthetic_cells(self, power):
        cells = []
        for n in (4, 8, 16, 32, 64):
            sd = 2.0 * n ** (power / 2.0)
            cells.append(GridCell(n=n, m=20, mean=0.0, sd=sd, se=0.0,
                                  exact=0.0, mc_bias=0.0))
        return cells

    def test_recovers_known_power_law(self):
        fits = sim._fit_slopes(self.synthetic_cells(-1.0))
        fit = [f for f in fits if f.axis == "n"][0]
        assert fit.variance_slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.sd_slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.fixed == 20
        assert fit.sizes == (4, 8, 16, 32, 64)

    def test_needs_four_sizes(self):
        fits = sim._fit_slopes(self.synthetic_cells(-1.0)[:3])
        assert [f for f in fits if f.axis == "n"] == []

    def test_skips_zero_variance(self):
        cells = self.synthetic_cells(-1.0)
        cells[0].sd = 0.0
        assert [f for f in sim._fit_slopes(cells) if f.axis == "n"] == []
