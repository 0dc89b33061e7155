"""Monte-Carlo harness for the two-stage estimators.

Sampling is two-stage: draw n component indices from the generator
mixture (one per cluster), then m points from each drawn component.
Streams are counter-based (numpy Philox) and split per (grid cell,
replication) through SeedSequence spawn keys, so replications can run on
any number of worker threads without changing a single draw.

Draw contract per replication: first n uniforms pick the cluster
components, then an (n, m) uniform matrix picks the points, cluster-major
(paired sampling appends a second (n, m_y) matrix for the other side).
Inverse-CDF lookups turn uniforms into indices, so results do not depend
on numpy's choice algorithms.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import EstimateWarning, TooFewInnerSamplesError
from .estimators import (
    PairedSampleBlock,
    SampleBlock,
    distributional_correlation,
    distributional_covariance,
    distributional_variance,
)
from .exact import (
    DiscreteMixture,
    JointDiscreteMixture,
    correlation_exact,
    covariance_exact,
    variance_exact,
)
from .kernels import VECTOR, KernelSpec

RECOMMENDED_MIN_CLUSTERS = 10
RECOMMENDED_MIN_INNER = 10

ESTIMATORS = ("variance", "covariance", "correlation")


def recommend_sizes() -> tuple[int, int]:
    """Recommended minimum (clusters, points per cluster) = (10, 10)."""
    return (RECOMMENDED_MIN_CLUSTERS, RECOMMENDED_MIN_INNER)


def resolve_threads(threads=None) -> int:
    """Worker-thread cap: explicit argument, else KSCORE_THREADS, else 1."""
    if threads is None:
        threads = os.environ.get("KSCORE_THREADS", "1")
    threads = int(threads)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


class _ComponentTable:
    """Per-component atom storage and inverse-CDF tables for one mixture."""

    def __init__(self, mix: DiscreteMixture):
        self.kind = mix.kind
        self.mix_cdf = np.cumsum(mix.probs)
        self.atom_cdfs = [np.cumsum(c.weights) for c in mix.components]
        if mix.kind == VECTOR:
            stacked = []
            widths = set()
            for comp in mix.components:
                arr = np.stack([np.asarray(a, dtype=np.float64) for a in comp.atoms])
                widths.add(arr.shape[1])
                stacked.append(arr)
            self.atoms = stacked
            self.uniform_width = widths.pop() if len(widths) == 1 else None
        else:
            self.atoms = [list(c.atoms) for c in mix.components]
            self.uniform_width = None


def _pick(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def _sample_clusters(table: _ComponentTable, comps, u):
    n, m = u.shape
    if table.kind == VECTOR and table.uniform_width is not None:
        dense = np.empty((n, m, table.uniform_width))
        for i in range(n):
            c = comps[i]
            dense[i] = table.atoms[c][_pick(table.atom_cdfs[c], u[i])]
        return SampleBlock.from_dense(dense)
    clusters = []
    for i in range(n):
        c = comps[i]
        idx = _pick(table.atom_cdfs[c], u[i])
        if table.kind == VECTOR:
            clusters.append(table.atoms[c][idx])
        else:
            clusters.append([table.atoms[c][j] for j in idx])
    return SampleBlock(clusters)


def sample_two_stage(rng, mix: DiscreteMixture, n: int, m: int) -> SampleBlock:
    """Draw n clusters of m points each from the mixture generator."""
    if n < 1 or m < 1:
        raise TooFewInnerSamplesError("n and m must be >= 1")
    table = mix if isinstance(mix, _ComponentTable) else _ComponentTable(mix)
    comps = _pick(table.mix_cdf, rng.random(n))
    return _sample_clusters(table, comps, rng.random((n, m)))


class _JointTable:
    def __init__(self, joint: JointDiscreteMixture):
        self.x = _ComponentTable(
            DiscreteMixture([p for p, _ in joint.pairs], joint.probs)
        )
        self.y = _ComponentTable(
            DiscreteMixture([q for _, q in joint.pairs], joint.probs)
        )
        self.cdf = self.x.mix_cdf


def sample_paired_two_stage(
    rng, joint: JointDiscreteMixture, n: int, m: int, m_y: int | None = None
) -> PairedSampleBlock:
    """Draw paired clusters: component pairs first, then both sides' points."""
    if m_y is None:
        m_y = m
    if n < 1 or m < 1 or m_y < 1:
        raise TooFewInnerSamplesError("n and m must be >= 1")
    table = joint if isinstance(joint, _JointTable) else _JointTable(joint)
    comps = _pick(table.cdf, rng.random(n))
    block_x = _sample_clusters(table.x, comps, rng.random((n, m)))
    block_y = _sample_clusters(table.y, comps, rng.random((n, m_y)))
    return PairedSampleBlock(block_x, block_y)


def replication_rng(seed: int, cell: int, replication: int):
    """Philox stream for one (grid cell, replication) pair."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(cell, replication))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimulationConfig:
    """What to simulate: estimator, kernel, source generator, sizes."""

    seed: int
    replications: int
    grid: tuple[tuple[int, int], ...]
    estimator: str
    kernel: KernelSpec
    source: object  # DiscreteMixture or JointDiscreteMixture

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.grid:
            raise ValueError("grid must not be empty")
        if self.estimator not in ESTIMATORS:
            raise ValueError(
                f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}"
            )
        min_inner = 2 if self.estimator == "variance" else 1
        for n, m in self.grid:
            if n < 2:
                raise ValueError(f"grid cluster counts must be >= 2, got {n}")
            if m < min_inner:
                raise ValueError(
                    f"{self.estimator} runs need m >= {min_inner}, got {m}"
                )
        paired = isinstance(self.source, JointDiscreteMixture)
        if self.estimator == "variance" and paired:
            raise ValueError("variance simulation takes a plain mixture")
        if self.estimator != "variance" and not paired:
            raise ValueError(f"{self.estimator} simulation takes a joint mixture")


@dataclass
class GridCell:
    """Monte-Carlo summary for one (n, m) grid point."""

    n: int
    m: int
    mean: float
    sd: float
    se: float
    exact: float
    mc_bias: float
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "mean": self.mean,
            "sd": self.sd,
            "se": self.se,
            "exact": self.exact,
            "mc_bias": self.mc_bias,
            "flags": list(self.flags),
        }


@dataclass
class SlopeFit:
    """Log-log convergence fit of MC estimator variance along one axis."""

    axis: str
    fixed: int
    sizes: tuple[int, ...]
    variance_slope: float
    sd_slope: float
    intercept: float
    r_squared: float

    def as_dict(self) -> dict:
        return {
            "axis": self.axis,
            "fixed": self.fixed,
            "sizes": list(self.sizes),
            "variance_slope": self.variance_slope,
            "sd_slope": self.sd_slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
        }


@dataclass
class SimulationResult:
    estimator: str
    kernel: KernelSpec
    seed: int
    replications: int
    exact: float
    cells: list[GridCell]
    slopes: list[SlopeFit]
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "kernel": self.kernel.as_dict(),
            "seed": self.seed,
            "replications": self.replications,
            "exact": self.exact,
            "cells": [c.as_dict() for c in self.cells],
            "slopes": [s.as_dict() for s in self.slopes],
            "flags": list(self.flags),
        }


def _exact_target(config: SimulationConfig) -> float:
    if config.estimator == "variance":
        return variance_exact(config.kernel, config.source)
    if config.estimator == "covariance":
        return covariance_exact(config.kernel, config.source)
    return correlation_exact(config.kernel, config.source)


def _ols(x: np.ndarray, y: np.ndarray):
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(np.einsum("i,i->", dx, dx))
    slope = float(np.einsum("i,i->", dx, dy)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ss_res = float(np.einsum("i,i->", resid, resid))
    ss_tot = float(np.einsum("i,i->", dy, dy))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return slope, intercept, r2


def _fit_slopes(cells: list[GridCell]) -> list[SlopeFit]:
    """Log-log OLS of MC variance vs n (fixed m) and vs m (fixed n).

    Needs >= 4 distinct sizes with positive MC variance along the axis.
    The fitted slope is for the variance; the sd slope is half of it.
    """
    fits = []
    for axis, fixed_of, size_of in (
        ("n", lambda c: c.m, lambda c: c.n),
        ("m", lambda c: c.n, lambda c: c.m),
    ):
        groups: dict[int, dict[int, GridCell]] = {}
        for cell in cells:
            groups.setdefault(fixed_of(cell), {})[size_of(cell)] = cell
        for fixed, by_size in sorted(groups.items()):
            if len(by_size) < 4:
                continue
            sizes = sorted(by_size)
            variances = [by_size[s].sd ** 2 for s in sizes]
            if any(v <= 0 for v in variances):
                continue
            x = np.log(np.asarray(sizes, dtype=np.float64))
            y = np.log(np.asarray(variances, dtype=np.float64))
            slope, intercept, r2 = _ols(x, y)
            if not math.isfinite(r2):
                continue
            fits.append(
                SlopeFit(
                    axis=axis,
                    fixed=fixed,
                    sizes=tuple(sizes),
                    variance_slope=slope,
                    sd_slope=slope / 2.0,
                    intercept=intercept,
                    r_squared=r2,
                )
            )
    return fits


def run(config: SimulationConfig, threads=None) -> SimulationResult:
    """Run the Monte-Carlo study described by config.

    Bit-identical results for a given config regardless of thread count:
    every (grid cell, replication) pair owns a private stream and writes
    its estimate into a preallocated slot; reductions run in replication
    order on the main thread.
    """
    threads = resolve_threads(threads)
    exact = _exact_target(config)
    spec = config.kernel
    estimator = config.estimator
    if estimator == "variance":
        table = _ComponentTable(config.source)
    else:
        table = _JointTable(config.source)
    rep_range = range(config.replications)
    cells = []
    result_flags: list[str] = []
    with warnings.catch_warnings():
        # Negative estimates are routine inside an MC study.
        warnings.simplefilter("ignore", EstimateWarning)
        for cell_idx, (n, m) in enumerate(config.grid):
            values = np.empty(config.replications)

            def one(rep, _n=n, _m=m, _idx=cell_idx):
                rng = replication_rng(config.seed, _idx, rep)
                if estimator == "variance":
                    block = sample_two_stage(rng, table, _n, _m)
                    values[rep] = distributional_variance(spec, block)
                else:
                    paired = sample_paired_two_stage(rng, table, _n, _m)
                    if estimator == "covariance":
                        values[rep] = distributional_covariance(spec, paired)
                    else:
                        values[rep] = distributional_correlation(spec, paired).raw

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(one, rep_range))
            else:
                for rep in rep_range:
                    one(rep)
            mean = float(values.mean())
            sd = float(values.std(ddof=1)) if config.replications > 1 else 0.0
            se = sd / math.sqrt(config.replications)
            flags = []
            if n < RECOMMENDED_MIN_CLUSTERS or m < RECOMMENDED_MIN_INNER:
                flags.append("below_recommended_sizes")
                if "below_recommended_sizes" not in result_flags:
                    result_flags.append("below_recommended_sizes")
            cells.append(
                GridCell(
                    n=n,
                    m=m,
                    mean=mean,
                    sd=sd,
                    se=se,
                    exact=exact,
                    mc_bias=mean - exact,
                    flags=tuple(flags),
                )
            )
    return SimulationResult(
        estimator=estimator,
        kernel=spec,
        seed=config.seed,
        replications=config.replications,
        exact=exact,
        cells=cells,
        slopes=_fit_slopes(cells),
        flags=tuple(result_flags),
    )
