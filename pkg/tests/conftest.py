"""Shared fixtures: fixed reference mixtures and joint variants.

The five reference cases cover both vector kernels (rbf, laplacian,
polynomial) and the discrete delta kernel, in one and two dimensions,
with duplicated atoms across components so duplicate-merging paths are
exercised. Tests treat these as frozen: changing them invalidates the
Monte-Carlo acceptance baselines.
"""

import numpy as np
import pytest

from kscore import (
    DiscreteDistribution,
    DiscreteMixture,
    JointDiscreteMixture,
    KernelSpec,
)


def vec_dist(atoms, weights) -> DiscreteDistribution:
    return DiscreteDistribution(
        [np.asarray(a, dtype=np.float64) for a in atoms], weights
    )


def _rbf_1d() -> tuple[KernelSpec, DiscreteMixture]:
    comps = [
        vec_dist([[0.0], [1.0]], [0.5, 0.5]),
        vec_dist([[2.0], [3.0]], [0.25, 0.75]),
    ]
    return KernelSpec("rbf", gamma=1.0), DiscreteMixture(comps, [0.6, 0.4])


def _rbf_2d() -> tuple[KernelSpec, DiscreteMixture]:
    comps = [
        vec_dist([[0.0, 0.0], [1.0, 1.0]], [0.5, 0.5]),
        vec_dist([[1.0, 0.0], [0.0, 1.0]], [0.3, 0.7]),
        vec_dist([[2.0, 2.0]], [1.0]),
    ]
    return KernelSpec("rbf", gamma=0.5), DiscreteMixture(comps, [0.5, 0.3, 0.2])


def _laplacian_1d() -> tuple[KernelSpec, DiscreteMixture]:
    comps = [
        vec_dist([[0.0], [2.0]], [0.5, 0.5]),
        vec_dist([[1.0]], [1.0]),
    ]
    return KernelSpec("laplacian", gamma=0.7), DiscreteMixture(comps, [0.5, 0.5])


def _polynomial_2d() -> tuple[KernelSpec, DiscreteMixture]:
    comps = [
        vec_dist([[1.0, 0.0], [0.0, 1.0]], [0.4, 0.6]),
        vec_dist([[1.0, 1.0], [-1.0, 1.0]], [0.5, 0.5]),
    ]
    spec = KernelSpec("polynomial", degree=2, offset=1.0, scale=2.0)
    return spec, DiscreteMixture(comps, [0.5, 0.5])


def _delta_int() -> tuple[KernelSpec, DiscreteMixture]:
    comps = [
        vec_dist([[0.0], [1.0], [2.0]], [0.2, 0.3, 0.5]),
        vec_dist([[1.0], [3.0]], [0.6, 0.4]),
    ]
    return KernelSpec("delta"), DiscreteMixture(comps, [0.7, 0.3])


# name -> (kernel, mixture); iteration order is fixed.
REFERENCE_CASES = {
    "rbf_1d": _rbf_1d(),
    "rbf_2d": _rbf_2d(),
    "laplacian_1d": _laplacian_1d(),
    "polynomial_2d": _polynomial_2d(),
    "delta_int": _delta_int(),
}


def coupled_joint(mix: DiscreteMixture) -> JointDiscreteMixture:
    """Both sides see the same component draw: positively dependent."""
    return JointDiscreteMixture([(c, c) for c in mix.components], mix.probs)


def crossed_joint(mix: DiscreteMixture) -> JointDiscreteMixture:
    """One side sees the component order reversed: dependence varies."""
    rev = list(reversed(mix.components))
    return JointDiscreteMixture(list(zip(mix.components, rev)), mix.probs)


# Joint variants used by the paired-estimator tests, same order/names.
JOINT_CASES = {name: coupled_joint(mix) for name, (_, mix) in REFERENCE_CASES.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
