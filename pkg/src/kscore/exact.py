"""Exact kernel-score quantities over finite discrete distributions.

Distributions are finite atom/weight lists; random generators are finite
mixtures over such distributions (each component is one possible draw of
the generator). Everything here is computed in closed form by direct
summation, so these values serve as oracles for the sample-based
estimators.

Atoms are compared by exact value (token tuples; float vectors bit-equal
after normalizing -0.0 to 0.0): duplicate atoms merge by weight addition
at construction.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import (
    DegenerateMarginalError,
    ProductTooLargeError,
    ShapeMismatchError,
)
from .estimators import DecompositionReport
from .kernels import (
    TOKENS,
    VECTOR,
    KernelSpec,
    as_tokens,
    as_vector,
    pairwise_matrix,
    point_kind,
)

_WEIGHT_TOL = 1e-12
_ENSEMBLE_STATE_CAP = 100_000


def _atom_key(point, kind):
    if kind == VECTOR:
        arr = as_vector(point)
        return (arr.size, (arr + 0.0).tobytes())
    return as_tokens(point)


class DiscreteDistribution:
    """Finite distribution: atoms with nonnegative weights summing to 1.

    Duplicate atoms (exact-value equality) are merged by adding weights;
    first-appearance order is kept.
    """

    def __init__(self, atoms, weights):
        atoms = list(atoms)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1 or len(atoms) != weights.size:
            raise ShapeMismatchError("need one weight per atom")
        if len(atoms) == 0:
            raise ValueError("a distribution needs at least one atom")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        total = math.fsum(weights.tolist())
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 (got {total!r})")
        kinds = {point_kind(a) for a in atoms}
        if len(kinds) > 1:
            raise ValueError("atoms mix vector and token kinds")
        self.kind = kinds.pop()
        merged: dict = {}
        out_atoms = []
        out_weights = []
        for atom, w in zip(atoms, weights):
            key = _atom_key(atom, self.kind)
            if key in merged:
                out_weights[merged[key]] += w
            else:
                merged[key] = len(out_atoms)
                if self.kind == VECTOR:
                    atom = as_vector(atom)
                else:
                    atom = as_tokens(atom)
                out_atoms.append(atom)
                out_weights.append(float(w))
        self.atoms = out_atoms
        self.weights = np.asarray(out_weights, dtype=np.float64)
        self._keys = list(merged.keys())
        self._self_norm_cache: dict[KernelSpec, float] = {}

    @classmethod
    def point_mass(cls, atom):
        return cls([atom], [1.0])

    @classmethod
    def mixture(cls, distributions, probs) -> "DiscreteDistribution":
        """Weighted pooling of distributions into one distribution."""
        distributions = list(distributions)
        probs = np.asarray(probs, dtype=np.float64)
        atoms = []
        weights = []
        for dist, p in zip(distributions, probs):
            atoms.extend(dist.atoms)
            weights.extend((p * dist.weights).tolist())
        return cls(atoms, weights)

    def __len__(self):
        return len(self.atoms)


class DiscreteMixture:
    """Finite random generator: component distributions with probabilities."""

    def __init__(self, components, probs):
        components = list(components)
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or len(components) != probs.size:
            raise ShapeMismatchError("need one probability per component")
        if len(components) == 0:
            raise ValueError("a mixture needs at least one component")
        if np.any(probs < 0):
            raise ValueError("component probabilities must be nonnegative")
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"component probabilities must sum to 1 (got {total!r})")
        kinds = {c.kind for c in components}
        if len(kinds) > 1:
            raise ValueError("components mix vector and token kinds")
        self.kind = kinds.pop()
        self.components = components
        self.probs = probs

    def __len__(self):
        return len(self.components)

    def mean(self) -> DiscreteDistribution:
        """The mean distribution (probability-weighted pooling)."""
        return DiscreteDistribution.mixture(self.components, self.probs)


class JointDiscreteMixture:
    """Paired generator: (P_i, Q_i) component pairs with probabilities."""

    def __init__(self, pairs, probs):
        pairs = [tuple(pair) for pair in pairs]
        if any(len(p) != 2 for p in pairs):
            raise ShapeMismatchError("each entry must be a (P, Q) pair")
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or len(pairs) != probs.size:
            raise ShapeMismatchError("need one probability per pair")
        if len(pairs) == 0:
            raise ValueError("a joint mixture needs at least one pair")
        if np.any(probs < 0):
            raise ValueError("pair probabilities must be nonnegative")
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"pair probabilities must sum to 1 (got {total!r})")
        kinds = {d.kind for pair in pairs for d in pair}
        if len(kinds) > 1:
            raise ValueError("paired distributions mix vector and token kinds")
        self.kind = kinds.pop()
        self.pairs = pairs
        self.probs = probs

    def __len__(self):
        return len(self.pairs)

    def marginal_x(self) -> DiscreteMixture:
        return DiscreteMixture([p for p, _ in self.pairs], self.probs)

    def marginal_y(self) -> DiscreteMixture:
        return DiscreteMixture([q for _, q in self.pairs], self.probs)


def _union(distributions):
    """Shared atom table: (atom list, per-distribution weight rows)."""
    index: dict = {}
    atoms = []
    rows = []
    for dist in distributions:
        row_idx = []
        for key, atom in zip(dist._keys, dist.atoms):
            pos = index.get(key)
            if pos is None:
                pos = len(atoms)
                index[key] = pos
                atoms.append(atom)
            row_idx.append(pos)
        rows.append((row_idx, dist.weights))
    W = np.zeros((len(rows), len(atoms)))
    for r, (idx, w) in enumerate(rows):
        W[r, idx] = w
    return atoms, W


def bilinear(spec: KernelSpec, p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """<p| k |q> = sum_{i,j} w_i v_j k(x_i, y_j).

    Symmetric in its arguments for every kernel here; bilinear(p, p) is
    the squared kernel norm of p (nonnegative for certified-psd kernels).
    """
    if q is p:
        cached = p._self_norm_cache.get(spec)
        if cached is not None:
            return cached
        K = pairwise_matrix(spec, p.atoms, p.atoms)
        value = float(np.einsum("i,ij,j->", p.weights, K, p.weights))
        p._self_norm_cache[spec] = value
        return value
    K = pairwise_matrix(spec, p.atoms, q.atoms)
    return float(np.einsum("i,ij,j->", p.weights, K, q.weights))


def kernel_entropy_exact(spec: KernelSpec, p: DiscreteDistribution) -> float:
    """Kernel entropy of a known distribution: -||p||^2."""
    return -bilinear(spec, p, p)


def kernel_score_exact(spec: KernelSpec, p: DiscreteDistribution, target_point) -> float:
    """Kernel score of a known distribution at one observed point.

    ||p||^2 - 2 * E_{X~p}[k(X, y)]. With the delta kernel this is the
    Brier score minus 1.
    """
    norm = bilinear(spec, p, p)
    col = pairwise_matrix(spec, p.atoms, [target_point])[:, 0]
    return norm - 2.0 * float(np.einsum("i,i->", p.weights, col))


def expected_score_exact(
    spec: KernelSpec, mix: DiscreteMixture, target: DiscreteDistribution
) -> float:
    """E[score] under generator and target, by direct double expectation.

    Computed as sum_c pi_c sum_a q_a score(P_c, y_a): deliberately
    independent of the decomposition route, so the two can cross-check.
    """
    parts = []
    for prob, comp in zip(mix.probs, mix.components):
        norm = bilinear(spec, comp, comp)
        cross = pairwise_matrix(spec, comp.atoms, target.atoms)
        scores = norm - 2.0 * np.einsum("i,ij->j", comp.weights, cross)
        parts.append(prob * float(np.einsum("j,j->", target.weights, scores)))
    return math.fsum(parts)


def _second_moment(spec: KernelSpec, mix: DiscreteMixture, atoms, W) -> float:
    """E ||P||^2 over the mixture, on a shared atom table."""
    K = pairwise_matrix(spec, atoms, atoms)
    return float(np.einsum("c,cu,uv,cv->", mix.probs, W, K, W, optimize=False))


def variance_exact(spec: KernelSpec, mix: DiscreteMixture) -> float:
    """Distributional variance of a finite generator: E||P - EP||^2.

    Computed on mean-centered weight rows rather than as
    E||P||^2 - ||EP||^2: the subtraction form cancels catastrophically
    when the components are nearly identical, the centered form does not.
    """
    atoms, W = _union(mix.components)
    K = pairwise_matrix(spec, atoms, atoms)
    D = W - np.einsum("c,cu->u", mix.probs, W)
    return float(np.einsum("c,cu,uv,cv->", mix.probs, D, K, D, optimize=False))


def covariance_exact(spec: KernelSpec, joint: JointDiscreteMixture) -> float:
    """Distributional covariance of a paired generator: E<P - EP| k |Q - EQ>.

    Mean-centered on both sides for the same numerical reason as
    :func:`variance_exact`.
    """
    dists = [p for p, _ in joint.pairs] + [q for _, q in joint.pairs]
    atoms, W = _union(dists)
    n = len(joint.pairs)
    Wp, Wq = W[:n], W[n:]
    K = pairwise_matrix(spec, atoms, atoms)
    Dp = Wp - np.einsum("c,cu->u", joint.probs, Wp)
    Dq = Wq - np.einsum("c,cu->u", joint.probs, Wq)
    return float(np.einsum("c,cu,uv,cv->", joint.probs, Dp, K, Dq, optimize=False))


def correlation_exact(spec: KernelSpec, joint: JointDiscreteMixture) -> float:
    """Distributional correlation of a paired generator, in [-1, 1]."""
    cov = covariance_exact(spec, joint)
    var_p = variance_exact(spec, joint.marginal_x())
    var_q = variance_exact(spec, joint.marginal_y())
    if var_p <= 0 or var_q <= 0:
        raise DegenerateMarginalError(
            f"marginal variances must be positive (got {var_p!r}, {var_q!r})"
        )
    denom = var_p if var_p == var_q else math.sqrt(var_p * var_q)
    return cov / denom


def decompose_exact(
    spec: KernelSpec, mix: DiscreteMixture, target: DiscreteDistribution
) -> DecompositionReport:
    """Exact decomposition of the expected kernel score of a finite generator.

    noise = -||Q||^2, bias = ||EP - Q||^2, variance = E||P - EP||^2, and
    kernel_score = noise + bias + variance (their sum is the expected
    score; the identity is checked independently by
    :func:`expected_score_exact` in the test suite). entropy is the
    expected predictive kernel entropy -E||P||^2; mmd2 = bias + variance
    is the expected squared MMD to the target.
    """
    atoms, W = _union(list(mix.components) + [target])
    K = pairwise_matrix(spec, atoms, atoms)
    Wc, wq = W[:-1], W[-1]
    probs = mix.probs
    mean_w = np.einsum("c,cu->u", probs, Wc)
    mean_sq = float(np.einsum("u,uv,v->", mean_w, K, mean_w))
    target_sq = float(np.einsum("u,uv,v->", wq, K, wq))
    # Centered quadratic forms: no large-term cancellation when the
    # generator is nearly deterministic or nearly unbiased.
    Dc = Wc - mean_w
    variance = float(np.einsum("c,cu,uv,cv->", probs, Dc, K, Dc, optimize=False))
    db = mean_w - wq
    bias = float(np.einsum("u,uv,v->", db, K, db))
    second = variance + mean_sq
    noise = -target_sq
    score = noise + bias + variance
    return DecompositionReport(
        kernel=spec,
        variance=variance,
        entropy=-second,
        kernel_score=score,
        mmd2=bias + variance,
        noise=noise,
        bias=bias,
        bias_direct=bias,
        residual=abs(score - (noise + bias + variance)),
        source="exact",
        flags=("exact",),
    )


def ensemble_average_mixture(mix: DiscreteMixture, n: int) -> DiscreteMixture:
    """Generator of the n-member ensemble average with independent members.

    Enumerates all len(mix)^n member combinations exhaustively (hard cap
    100000 states; larger requests are rejected, never approximated) and
    averages the member distributions in each combination.
    """
    if n < 1:
        raise ShapeMismatchError("ensemble size must be >= 1")
    c = len(mix.components)
    if c ** n > _ENSEMBLE_STATE_CAP:
        raise ProductTooLargeError(
            f"{c}^{n} ensemble states exceed the cap of {_ENSEMBLE_STATE_CAP}"
        )
    atoms, W = _union(mix.components)
    probs = mix.probs
    out_components = []
    out_probs = []
    for combo in itertools.product(range(c), repeat=n):
        w = W[list(combo)].mean(axis=0)
        keep = w > 0
        out_components.append(
            DiscreteDistribution(
                [atoms[i] for i in np.nonzero(keep)[0]], w[keep]
            )
        )
        out_probs.append(float(np.prod(probs[list(combo)])))
    return DiscreteMixture(out_components, out_probs)


def pearson_reduction_check(joint: JointDiscreteMixture) -> tuple[float, float]:
    """(delta-kernel distributional correlation, Pearson correlation).

    Defined for binary categorical marginals only: every paired
    distribution must be supported on the same two atoms. The Pearson
    side correlates the first-atom weights (p_i, q_i) across pairs,
    weighted by the pair probabilities. The two coincide for binary
    categoricals, which this function lets callers verify.
    """
    dists = [p for p, _ in joint.pairs] + [q for _, q in joint.pairs]
    atoms, W = _union(dists)
    if len(atoms) > 2:
        raise ShapeMismatchError(
            f"binary categorical support required, found {len(atoms)} atoms"
        )
    if len(atoms) < 2:
        raise DegenerateMarginalError("both marginals are constant")
    n = len(joint.pairs)
    p, q = W[:n, 0], W[n:, 0]
    probs = joint.probs
    mp = float(np.einsum("c,c->", probs, p))
    mq = float(np.einsum("c,c->", probs, q))
    dp, dq = p - mp, q - mq
    cov = float(np.einsum("c,c,c->", probs, dp, dq))
    var_p = float(np.einsum("c,c,c->", probs, dp, dp))
    var_q = float(np.einsum("c,c,c->", probs, dq, dq))
    if var_p <= 0 or var_q <= 0:
        raise DegenerateMarginalError("a marginal has zero variance")
    denom = var_p if var_p == var_q else math.sqrt(var_p * var_q)
    pearson = cov / denom
    corr = correlation_exact(KernelSpec("delta"), joint)
    return corr, pearson
