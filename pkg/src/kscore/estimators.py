"""Sample-based estimators for kernel scores and their decomposition.

All estimators consume generated samples only. Two-stage structure (n
clusters of m_i points each, one cluster per draw of the generating
distribution) is carried by :class:`SampleBlock`; paired two-stage samples
by :class:`PairedSampleBlock`.

Estimator conventions:

* The squared-norm term of the kernel score is diagonal-free (unbiased);
  a biased variant that keeps the diagonal sits behind
  ``include_diagonal=True``.
* The two-stage variance estimate is the mean within-cluster off-diagonal
  similarity minus the mean between-cluster similarity. The covariance
  estimate keeps the full same-cluster cross sum (including matching
  indices): the two sides are independent given the cluster, so no
  diagonal needs excluding.
* Negative variance / MMD^2 estimates are legitimate and returned as-is
  with an :class:`~kscore.errors.EstimateWarning`; correlation reports
  both the raw ratio (may leave [-1, 1]) and a clamped companion.
* Summation follows a fixed cluster-major order; with ``exact_sum=True``
  the reductions run through ``math.fsum`` (correctly rounded, hence
  order-independent), which makes permutation invariance bit-exact at the
  cost of speed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AsymmetricInputError,
    ClusterCountMismatchError,
    DegenerateDenominatorError,
    EstimateWarning,
    KindMismatchError,
    ShapeMismatchError,
    TooFewClustersError,
    TooFewInnerSamplesError,
    TooFewSamplesError,
)
from .kernels import (
    TOKENS,
    VECTOR,
    KernelSpec,
    as_vector,
    pairwise_matrix,
    points_kind,
)


def _n_points(collection) -> int:
    if isinstance(collection, np.ndarray):
        return 1 if collection.ndim == 1 else collection.shape[0]
    return len(collection)


class SampleBlock:
    """n clusters of generated points, one cluster per generator draw.

    Clusters may be lists of points or 2-D arrays (one row per point).
    All clusters must share one point kind. When every cluster is a
    uniform (m, d) array the block keeps a dense (n, m, d) view that the
    estimators use for vectorized reductions.
    """

    def __init__(self, clusters, label=None):
        clusters = list(clusters)
        if not clusters:
            raise TooFewClustersError("a sample block needs at least one cluster")
        norm = []
        kinds = set()
        for idx, cluster in enumerate(clusters):
            if isinstance(cluster, np.ndarray):
                arr = np.asarray(cluster, dtype=np.float64)
                if arr.ndim == 1:
                    arr = arr.reshape(1, -1)
                if arr.ndim != 2 or arr.shape[0] == 0:
                    raise TooFewInnerSamplesError(f"cluster {idx} is empty")
                norm.append(arr)
                kinds.add(VECTOR)
                continue
            pts = list(cluster)
            if not pts:
                raise TooFewInnerSamplesError(f"cluster {idx} is empty")
            kind = points_kind(pts)
            kinds.add(kind)
            if kind == TOKENS:
                norm.append([tuple(p) for p in pts])
            else:
                # Uniform-width vector lists stack to one (m, d) array so
                # the container type never changes the numeric path;
                # ragged clusters stay lists for eval-time padding.
                vecs = [as_vector(p) for p in pts]
                if len({v.size for v in vecs}) == 1:
                    norm.append(np.stack(vecs))
                else:
                    norm.append(pts)
        if len(kinds) > 1:
            raise KindMismatchError("clusters mix vector and token points")
        self.kind = kinds.pop()
        self.clusters = norm
        self.label = label
        self._dense = self._try_dense()

    @classmethod
    def from_dense(cls, array, label=None):
        """Build from an (n, m, d) array without copying."""
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeMismatchError("dense blocks must be (n, m, d)")
        block = cls.__new__(cls)
        block.kind = VECTOR
        block.clusters = list(arr)
        block.label = label
        block._dense = arr
        return block

    def _try_dense(self):
        if self.kind != VECTOR:
            return None
        shapes = set()
        for c in self.clusters:
            if not isinstance(c, np.ndarray):
                return None
            shapes.add(c.shape)
        if len(shapes) != 1:
            return None
        return np.stack(self.clusters)

    @property
    def n(self) -> int:
        return len(self.clusters)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(_n_points(c) for c in self.clusters)

    @property
    def dense(self):
        return self._dense

    def pooled(self):
        """All points of the block, cluster-major."""
        if self._dense is not None:
            n, m, d = self._dense.shape
            return self._dense.reshape(n * m, d)
        if self.kind == VECTOR and all(
            isinstance(c, np.ndarray) for c in self.clusters
        ):
            widths = {c.shape[1] for c in self.clusters}
            if len(widths) == 1:
                return np.concatenate(self.clusters, axis=0)
        out = []
        for c in self.clusters:
            out.extend(list(c))
        return out


class PairedSampleBlock:
    """Two sample blocks whose clusters are drawn from paired generators."""

    def __init__(self, x: SampleBlock, y: SampleBlock):
        if not isinstance(x, SampleBlock):
            x = SampleBlock(x)
        if not isinstance(y, SampleBlock):
            y = SampleBlock(y)
        if x.n != y.n:
            raise ClusterCountMismatchError(
                f"paired blocks need equal cluster counts ({x.n} vs {y.n})"
            )
        if x.kind != y.kind:
            raise KindMismatchError("paired blocks mix vector and token points")
        self.x = x
        self.y = y

    @property
    def n(self) -> int:
        return self.x.n


@dataclass
class CorrelationResult:
    """Raw and clamped distributional correlation estimates."""

    raw: float
    clamped: float
    flags: tuple[str, ...] = ()


@dataclass
class DecompositionReport:
    """Terms of the generalization decomposition, with availability flags.

    Fields that cannot be estimated from the given inputs are None and a
    reason appears in flags. ``residual`` is |kernel_score - (noise +
    bias_direct + variance)|: it measures the gap between the pooled
    norm estimate inside the score and the cluster-structured terms, and
    shrinks as cluster sizes grow. For exact (oracle-sourced) reports it
    is zero up to rounding.
    """

    kernel: KernelSpec
    variance: float
    entropy: float
    n: int | None = None
    m: tuple[int, ...] | None = None
    kernel_score: float | None = None
    mmd2: float | None = None
    noise: float | None = None
    bias: float | None = None
    bias_direct: float | None = None
    covariance: float | None = None
    correlation: float | None = None
    residual: float | None = None
    source: str = "samples"
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "kernel": self.kernel.as_dict(),
            "n": self.n,
            "m": list(self.m) if self.m is not None else None,
            "noise": self.noise,
            "bias": self.bias,
            "bias_direct": self.bias_direct,
            "variance": self.variance,
            "covariance": self.covariance,
            "correlation": self.correlation,
            "entropy": self.entropy,
            "kernel_score": self.kernel_score,
            "mmd2": self.mmd2,
            "residual": self.residual,
            "source": self.source,
            "flags": list(self.flags),
        }


def _offdiag_sum(K: np.ndarray, exact_sum: bool) -> float:
    n = K.shape[0]
    if exact_sum:
        return math.fsum(K[~np.eye(n, dtype=bool)])
    return float(K.sum() - np.einsum("ii->", K))


def _full_sum(K: np.ndarray, exact_sum: bool) -> float:
    if exact_sum:
        return math.fsum(K.ravel())
    return float(K.sum())


def _mean(values, exact_sum: bool) -> float:
    if exact_sum:
        return math.fsum(values) / len(values)
    return float(np.mean(values))


def kernel_entropy(spec: KernelSpec, generations, *, exact_sum=False) -> float:
    """Predictive kernel entropy: -mean off-diagonal similarity.

    Returns -(1/(m(m-1))) * sum_{i != j} k(a_i, a_j); for kernels bounded
    in [0, 1] the result lies in [-1, 0]. Needs m >= 2 generations.
    """
    m = _n_points(generations)
    if m < 2:
        raise TooFewSamplesError(f"kernel entropy needs >= 2 generations, got {m}")
    K = pairwise_matrix(spec, generations, generations)
    return -_offdiag_sum(K, exact_sum) / (m * (m - 1))


def kernel_score(
    spec: KernelSpec,
    generations,
    target,
    *,
    include_diagonal=False,
    exact_sum=False,
) -> float:
    """Kernel score of the empirical predictive distribution at the target.

    score = ||P_hat||^2 - 2 * mean_{j,l} k(x_j, y_l), with the norm term
    diagonal-free unless include_diagonal is set. Strictly proper kernels
    make lower scores better; the minimum over predictions is the
    negative target norm.
    """
    m = _n_points(generations)
    l = _n_points(target)
    # The diagonal-free norm needs two generations; with the diagonal
    # kept a single generation (a point prediction) is well-defined.
    if m < (1 if include_diagonal else 2):
        raise TooFewSamplesError(f"kernel score needs >= 2 generations, got {m}")
    if l < 1:
        raise TooFewSamplesError("kernel score needs >= 1 target point")
    Kg = pairwise_matrix(spec, generations, generations)
    if include_diagonal:
        norm = _full_sum(Kg, exact_sum) / (m * m)
    else:
        norm = _offdiag_sum(Kg, exact_sum) / (m * (m - 1))
    Kc = pairwise_matrix(spec, generations, target)
    cross = _full_sum(Kc, exact_sum) / (m * l)
    return norm - 2.0 * cross


def mmd2(spec: KernelSpec, generations, target, *, exact_sum=False) -> float:
    """Unbiased squared MMD between generations and target samples.

    Single estimates may be negative; that is flagged with an
    EstimateWarning, never truncated.
    """
    m = _n_points(generations)
    l = _n_points(target)
    if m < 2 or l < 2:
        raise TooFewSamplesError("mmd2 needs >= 2 points on each side")
    Kg = pairwise_matrix(spec, generations, generations)
    Kt = pairwise_matrix(spec, target, target)
    Kc = pairwise_matrix(spec, generations, target)
    value = (
        _offdiag_sum(Kg, exact_sum) / (m * (m - 1))
        + _offdiag_sum(Kt, exact_sum) / (l * (l - 1))
        - 2.0 * _full_sum(Kc, exact_sum) / (m * l)
    )
    if value < 0:
        warnings.warn("negative MMD^2 estimate (legitimate for close samples)",
                      EstimateWarning, stacklevel=2)
    return value


def _require_two_stage(block: SampleBlock, min_inner: int):
    if block.n < 2:
        raise TooFewClustersError(
            f"two-stage estimators need >= 2 clusters, got {block.n}"
        )
    for idx, size in enumerate(block.sizes):
        if size < min_inner:
            raise TooFewInnerSamplesError(
                f"cluster {idx} has {size} point(s); needs >= {min_inner}"
            )


def _variance_terms(spec, block: SampleBlock, exact_sum: bool):
    """(mean within-cluster off-diagonal, mean between-cluster similarity)."""
    _require_two_stage(block, 2)
    n = block.n
    dense = block.dense
    if dense is not None and not exact_sum:
        _, m, d = dense.shape
        K = pairwise_matrix(spec, dense.reshape(n * m, d), dense.reshape(n * m, d))
        G = K.reshape(n, m, n, m)
        within_full = np.einsum("ijit->i", G)
        point_diag = np.einsum("ijij->i", G)
        within = float((within_full - point_diag).sum() / (n * m * (m - 1)))
        total = float(K.sum())
        between = float(
            (total - float(within_full.sum())) / (n * (n - 1) * m * m)
        )
        return within, between
    clusters = block.clusters
    sizes = block.sizes
    within_means = []
    for ci, mi in zip(clusters, sizes):
        K = pairwise_matrix(spec, ci, ci)
        within_means.append(_offdiag_sum(K, exact_sum) / (mi * (mi - 1)))
    pair_means = []
    for i in range(n):
        for s in range(i + 1, n):
            K = pairwise_matrix(spec, clusters[i], clusters[s])
            pair_means.append(_full_sum(K, exact_sum) / (sizes[i] * sizes[s]))
    return _mean(within_means, exact_sum), _mean(pair_means, exact_sum)


def distributional_variance(spec: KernelSpec, block, *, exact_sum=False) -> float:
    """Unbiased two-stage estimate of the variance of the generator.

    Mean within-cluster off-diagonal similarity minus mean between-cluster
    similarity. Can come out negative on finite samples (flagged).
    """
    if not isinstance(block, SampleBlock):
        block = SampleBlock(block)
    within, between = _variance_terms(spec, block, exact_sum)
    value = within - between
    if value < 0:
        warnings.warn("negative variance estimate (legitimate on finite samples)",
                      EstimateWarning, stacklevel=2)
    return value


def _covariance_terms(spec, paired: PairedSampleBlock, exact_sum: bool):
    """(mean same-cluster cross similarity, mean different-cluster similarity)."""
    n = paired.n
    if n < 2:
        raise TooFewClustersError(
            f"two-stage estimators need >= 2 clusters, got {n}"
        )
    bx, by = paired.x, paired.y
    self_paired = by is bx
    if (
        bx.dense is not None
        and (self_paired or by.dense is not None)
        and not exact_sum
    ):
        dx = bx.dense
        dy = dx if self_paired else by.dense
        _, mx, d = dx.shape
        my = dy.shape[1]
        px = dx.reshape(n * mx, d)
        py = px if self_paired else dy.reshape(n * my, dy.shape[2])
        K = pairwise_matrix(spec, px, py)
        G = K.reshape(n, mx, n, my)
        same_full = np.einsum("ijit->i", G)
        same = float(same_full.sum() / (n * mx * my))
        total = float(K.sum())
        between = float(
            (total - float(same_full.sum())) / (n * (n - 1) * mx * my)
        )
        return same, between
    cx, cy = bx.clusters, by.clusters
    sx, sy = bx.sizes, by.sizes
    same_means = []
    for i in range(n):
        K = pairwise_matrix(spec, cx[i], cy[i] if not self_paired else cx[i])
        same_means.append(_full_sum(K, exact_sum) / (sx[i] * sy[i]))
    pair_means = []
    for i in range(n):
        for s in range(n):
            if s == i:
                continue
            K = pairwise_matrix(spec, cx[i], cy[s] if not self_paired else cx[s])
            pair_means.append(_full_sum(K, exact_sum) / (sx[i] * sy[s]))
    return _mean(same_means, exact_sum), _mean(pair_means, exact_sum)


def distributional_covariance(spec: KernelSpec, paired, *, exact_sum=False) -> float:
    """Unbiased two-stage estimate of the covariance between paired generators.

    Mean same-cluster cross similarity (full m_x * m_y sum; the sides are
    conditionally independent, so the matching-index terms stay) minus the
    mean different-cluster similarity. Negative values indicate
    anti-coordination and are not flagged.
    """
    paired = _as_paired(paired)
    same, between = _covariance_terms(spec, paired, exact_sum)
    return same - between


def _as_paired(paired) -> PairedSampleBlock:
    if isinstance(paired, PairedSampleBlock):
        return paired
    if isinstance(paired, (tuple, list)) and len(paired) == 2:
        return PairedSampleBlock(*paired)
    raise KindMismatchError("expected a PairedSampleBlock or an (x, y) pair")


def distributional_correlation(
    spec: KernelSpec, paired, *, exact_sum=False
) -> CorrelationResult:
    """Normalized distributional covariance of paired generators.

    The numerator and both denominator terms use the covariance estimator
    (a block paired with itself), so a block correlates with itself at
    exactly 1.0 whenever its self-covariance estimate is positive. The raw
    ratio may leave [-1, 1] on finite samples; a clamped value accompanies
    it, with a flag when clamping changed anything.
    """
    paired = _as_paired(paired)
    cxy = distributional_covariance(spec, paired, exact_sum=exact_sum)
    self_x = PairedSampleBlock(paired.x, paired.x)
    self_y = PairedSampleBlock(paired.y, paired.y)
    cxx = distributional_covariance(spec, self_x, exact_sum=exact_sum)
    cyy = distributional_covariance(spec, self_y, exact_sum=exact_sum)
    if cxx <= 0 or cyy <= 0:
        raise DegenerateDenominatorError(
            f"self-covariance estimates must be positive (got {cxx!r}, {cyy!r})"
        )
    # sqrt(c * c) can be 1 ulp off c; use the common value when equal so
    # self-correlation is exactly 1.
    denom = cxx if cxx == cyy else math.sqrt(cxx * cyy)
    raw = cxy / denom
    flags = ()
    if raw < -1.0 or raw > 1.0:
        flags = ("correlation_outside_unit_interval",)
        warnings.warn("correlation estimate outside [-1, 1] (reported raw and clamped)",
                      EstimateWarning, stacklevel=2)
    return CorrelationResult(raw=raw, clamped=min(1.0, max(-1.0, raw)), flags=flags)


def decompose(spec: KernelSpec, block, target, *, exact_sum=False) -> DecompositionReport:
    """Split the kernel score of an ensemble sample into decomposition terms.

    block holds n clusters (one per generator draw); target holds points
    from the reference distribution. Produces:

    * variance: two-stage variance estimate over the clusters;
    * entropy: predictive kernel entropy of the pooled generations;
    * kernel_score: pooled-generations score against the target
      (diagonal-free norm term);
    * noise (needs >= 2 target points): negative estimated target norm;
    * bias: kernel_score - noise - variance;
    * bias_direct: between-cluster mean - 2 * cross mean + target norm
      (the direct squared-mean-embedding-difference estimate);
    * mmd2 (needs >= 2 target points): unbiased pooled-vs-target MMD^2.

    Terms whose preconditions fail are None with a reason in flags; bias
    is never silently replaced by a biased plug-in.
    """
    if not isinstance(block, SampleBlock):
        block = SampleBlock(block)
    l = _n_points(target)
    if l < 1:
        raise TooFewSamplesError("decompose needs >= 1 target point")
    flags: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        within, between = _variance_terms(spec, block, exact_sum)
        variance = within - between
        if variance < 0:
            flags.append("negative_variance_estimate")
        pooled = block.pooled()
        npool = _n_points(pooled)
        Kp = pairwise_matrix(spec, pooled, pooled)
        norm = _offdiag_sum(Kp, exact_sum) / (npool * (npool - 1))
        entropy = -norm
        Kc = pairwise_matrix(spec, pooled, target)
        cross = _full_sum(Kc, exact_sum) / (npool * l)
        score = norm - 2.0 * cross
        noise = bias = bias_direct = mmd = residual = None
        if l >= 2:
            Kt = pairwise_matrix(spec, target, target)
            target_norm = _offdiag_sum(Kt, exact_sum) / (l * (l - 1))
            noise = -target_norm
            bias = score - noise - variance
            bias_direct = between - 2.0 * cross + target_norm
            mmd = norm + target_norm - 2.0 * cross
            if mmd < 0:
                flags.append("negative_mmd2_estimate")
            residual = abs(score - (noise + bias_direct + variance))
        else:
            flags.extend(
                ["noise_unavailable_single_target",
                 "bias_unavailable_single_target",
                 "mmd2_unavailable_single_target"]
            )
    for w in caught:
        if issubclass(w.category, EstimateWarning):
            continue  # already folded into flags above
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return DecompositionReport(
        kernel=spec,
        n=block.n,
        m=block.sizes,
        variance=variance,
        entropy=entropy,
        kernel_score=score,
        mmd2=mmd,
        noise=noise,
        bias=bias,
        bias_direct=bias_direct,
        residual=residual,
        source="samples",
        flags=tuple(flags),
    )


def ensemble_variance_split(variance: float, covariance: float, n: int) -> float:
    """Variance of an n-member ensemble from member variance and pair covariance.

    variance / n + (n - 1) / n * covariance, for exchangeable members.
    """
    if n < 1:
        raise ShapeMismatchError("ensemble size must be >= 1")
    return variance / n + (n - 1) / n * covariance


def ensemble_gain(variance: float, covariance: float, n: int) -> float:
    """Variance reduction from averaging n exchangeable members.

    (1 - 1/n) * (variance - covariance); what ensembling saves relative
    to a single member. Zero when members are perfectly correlated.
    """
    if n < 1:
        raise ShapeMismatchError("ensemble size must be >= 1")
    return (n - 1) / n * (variance - covariance)


def ensemble_variance_general(member_variances, covariance_matrix) -> float:
    """Ensemble variance for heterogeneous members: mean of the covariance matrix.

    covariance_matrix must be symmetric with member_variances on its
    diagonal; entry (i, j) is the distributional covariance of members i
    and j. Returns (1/n^2) * sum of all entries.
    """
    v = np.asarray(member_variances, dtype=np.float64)
    C = np.asarray(covariance_matrix, dtype=np.float64)
    if v.ndim != 1 or C.ndim != 2 or C.shape != (v.size, v.size):
        raise ShapeMismatchError(
            f"need (n,) variances and (n, n) covariances, got {v.shape} and {C.shape}"
        )
    if not np.array_equal(C, C.T):
        raise AsymmetricInputError("covariance matrix is not symmetric")
    if not np.array_equal(np.diag(C), v):
        raise ShapeMismatchError(
            "covariance-matrix diagonal must equal the member variances"
        )
    return float(np.mean(C))
