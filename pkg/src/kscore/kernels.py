"""Kernels over vectors and token sequences, with batched Gram computation.

Points come in two kinds: 1-D float vectors (anything ``np.asarray``
accepts) and token sequences (tuples, or lists of strings/ids). Every
kernel is evaluated through one vectorized pairwise path, so the scalar
``eval_kernel`` and batched ``gram`` agree bit for bit. The vector path
uses broadcasting and ``einsum`` (never BLAS matmul), which keeps results
independent of BLAS threading.

Kernels:
    rbf:            exp(-gamma * ||x - y||_2^2)
    laplacian:      exp(-gamma * ||x - y||_1)
    polynomial:     ((<x, y> + offset) / scale) ** degree
    linear:         <x, y>
    cosine:         <x, y> / (||x|| * ||y||)   (not certified psd)
    delta:          1 if x == y exactly else 0 (either kind)
    cs_subsequence: shared-substring count of order t, normalized:
                    c_t(x, y) / sqrt(c_t(x, x) * c_t(y, y)), where
                    c_t counts index pairs with x[i:i+t] == y[j:j+t]

``gamma`` defaults to 1/d with d the vector dimension seen at evaluation
time; ``scale`` defaults to d. With ``pad_to_max`` set, shorter vectors
are zero-padded to the longest vector in the call before distances are
taken; otherwise differing lengths are an error.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import (
    AsymmetricInputError,
    DimensionMismatchError,
    KindMismatchError,
    MixedKindsError,
    NonFiniteError,
    DegenerateInputWarning,
)

VECTOR = "vector"
TOKENS = "tokens"

VECTOR_ONLY_KINDS = ("rbf", "laplacian", "polynomial", "linear", "cosine")
KERNEL_KINDS = VECTOR_ONLY_KINDS + ("delta", "cs_subsequence")

# Parameters each kernel kind actually consumes (beyond pad_to_max).
KERNEL_PARAMS = {
    "rbf": ("gamma",),
    "laplacian": ("gamma",),
    "polynomial": ("degree", "offset", "scale"),
    "linear": (),
    "cosine": (),
    "delta": (),
    "cs_subsequence": ("t",),
}

# Cap on elements per broadcast temporary in the pairwise distance loops.
_CHUNK_ELEMENTS = 1 << 24


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel choice plus its parameters.

    gamma=None / scale=None mean "resolve from the data dimension" at
    evaluation time (1/d and d respectively).
    """

    kind: str
    gamma: float | None = None
    degree: int = 3
    offset: float = 1.0
    scale: float | None = None
    t: int = 2
    pad_to_max: bool = False

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.scale is not None and self.scale == 0:
            raise ValueError("scale must be nonzero")
        if self.t < 1:
            raise ValueError("t must be >= 1")

    @property
    def certified_psd(self) -> bool:
        """True unless the kernel may produce indefinite Gram matrices."""
        return self.kind != "cosine"

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "degree": self.degree,
            "offset": self.offset,
            "scale": self.scale,
            "t": self.t,
            "pad_to_max": self.pad_to_max,
            "certified_psd": self.certified_psd,
        }


@dataclass
class GramMatrix:
    """Kernel matrix over one point set; symmetric by construction."""

    values: np.ndarray
    spec: KernelSpec

    @property
    def n(self) -> int:
        return self.values.shape[0]


def point_kind(point) -> str:
    """Classify one point as vector or token sequence.

    Tuples and string-bearing lists are token sequences; arrays and
    numeric lists are vectors. Bare strings are rejected: tokenize first.
    """
    if isinstance(point, np.ndarray):
        return VECTOR
    if isinstance(point, str):
        raise KindMismatchError(
            "a bare string is not a point; pass a list of tokens"
        )
    if isinstance(point, tuple):
        return TOKENS
    if isinstance(point, (list, range)):
        if any(isinstance(v, str) for v in point):
            return TOKENS
        return VECTOR
    if np.isscalar(point):
        return VECTOR
    raise KindMismatchError(f"cannot interpret {type(point).__name__} as a point")


def points_kind(points) -> str:
    """Kind shared by a nonempty point collection; mixing is an error."""
    kinds = {point_kind(p) for p in points}
    if len(kinds) > 1:
        raise MixedKindsError("collection mixes vector and token points")
    return kinds.pop()


def as_tokens(point) -> tuple:
    if point_kind(point) != TOKENS:
        raise KindMismatchError("expected a token sequence")
    return tuple(point)


def as_vector(point) -> np.ndarray:
    arr = np.asarray(point, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionMismatchError("a vector point must be 1-D")
    return arr


class _Batch:
    """Normalized point collection: a 2-D float array or a point list."""

    __slots__ = ("kind", "array", "points")

    def __init__(self, kind, array=None, points=None):
        self.kind = kind
        self.array = array
        self.points = points

    def __len__(self):
        return len(self.array) if self.array is not None else len(self.points)


def _check_finite(arr):
    finite = np.isfinite(arr)
    if not finite.all():
        idx = int(np.argmin(finite.all(axis=tuple(range(1, arr.ndim)))))
        raise NonFiniteError(f"point {idx} contains NaN or infinity")


def _batch(obj) -> _Batch:
    if isinstance(obj, np.ndarray):
        arr = np.asarray(obj, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 1)
        if arr.ndim != 2:
            raise DimensionMismatchError("point arrays must be 1-D or 2-D")
        _check_finite(arr)
        return _Batch(VECTOR, array=arr)
    if isinstance(obj, (list, tuple)):
        pts = list(obj)
        if not pts:
            return _Batch(VECTOR, points=[])
        kind = points_kind(pts)
        if kind == TOKENS:
            return _Batch(TOKENS, points=[tuple(p) for p in pts])
        return _Batch(VECTOR, points=pts)
    raise KindMismatchError(
        f"expected a point collection, got {type(obj).__name__}"
    )


def stack_vectors(points, pad_to_max=False, min_length=0) -> np.ndarray:
    """Stack vector points into an (n, d) array, zero-padding if allowed.

    min_length lets a caller pad both sides of a cross computation to a
    common width. Raises on ragged input without pad_to_max, and on
    non-finite entries (reported with the offending point index).
    """
    arrays = []
    for idx, p in enumerate(points):
        arr = as_vector(p)
        if arr.size == 0:
            raise DimensionMismatchError(f"point {idx} has dimension 0")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"point {idx} contains NaN or infinity")
        arrays.append(arr)
    lengths = {a.size for a in arrays}
    width = max(max(lengths), min_length)
    if len(lengths) > 1 or width > max(lengths):
        if not pad_to_max:
            raise DimensionMismatchError(
                f"vector lengths differ ({sorted(lengths)}); "
                "set pad_to_max to zero-pad"
            )
        out = np.zeros((len(arrays), width))
        for i, a in enumerate(arrays):
            out[i, : a.size] = a
        return out
    return np.stack(arrays)


def _batch_matrix(batch: _Batch, pad_to_max: bool, min_length: int = 0):
    if batch.array is not None:
        arr = batch.array
        if arr.shape[1] < min_length:
            if not pad_to_max:
                raise DimensionMismatchError(
                    f"vector lengths differ ({arr.shape[1]} vs {min_length}); "
                    "set pad_to_max to zero-pad"
                )
            out = np.zeros((arr.shape[0], min_length))
            out[:, : arr.shape[1]] = arr
            return out
        return arr
    return stack_vectors(batch.points, pad_to_max, min_length)


def _batch_width(batch: _Batch) -> int:
    if batch.array is not None:
        return batch.array.shape[1]
    return max(as_vector(p).size for p in batch.points)


def resolve_gamma(spec: KernelSpec, dim: int) -> float:
    return spec.gamma if spec.gamma is not None else 1.0 / dim


def resolve_scale(spec: KernelSpec, dim: int) -> float:
    return spec.scale if spec.scale is not None else float(dim)


def _sq_dists(X, Y):
    n, d = X.shape
    m = Y.shape[0]
    out = np.empty((n, m))
    step = max(1, _CHUNK_ELEMENTS // max(1, m * d))
    for i in range(0, n, step):
        diff = X[i : i + step, None, :] - Y[None, :, :]
        np.einsum("ijk,ijk->ij", diff, diff, out=out[i : i + step])
    return out


def _l1_dists(X, Y):
    n, d = X.shape
    m = Y.shape[0]
    out = np.empty((n, m))
    step = max(1, _CHUNK_ELEMENTS // max(1, m * d))
    for i in range(0, n, step):
        diff = np.abs(X[i : i + step, None, :] - Y[None, :, :])
        diff.sum(axis=-1, out=out[i : i + step])
    return out


def _dots(X, Y):
    n, d = X.shape
    m = Y.shape[0]
    out = np.empty((n, m))
    step = max(1, _CHUNK_ELEMENTS // max(1, m * d))
    for i in range(0, n, step):
        np.einsum("ik,jk->ij", X[i : i + step], Y, out=out[i : i + step])
    return out


def _vector_pairwise(spec, bx: _Batch, by: _Batch, same: bool):
    width = _batch_width(bx) if same else max(_batch_width(bx), _batch_width(by))
    X = _batch_matrix(bx, spec.pad_to_max, width)
    Y = X if same else _batch_matrix(by, spec.pad_to_max, width)
    d = X.shape[1]
    if d == 0:
        raise DimensionMismatchError("vector points must have dimension >= 1")
    kind = spec.kind
    if kind == "rbf":
        return np.exp(-resolve_gamma(spec, d) * _sq_dists(X, Y))
    if kind == "laplacian":
        return np.exp(-resolve_gamma(spec, d) * _l1_dists(X, Y))
    if kind == "polynomial":
        base = (_dots(X, Y) + spec.offset) / resolve_scale(spec, d)
        return base ** spec.degree
    if kind == "linear":
        return _dots(X, Y)
    if kind == "cosine":
        nx = np.sqrt(np.einsum("ik,ik->i", X, X))
        ny = nx if same else np.sqrt(np.einsum("ik,ik->i", Y, Y))
        if not (np.all(nx > 0) and np.all(ny > 0)):
            warnings.warn(
                "cosine kernel met a zero vector; its similarities are 0",
                DegenerateInputWarning,
                stacklevel=4,
            )
        denom = nx[:, None] * ny[None, :]
        K = np.divide(_dots(X, Y), denom, out=np.zeros((len(nx), len(ny))),
                      where=denom > 0)
        if same:
            # Self-similarity of a nonzero vector is exactly 1 by definition;
            # dot/norm^2 can land 1 ulp off.
            np.fill_diagonal(K, np.where(nx > 0, 1.0, 0.0))
        return K
    raise KindMismatchError(f"kernel {kind} does not apply to vectors")


def _delta_pairwise(bx: _Batch, by: _Batch, same: bool):
    # Identify points by value (0.0 == -0.0) and compare ids.
    if bx.kind == TOKENS:
        table: dict = {}
        ix = np.array([table.setdefault(p, len(table)) for p in bx.points],
                      dtype=np.intp)
        iy = ix if same else np.array(
            [table.setdefault(p, len(table)) for p in by.points], dtype=np.intp
        )
        return np.equal.outer(ix, iy).astype(np.float64)
    if bx.array is not None and (same or by.array is not None):
        X = bx.array
        Y = X if same else by.array
        if X.shape[1] != Y.shape[1]:
            return np.zeros((len(X), len(Y)))
        both = X if same else np.concatenate([X, Y])
        _, inverse = np.unique(both + 0.0, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        ix = inverse[: len(X)]
        iy = ix if same else inverse[len(X):]
        return np.equal.outer(ix, iy).astype(np.float64)
    # Ragged or list-form vectors: key on (length, value bytes).
    table = {}

    def ids(batch):
        out = np.empty(len(batch), dtype=np.intp)
        src = batch.points if batch.points is not None else list(batch.array)
        for i, p in enumerate(src):
            arr = as_vector(p)
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"point {i} contains NaN or infinity")
            key = (arr.size, (arr + 0.0).tobytes())
            out[i] = table.setdefault(key, len(table))
        return out

    ix = ids(bx)
    iy = ix if same else ids(by)
    return np.equal.outer(ix, iy).astype(np.float64)


def _tgram_counts(seq: tuple, t: int) -> Counter:
    return Counter(seq[i : i + t] for i in range(len(seq) - t + 1))


def _cs_self_count(counts: Counter) -> int:
    return sum(c * c for c in counts.values())


def _cs_pairwise(bx: _Batch, by: _Batch, t: int, same: bool):
    cx = [_tgram_counts(s, t) for s in bx.points]
    sx = [_cs_self_count(c) for c in cx]
    if same:
        cy, sy = cx, sx
    else:
        cy = [_tgram_counts(s, t) for s in by.points]
        sy = [_cs_self_count(c) for c in cy]
    K = np.zeros((len(cx), len(cy)))
    for i, (ci, si) in enumerate(zip(cx, sx)):
        if si == 0:
            continue
        for j, (cj, sj) in enumerate(zip(cy, sy)):
            if sj == 0:
                continue
            if len(cj) < len(ci):
                small, big = cj, ci
            else:
                small, big = ci, cj
            shared = sum(c * big[g] for g, c in small.items() if g in big)
            if shared:
                K[i, j] = shared / np.sqrt(float(si) * float(sj))
    return K


def pairwise_matrix(spec: KernelSpec, xs, ys) -> np.ndarray:
    """Kernel values between two point collections, shape (len(xs), len(ys)).

    This is the one numeric path: eval_kernel, gram, and all estimators go
    through it. Collections may be lists of points or pre-stacked 2-D
    arrays (one row per point). Pass the same object twice for a
    self-Gram; that enables the exact-unit-diagonal handling for cosine.
    """
    same = ys is xs
    bx = _batch(xs)
    by = bx if same else _batch(ys)
    if len(bx) == 0 or len(by) == 0:
        return np.zeros((len(bx), len(by)))
    if bx.kind != by.kind:
        raise KindMismatchError(f"cannot mix {bx.kind} and {by.kind} points")
    if spec.kind == "delta":
        return _delta_pairwise(bx, by, same)
    if spec.kind == "cs_subsequence":
        if bx.kind != TOKENS:
            raise KindMismatchError("cs_subsequence requires token sequences")
        return _cs_pairwise(bx, by, spec.t, same)
    if bx.kind != VECTOR:
        raise KindMismatchError(f"kernel {spec.kind} requires vector points")
    return _vector_pairwise(spec, bx, by, same)


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Scalar kernel value k(x, y)."""
    return float(pairwise_matrix(spec, [x], [y])[0, 0])


def eval_cs_kernel(x, y, t: int = 2) -> float:
    """Normalized shared-substring kernel of order t (0 if a side is too short)."""
    return eval_kernel(KernelSpec("cs_subsequence", t=t), x, y)


def gram(spec: KernelSpec, points) -> GramMatrix:
    """Symmetric Gram matrix over one point set.

    Each unordered pair is evaluated once; the upper triangle is mirrored,
    so values[i, j] == values[j, i] holds exactly.
    """
    K = pairwise_matrix(spec, points, points)
    if K.shape[0] == 0:
        raise DimensionMismatchError("gram needs at least one point")
    K = np.triu(K) + np.triu(K, 1).T
    return GramMatrix(values=K, spec=spec)


def check_psd(matrix, tol: float = 1e-9) -> tuple[bool, float]:
    """(is_psd, min_eigenvalue) for a symmetric matrix or GramMatrix.

    is_psd means min eigenvalue >= -tol. Asymmetric input is an error,
    not a False result.
    """
    if isinstance(matrix, GramMatrix):
        values = matrix.values
    else:
        values = np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise AsymmetricInputError("expected a square matrix")
    if not np.array_equal(values, values.T):
        raise AsymmetricInputError("matrix is not symmetric")
    min_eig = float(np.linalg.eigvalsh(values)[0])
    return (min_eig >= -tol, min_eig)
