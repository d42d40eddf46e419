"""Sign-randomized subsampled Fourier projection.

The projection of a length-n vector x is

    z = scale * S F (d * x)

where d is a Rademacher sign vector, F is the unitary DFT (forward factor
1/sqrt(n)), S keeps a seed-chosen subset of m frequency rows, and
scale = sqrt(n / m) makes squared norms unbiased. Everything is a pure
function of (seed, n, m), so an operator can be shipped as three integers
and rebuilt bit-identically anywhere.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from .exceptions import BlobError, DimensionError, OracleSizeError

__all__ = [
    "SplitMix64",
    "RfOperator",
    "build_operator",
    "apply",
    "apply_batch",
    "apply_dense_oracle",
    "dense_matrix",
    "serialize_operator",
    "deserialize_operator",
    "ORACLE_MAX_N",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1F4E7B9F
_MIX2 = 0x94D049BB133111EB

# Dense reference construction is O(n * m) memory; keep it test-sized.
ORACLE_MAX_N = 4096


class SplitMix64:
    """SplitMix64 stream over 64-bit state.

    State advances by the golden-gamma increment; outputs pass through the
    standard two xorshift-multiply finalization steps. Integer-only, so the
    stream is identical on every platform.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, bound: int) -> int:
        """Uniform draw in [0, bound) by 128-bit multiply-high reduction."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return (self.next_u64() * bound) >> 64


def _mixed_outputs(seed: int, count: int) -> np.ndarray:
    """First `count` SplitMix64 outputs for `seed`, vectorized.

    Output i is a pure function of state seed + (i + 1) * gamma, which lets
    the sign stream be generated without a Python loop. uint64 arithmetic
    wraps mod 2**64 exactly like the scalar path.
    """
    states = np.uint64(seed & _MASK64) + np.arange(1, count + 1, dtype=np.uint64) * np.uint64(_GAMMA)
    z = states
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


@dataclasses.dataclass(frozen=True, eq=False)
class RfOperator:
    """Frozen description of one projection.

    signs holds exactly +-1.0; freq_indices is strictly increasing in
    [0, n). Both are redundant with (seed, n, m) and exist so hot paths
    skip regeneration.
    """

    n: int
    m: int
    seed: int
    signs: np.ndarray
    freq_indices: np.ndarray
    scale: float

    def __post_init__(self):
        if not (1 <= self.m <= self.n):
            raise DimensionError(f"need 1 <= m <= n, got n={self.n} m={self.m}")
        if not (0 <= self.seed <= _MASK64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.signs.shape != (self.n,):
            raise DimensionError("signs must have length n")
        if not np.all(np.abs(self.signs) == 1.0):
            raise ValueError("signs must be exactly +-1")
        if self.freq_indices.shape != (self.m,):
            raise DimensionError("freq_indices must have length m")
        fi = self.freq_indices
        if len(fi) and (fi[0] < 0 or fi[-1] >= self.n or np.any(np.diff(fi) <= 0)):
            raise ValueError("freq_indices must be strictly increasing in [0, n)")
        if not (self.scale > 0):
            raise ValueError("scale must be positive")

    @property
    def ratio(self) -> float:
        return self.n / self.m

    def __eq__(self, other):
        if not isinstance(other, RfOperator):
            return NotImplemented
        return (
            self.n == other.n
            and self.m == other.m
            and self.seed == other.seed
            and self.scale == other.scale
            and np.array_equal(self.signs, other.signs)
            and np.array_equal(self.freq_indices, other.freq_indices)
        )


def build_operator(n: int, m: int, seed: int) -> RfOperator:
    """Draw signs and frequency rows for (n, m, seed).

    The SplitMix64 stream is consumed in a fixed order: outputs 0..n-1 set
    the signs (+1 where bit 63 is clear), and the next m outputs drive a
    partial Fisher-Yates pass over [0, n) whose first m entries, sorted
    ascending, become the kept frequency rows. Sampling is without
    replacement so no row is counted twice.
    """
    if not (1 <= m <= n):
        raise DimensionError(f"need 1 <= m <= n, got n={n} m={m}")
    if not (0 <= seed <= _MASK64):
        raise ValueError("seed must fit in an unsigned 64-bit integer")

    outputs = _mixed_outputs(seed, n)
    signs = np.where(outputs >> np.uint64(63) == 0, 1.0, -1.0)

    rng = SplitMix64(seed)
    rng.state = (seed + n * _GAMMA) & _MASK64  # signs consumed n outputs
    pool = list(range(n))
    for i in range(m):
        j = i + rng.next_below(n - i)
        pool[i], pool[j] = pool[j], pool[i]
    freq = np.array(sorted(pool[:m]), dtype=np.int64)

    return RfOperator(
        n=n, m=m, seed=seed, signs=signs, freq_indices=freq, scale=math.sqrt(n / m)
    )


def _as_columns(x, n: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x)
    if arr.ndim == 1:
        if arr.shape[0] != n:
            raise DimensionError(f"vector has length {arr.shape[0]}, operator expects {n}")
        return arr[:, None], True
    if arr.ndim == 2:
        if arr.shape[0] != n:
            raise DimensionError(f"matrix has {arr.shape[0]} rows, operator expects {n}")
        return arr, False
    raise DimensionError(f"expected 1-D or 2-D input, got ndim={arr.ndim}")


def _project(op: RfOperator, cols: np.ndarray) -> np.ndarray:
    flipped = cols * op.signs[:, None]
    spectrum = np.fft.fft(flipped, axis=0, norm="ortho")
    return op.scale * spectrum[op.freq_indices, :]


def apply(op: RfOperator, x) -> np.ndarray:
    """Project one length-n vector to m complex coefficients."""
    cols, _ = _as_columns(x, op.n)
    if cols.shape[1] != 1:
        raise DimensionError("apply takes a single vector; use apply_batch for matrices")
    return _project(op, cols)[:, 0]

def apply_batch(op: RfOperator, X) -> np.ndarray:
    """Project each column of an n x K matrix. Same kernel as apply, so
    column j equals apply(op, X[:, j]) bit for bit."""
    cols, _ = _as_columns(X, op.n)
    return _project(op, cols)


def dense_matrix(op: RfOperator, check_guard: bool = True) -> np.ndarray:
    """Explicit m x n matrix of the projection.

    Built from the DFT definition directly (no FFT), so it doubles as an
    independent reference for the fast path. Guarded to small n because the
    matrix is dense.
    """
    if check_guard and op.n > ORACLE_MAX_N:
        raise OracleSizeError(f"dense path limited to n <= {ORACLE_MAX_N}, got n={op.n}")
    cols = np.arange(op.n)
    phases = np.exp(-2j * np.pi * np.outer(op.freq_indices, cols) / op.n)
    return op.scale / math.sqrt(op.n) * phases * op.signs[None, :]


def apply_dense_oracle(op: RfOperator, x) -> np.ndarray:
    """Reference projection by explicit matrix multiply."""
    mat = dense_matrix(op)
    cols, was_vector = _as_columns(x, op.n)
    out = mat @ cols
    return out[:, 0] if was_vector else out


def serialize_operator(op: RfOperator, extended: bool = False) -> str:
    """JSON blob for an operator.

    The compact form records (version, n, m, seed) only; vectors are
    regenerated on load. The extended form appends the vectors so a reader
    can cross-check regeneration.
    """
    blob = {"version": 1, "n": op.n, "m": op.m, "seed": op.seed}
    if extended:
        blob["signs"] = [int(s) for s in op.signs]
        blob["freq_indices"] = [int(i) for i in op.freq_indices]
    return json.dumps(blob)


def deserialize_operator(text: str) -> RfOperator:
    """Rebuild an operator from its blob, verifying any embedded vectors."""
    try:
        blob = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BlobError(f"operator blob is not valid JSON: {exc}") from exc
    if not isinstance(blob, dict):
        raise BlobError("operator blob must be a JSON object")
    if blob.get("version") != 1:
        raise BlobError(f"unsupported blob version {blob.get('version')!r}")
    try:
        n, m, seed = int(blob["n"]), int(blob["m"]), int(blob["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BlobError(f"operator blob missing or non-integer field: {exc}") from exc
    try:
        op = build_operator(n, m, seed)
    except (DimensionError, ValueError) as exc:
        raise BlobError(f"operator blob rejected: {exc}") from exc
    if "signs" in blob:
        stored = np.asarray(blob["signs"], dtype=float)
        if stored.shape != op.signs.shape or not np.array_equal(stored, op.signs):
            raise BlobError("stored signs disagree with regeneration; blob corrupt")
    if "freq_indices" in blob:
        stored = np.asarray(blob["freq_indices"], dtype=np.int64)
        if stored.shape != op.freq_indices.shape or not np.array_equal(stored, op.freq_indices):
            raise BlobError("stored freq_indices disagree with regeneration; blob corrupt")
    return op
