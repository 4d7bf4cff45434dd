"""Dense tensor storage and the CP/Tucker reconstruction algebra.

All types are immutable after construction (backing arrays are copied and
marked read-only) and all operations are pure functions, so everything here
is safe to share across threads.

Modes are indexed from 0. Reconstruction is implemented as a chain of
mode products, which costs O(prod(dims) * sum(ranks)) instead of the
naive O(prod(dims) * prod(ranks)) entrywise sum; the naive form lives in
the test suite as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShapeError",
    "DenseTensor",
    "TuckerFactor",
    "CpFactor",
    "mode_product",
    "tucker_reconstruct",
    "cp_reconstruct",
    "cp_to_tucker",
    "tucker_param_count",
]


class ShapeError(ValueError):
    """Inconsistent tensor/factor dimensions."""


def _frozen_array(values, ndim=None, name="array") -> np.ndarray:
    out = np.array(values, dtype=np.float64, order="C")
    if ndim is not None and out.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DenseTensor:
    """Immutable dense real tensor stored as a row-major flat array.

    Parameters
    ----------
    dims : tuple of int
        Mode sizes ``(d_1, ..., d_p)``; every entry must be >= 1.
    data : ndarray
        Flat array of length ``prod(dims)`` in row-major order
        (last index varies fastest).
    """

    dims: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1:
            raise ShapeError("tensor must have at least one mode")
        if any(d < 1 for d in dims):
            raise ShapeError(f"all mode sizes must be >= 1, got {dims}")
        data = _frozen_array(np.ravel(self.data), ndim=1, name="tensor data")
        if data.size != math.prod(dims):
            raise ShapeError(
                f"data length {data.size} does not match prod(dims) = {math.prod(dims)}"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array) -> "DenseTensor":
        """Build from any array-like, taking its shape as the dims."""
        arr = np.asarray(array, dtype=np.float64)
        return cls(dims=arr.shape, data=arr.ravel(order="C"))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the data shaped to ``dims``."""
        return self.data.reshape(self.dims)


@dataclass(frozen=True)
class TuckerFactor:
    """A Tucker factorization: core tensor plus one factor matrix per mode.

    The j-th factor matrix has shape ``(d_j, r_j)`` where ``r_j`` is the
    j-th mode size of the core.
    """

    core: DenseTensor
    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = tuple(
            _frozen_array(f, ndim=2, name=f"factor {j}") for j, f in enumerate(self.factors)
        )
        if len(factors) != self.core.ndim:
            raise ShapeError(
                f"core has {self.core.ndim} modes but {len(factors)} factors given"
            )
        for j, (f, r) in enumerate(zip(factors, self.core.dims)):
            if f.shape[1] != r:
                raise ShapeError(
                    f"factor {j} has {f.shape[1]} columns, core mode size is {r}"
                )
            if f.shape[0] < r:
                raise ShapeError(
                    f"factor {j} rank {r} exceeds its dimension {f.shape[0]}"
                )
        object.__setattr__(self, "factors", factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.dims


@dataclass(frozen=True)
class CpFactor:
    """A CP (PARAFAC) factorization: component weights plus factor matrices.

    All factor matrices share the same column count ``r`` (the CP rank).
    """

    weights: np.ndarray
    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        weights = _frozen_array(self.weights, ndim=1, name="weights")
        factors = tuple(
            _frozen_array(f, ndim=2, name=f"factor {j}") for j, f in enumerate(self.factors)
        )
        if weights.size < 1:
            raise ShapeError("CP rank must be >= 1")
        if len(factors) < 1:
            raise ShapeError("CP factor needs at least one mode")
        for j, f in enumerate(factors):
            if f.shape[1] != weights.size:
                raise ShapeError(
                    f"factor {j} has {f.shape[1]} columns, expected rank {weights.size}"
                )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)


def _mode_product_array(tensor: np.ndarray, matrix: np.ndarray, mode: int) -> np.ndarray:
    moved = np.moveaxis(tensor, mode, 0)
    head = moved.shape[0]
    flat = moved.reshape(head, -1)
    out = matrix @ flat
    out = out.reshape((matrix.shape[0],) + moved.shape[1:])
    return np.moveaxis(out, 0, mode)


def mode_product(t: DenseTensor, m, mode: int) -> DenseTensor:
    """Multiply a tensor by a matrix along one mode.

    The output replaces ``dims[mode]`` with the matrix row count; entries
    are contracted over the shared index:
    ``out[..., i, ...] = sum_k m[i, k] * t[..., k, ...]``.

    Raises
    ------
    ShapeError
        If ``mode`` is out of range or the matrix column count does not
        match ``t.dims[mode]``.
    """
    matrix = np.asarray(m, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"mode-product matrix must be 2-D, got shape {matrix.shape}")
    if not 0 <= mode < t.ndim:
        raise ShapeError(f"mode {mode} out of range for a {t.ndim}-mode tensor")
    if matrix.shape[1] != t.dims[mode]:
        raise ShapeError(
            f"matrix has {matrix.shape[1]} columns, mode {mode} has size {t.dims[mode]}"
        )
    return DenseTensor.from_array(_mode_product_array(t.array, matrix, mode))


def _tucker_reconstruct_array(core: np.ndarray, factors) -> np.ndarray:
    out = core
    for j, f in enumerate(factors):
        out = _mode_product_array(out, f, j)
    return out


def tucker_reconstruct(f: TuckerFactor) -> DenseTensor:
    """Expand a Tucker factorization to the full dense tensor.

    Computes the core multiplied by every factor matrix along its mode,
    i.e. entries ``sum over (z_1..z_p) of core[z_1..z_p] *
    prod_j factors[j][h_j, z_j]``.
    """
    return DenseTensor.from_array(_tucker_reconstruct_array(f.core.array, f.factors))


_EINSUM_LETTERS = "abcdefghijklmnopqrstuvwxy"  # 'z' reserved for the rank index


def cp_reconstruct(f: CpFactor) -> DenseTensor:
    """Expand a CP factorization: weighted sum of rank-1 outer products."""
    p = len(f.factors)
    if p > len(_EINSUM_LETTERS):
        raise ShapeError(f"at most {len(_EINSUM_LETTERS)} modes supported")
    letters = _EINSUM_LETTERS[:p]
    spec = "z," + ",".join(f"{c}z" for c in letters) + "->" + letters
    out = np.einsum(spec, f.weights, *f.factors)
    return DenseTensor.from_array(out)


def cp_to_tucker(f: CpFactor) -> TuckerFactor:
    """Embed a CP factorization as a Tucker factorization with diagonal core.

    The core is ``r x ... x r`` with the CP weights on the superdiagonal
    and zeros elsewhere; factor matrices are reused unchanged.
    """
    r, p = f.rank, len(f.factors)
    core = np.zeros((r,) * p)
    core[(np.arange(r),) * p] = f.weights
    return TuckerFactor(core=DenseTensor.from_array(core), factors=f.factors)


def tucker_param_count(dims, ranks) -> int:
    """Number of free parameters in a Tucker factorization.

    Returns ``prod(ranks) + sum_j ranks[j] * dims[j]``.
    """
    dims = [int(d) for d in dims]
    ranks = [int(r) for r in ranks]
    if len(dims) != len(ranks):
        raise ShapeError(f"{len(dims)} dims but {len(ranks)} ranks")
    for j, (d, r) in enumerate(zip(dims, ranks)):
        if not 1 <= r <= d:
            raise ShapeError(f"rank {r} invalid for mode {j} of size {d}")
    return math.prod(ranks) + sum(r * d for r, d in zip(ranks, dims))
