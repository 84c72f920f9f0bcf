"""Dense operator algebra on tensor-product spaces.

Subsystems are ordered ``[transmon 1, transmon 2, ..., resonator]`` and the
composite index of ``|p1 p2; n>`` is ``(p1 * M2 + p2) * N + n`` (row-major
Kronecker order, the last slot varies fastest).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12
STATE_TOL = 1e-10


class HilbertError(ValueError):
    """Invalid dimension, index or shape in the operator algebra."""


def _as_dims(dims: Sequence[int]) -> tuple[int, ...]:
    out = tuple(int(d) for d in dims)
    if not out or any(d < 1 for d in out):
        raise HilbertError(f"invalid subsystem dimensions {dims!r}")
    return out


@dataclass(frozen=True)
class Operator:
    """Square complex matrix tagged with its subsystem dimensions."""

    data: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = _as_dims(self.dims)
        data = np.asarray(self.data, dtype=complex)
        order = int(np.prod(dims))
        if data.shape != (order, order):
            raise HilbertError(
                f"matrix shape {data.shape} does not match dims {dims} (order {order})"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)

    @property
    def order(self) -> int:
        return self.data.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.data.conj().T, self.dims)

    def hermiticity_error(self) -> float:
        """Relative Frobenius norm of the anti-Hermitian part."""
        scale = np.linalg.norm(self.data)
        if scale == 0.0:
            return 0.0
        return float(np.linalg.norm(self.data - self.data.conj().T) / scale)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return self.hermiticity_error() <= rtol

    def _check(self, other: "Operator"):
        if self.dims != other.dims:
            raise HilbertError(f"dims mismatch {self.dims} vs {other.dims}")

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.data + other.data, self.dims)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.data - other.data, self.dims)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.data @ other.data, self.dims)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.data * scalar, self.dims)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.data, self.dims)


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = _as_dims(self.dims)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (int(np.prod(dims)),):
            raise HilbertError(f"state shape {amps.shape} does not match dims {dims}")
        if abs(np.linalg.norm(amps) - 1.0) > STATE_TOL:
            raise HilbertError("state vector is not normalized")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.dims)


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = _as_dims(self.dims)
        rho = np.asarray(self.matrix, dtype=complex)
        order = int(np.prod(dims))
        if rho.shape != (order, order):
            raise HilbertError(f"density shape {rho.shape} does not match dims {dims}")
        if np.linalg.norm(rho - rho.conj().T) > STATE_TOL:
            raise HilbertError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > STATE_TOL:
            raise HilbertError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(rho).min() < -STATE_TOL:
            raise HilbertError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", rho)
        object.__setattr__(self, "dims", dims)


def ladder(dim: int) -> Operator:
    """Truncated annihilation operator with sqrt(k) on the superdiagonal."""
    if int(dim) < 2:
        raise HilbertError(f"ladder dimension must be >= 2, got {dim}")
    return Operator(np.diag(np.sqrt(np.arange(1, dim)), 1), (dim,))


def projector(i: int, j: int, dim: int) -> Operator:
    """The transition operator |i><j| on a single subsystem."""
    if int(dim) < 1 or not (0 <= i < dim and 0 <= j < dim):
        raise HilbertError(f"projector indices ({i}, {j}) out of range for dim {dim}")
    data = np.zeros((dim, dim), dtype=complex)
    data[i, j] = 1.0
    return Operator(data, (dim,))


def kron(*ops: Operator) -> Operator:
    data = reduce(np.kron, [op.data for op in ops])
    dims = tuple(d for op in ops for d in op.dims)
    return Operator(data, dims)


def identity(dims: Sequence[int]) -> Operator:
    dims = _as_dims(dims)
    return Operator(np.eye(int(np.prod(dims))), dims)


def embed(op: Operator, slot: int, dims: Sequence[int]) -> Operator:
    """Place a single-subsystem operator on ``slot`` of the composite space."""
    dims = _as_dims(dims)
    if not 0 <= slot < len(dims):
        raise HilbertError(f"slot {slot} out of range for {len(dims)} subsystems")
    if op.order != dims[slot]:
        raise HilbertError(
            f"operator of order {op.order} cannot occupy slot {slot} of dimension {dims[slot]}"
        )
    left = int(np.prod(dims[:slot]))
    right = int(np.prod(dims[slot + 1 :]))
    data = np.kron(np.kron(np.eye(left), op.data), np.eye(right))
    return Operator(data, dims)


def embed_diagonal(values: np.ndarray, slot: int, dims: Sequence[int]) -> np.ndarray:
    """Diagonal of ``embed(diag(values), slot, dims)`` without building the matrix.

    ``values`` may carry leading batch axes; the slot axis is the last one.
    """
    dims = _as_dims(dims)
    values = np.asarray(values)
    shape = [1] * len(dims)
    shape[slot] = dims[slot]
    full = values.reshape(values.shape[:-1] + tuple(shape))
    full = np.broadcast_to(full, values.shape[:-1] + dims)
    return full.reshape(values.shape[:-1] + (int(np.prod(dims)),))


def partial_trace(op: Operator, keep: Sequence[int]) -> Operator:
    """Trace out every slot not listed in ``keep`` (kept slots stay in order)."""
    dims = op.dims
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise HilbertError(f"keep slots {keep} out of range")
    n = len(dims)
    tensor = op.data.reshape(dims + dims)
    row = list(range(n))
    col = list(range(n, 2 * n))
    for s in range(n):
        if s not in keep:
            col[s] = row[s]
    out_idx = [row[k] for k in keep] + [col[k] for k in keep]
    reduced = np.einsum(tensor, row + col, out_idx)
    kept = tuple(dims[k] for k in keep)
    order = int(np.prod(kept)) if kept else 1
    return Operator(reduced.reshape(order, order), kept if kept else (1,))


def basis_index(labels: Sequence[int], dims: Sequence[int]) -> int:
    dims = _as_dims(dims)
    if len(labels) != len(dims) or any(not 0 <= l < d for l, d in zip(labels, dims)):
        raise HilbertError(f"labels {tuple(labels)} invalid for dims {dims}")
    return int(np.ravel_multi_index(tuple(labels), dims))


def basis_labels(index: int, dims: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(v) for v in np.unravel_index(index, _as_dims(dims)))


def basis_state(labels: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    dims = _as_dims(dims)
    psi = np.zeros(int(np.prod(dims)), dtype=complex)
    psi[basis_index(labels, dims)] = 1.0
    return psi
