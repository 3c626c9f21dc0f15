"""Dense complex third-order tensors and the multilinear ops used everywhere else.

Conventions (fixed; all identities in the test suite are checked against them):

* A tensor is stored as a numpy array of shape (I1, I2, I3), complex128.
* Modes are 1-based (mode in {1, 2, 3}).
* ``unfold(X, n)`` arranges the mode-n fibers as columns, with the remaining
  modes ordered so that *earlier* modes vary fastest (Fortran order over the
  non-n indices).  Under this convention::

      unfold(X, 1) = A @ kr(C, B).T
      unfold(X, 2) = B @ kr(C, A).T
      unfold(X, 3) = C @ kr(B, A).T

  for X composed from factors (A, B, C), where ``kr(U, V)`` is the Khatri-Rao
  product with column r = kron(U[:, r], V[:, r]) (V index varies fastest).
* The tensor inner product conjugates its *second* argument, so that
  ``inner_product(X, X)`` is real and equals the squared Frobenius norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_complex(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.complex128))


@dataclass(frozen=True)
class ComplexTensor3:
    """Immutable dense complex tensor of order 3."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_complex(self.data)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-way array, got ndim={arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be positive, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, ComplexTensor3) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class FactorTriple:
    """CP factor matrices (A, B, C) with optional per-column weights.

    All three matrices must share the same column count R.  When ``weights``
    is None an all-ones weight vector is implied (norms absorbed into A).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        A, B, C = (_as_complex(m) for m in (self.A, self.B, self.C))
        for name, m in (("A", A), ("B", B), ("C", C)):
            if m.ndim != 2:
                raise ValueError(f"factor {name} must be a matrix")
        if not (A.shape[1] == B.shape[1] == C.shape[1]):
            raise ValueError(
                f"factor column counts differ: {A.shape[1]}, {B.shape[1]}, {C.shape[1]}"
            )
        w = self.weights
        if w is not None:
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (A.shape[1],):
                raise ValueError("weights length must equal the column count")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            w.setflags(write=False)
        for m in (A, B, C):
            m.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "weights", w)

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])


def _check_mode(mode: int) -> None:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def unfold(X: ComplexTensor3, mode: int) -> np.ndarray:
    """Mode-n unfolding: shape (I_n, prod of the other dims)."""
    _check_mode(mode)
    arr = np.moveaxis(X.data, mode - 1, 0)
    return arr.reshape(arr.shape[0], -1, order="F")


def fold(M: np.ndarray, mode: int, dims: tuple[int, int, int]) -> ComplexTensor3:
    """Inverse of :func:`unfold` for the given target dims."""
    _check_mode(mode)
    dims = tuple(int(d) for d in dims)
    rest = [d for i, d in enumerate(dims) if i != mode - 1]
    M = _as_complex(M)
    if M.shape != (dims[mode - 1], rest[0] * rest[1]):
        raise ValueError(f"matrix shape {M.shape} does not match dims {dims} mode {mode}")
    arr = M.reshape([dims[mode - 1]] + rest, order="F")
    return ComplexTensor3(np.moveaxis(arr, 0, mode - 1))


def mode_n_product(X: ComplexTensor3, M, mode: int) -> ComplexTensor3:
    """n-mode product: unfold(result, n) == M @ unfold(X, n)."""
    _check_mode(mode)
    M = _as_complex(M)
    if M.ndim != 2 or M.shape[1] != X.dims[mode - 1]:
        raise ValueError(
            f"matrix of shape {M.shape} cannot multiply mode {mode} of dims {X.dims}"
        )
    dims = list(X.dims)
    dims[mode - 1] = M.shape[0]
    return fold(M @ unfold(X, mode), mode, tuple(dims))


def khatri_rao(A, B) -> np.ndarray:
    """Columnwise Kronecker product; column r = kron(A[:, r], B[:, r])."""
    A, B = _as_complex(A), _as_complex(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"column counts must match, got {A.shape} and {B.shape}")
    I, R = A.shape
    J = B.shape[0]
    # index (i, j) with j fastest, matching np.kron(a, b)
    return (A[:, None, :] * B[None, :, :]).reshape(I * J, R)


def compose(F: FactorTriple) -> ComplexTensor3:
    """Assemble the dense tensor  X_ijk = sum_r w_r A_ir B_jr C_kr."""
    I1, I2, I3 = F.dims
    if F.rank == 0:
        return ComplexTensor3(np.zeros((I1, I2, I3), dtype=np.complex128))
    A = F.A if F.weights is None else F.A * F.weights[None, :]
    arr = np.einsum("ir,jr,kr->ijk", A, F.B, F.C, optimize=True)
    return ComplexTensor3(arr)


def inner_product(X: ComplexTensor3, Y: ComplexTensor3) -> complex:
    """<X, Y> with the second argument conjugated."""
    if X.dims != Y.dims:
        raise ValueError(f"dimension mismatch: {X.dims} vs {Y.dims}")
    return complex(np.sum(X.data * np.conj(Y.data)))


def frobenius_norm(X: ComplexTensor3) -> float:
    return float(np.linalg.norm(X.data))
