"""Complex l1-regularized least squares (FISTA) and angle-grid dictionaries.

The solver minimizes

    F(x) = || y - A x ||_2^2 + lam * || x ||_1

(note: no 1/2 on the quadratic).  The gradient Lipschitz constant is
L = 2 * sigma_max(A)^2, the proximal step is complex soft-thresholding with
threshold lam / L (magnitude shrink, phase preserved), so for A = I the fixed
point is x = soft(y, lam / 2).

``A`` may be a dense ndarray or any object exposing ``shape``, ``matvec`` and
``rmatvec`` (matrix-free operators built from Kronecker structure live here
too, so the big dictionaries are never materialized).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

class MatrixOperator:
    """Adapter giving a dense matrix the operator protocol."""

    def __init__(self, M):
        self.M = np.asarray(M, dtype=np.complex128)
        self.shape = self.M.shape

    def matvec(self, x):
        return self.M @ x

    def rmatvec(self, y):
        return self.M.conj().T @ y


class ScaledColumnsOperator:
    """Wrap an operator with per-column scaling: (A diag(s)) x and its adjoint."""

    def __init__(self, op, scales):
        self.op = op
        self.scales = np.asarray(scales, dtype=np.complex128)
        self.shape = op.shape

    def matvec(self, x):
        return self.op.matvec(x * self.scales)

    def rmatvec(self, y):
        return np.conj(self.scales) * self.op.rmatvec(y)


def as_operator(A):
    return A if hasattr(A, "matvec") else MatrixOperator(A)


def top_singular_value(op, n_iters: int = 60, seed: int = 0) -> float:
    """Power iteration on A^H A; deterministic under the fixed seed."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.shape[1]) + 1j * rng.standard_normal(op.shape[1])
    x /= np.linalg.norm(x)
    s = 0.0
    for _ in range(n_iters):
        x = op.rmatvec(op.matvec(x))
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            return 0.0
        s, x = np.sqrt(nrm), x / nrm
    return float(s)


def adjoint_mismatch(op, rng: np.random.Generator) -> float:
    """Relative |<Ax, y> - <x, A^H y>| on a random pair; 0 for a true adjoint."""
    x = rng.standard_normal(op.shape[1]) + 1j * rng.standard_normal(op.shape[1])
    y = rng.standard_normal(op.shape[0]) + 1j * rng.standard_normal(op.shape[0])
    lhs = np.vdot(y, op.matvec(x))
    rhs = np.vdot(op.rmatvec(y), x)
    scale = max(abs(lhs), abs(rhs), 1e-30)
    return abs(lhs - rhs) / scale


# ---------------------------------------------------------------------------
# FISTA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FistaConfig:
    lam: float = 1e-3
    max_iters: int = 2000
    tol: float = 1e-8          # relative objective change
    step: float | None = None  # None -> 1 / (2 sigma_max^2) via power iteration

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")


@dataclass(frozen=True)
class FistaResult:
    x: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = True


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Complex soft threshold: shrink magnitudes by t, keep phases."""
    mag = np.abs(v)
    return v * np.maximum(0.0, 1.0 - t / np.maximum(mag, 1e-300))


def fista(A, y, cfg: FistaConfig) -> FistaResult:
    op = as_operator(A)
    y = np.asarray(y, dtype=np.complex128).ravel()
    if y.shape[0] != op.shape[0]:
        raise ValueError(f"y length {y.shape[0]} does not match operator rows {op.shape[0]}")
    if cfg.step is not None:
        step = cfg.step
    else:
        smax = top_singular_value(op)
        if smax == 0.0:
            return FistaResult(np.zeros(op.shape[1], dtype=np.complex128), [0.0], 0, True)
        step = 1.0 / (2.0 * smax**2)

    x = np.zeros(op.shape[1], dtype=np.complex128)
    z = x.copy()
    ax = np.zeros(op.shape[0], dtype=np.complex128)
    az = ax                      # A z tracked through the linear momentum update
    t_momentum = 1.0
    trace = [float(np.linalg.norm(y) ** 2)]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = 2.0 * op.rmatvec(az - y)
        x_new = soft_threshold(z - step * grad, cfg.lam * step)
        ax_new = op.matvec(x_new)
        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t_momentum**2)) / 2.0
        beta = (t_momentum - 1.0) / t_new
        z = x_new + beta * (x_new - x)
        az = ax_new + beta * (ax_new - ax)
        x, ax, t_momentum = x_new, ax_new, t_new
        obj = float(np.linalg.norm(y - ax) ** 2 + cfg.lam * np.sum(np.abs(x)))
        trace.append(obj)
        if abs(trace[-2] - obj) <= cfg.tol * max(abs(trace[-2]), 1e-30):
            converged = True
            break
    return FistaResult(x, trace, it, converged)


def universal_lambda(noise_std: float, n_atoms: int, c: float = 1.0) -> float:
    """Universal-threshold rule lam = c * sigma * sqrt(2 log n) for unit-norm atoms."""
    return float(c * noise_std * np.sqrt(2.0 * np.log(max(n_atoms, 2))))


# ---------------------------------------------------------------------------
# angle grid and dictionaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngleGrid:
    """Uniform sin-domain grid over [-1, 1) for AoA (BS side) and AoD (MS side).

    Dictionary columns are ordered AoD-major: the column for AoD index i and
    AoA index j has linear index i * n_aoa + j.
    """

    n_aoa: int
    n_aod: int

    def __post_init__(self):
        if self.n_aoa < 1 or self.n_aod < 1:
            raise ValueError("grid sizes must be >= 1")

    @property
    def size(self) -> int:
        return self.n_aoa * self.n_aod

    @property
    def sin_aoa(self) -> np.ndarray:
        return -1.0 + 2.0 * np.arange(self.n_aoa) / self.n_aoa

    @property
    def sin_aod(self) -> np.ndarray:
        return -1.0 + 2.0 * np.arange(self.n_aod) / self.n_aod

    def cell(self, linear_index: int) -> tuple[int, int]:
        """(aod index, aoa index) of a linear dictionary column."""
        return divmod(int(linear_index), self.n_aoa)


def grid_responses(design, grid: AngleGrid):
    """Compressed steering responses (G_Q = Q^T a_bs over the AoA grid,
    G_P = P^T a_ms over the AoD grid)."""
    from .channel_sim import steering_from_sin
    d = 0.5
    G_Q = design.Q.T @ steering_from_sin(grid.sin_aoa, design.n_bs, d)
    G_P = design.P.T @ steering_from_sin(grid.sin_aod, design.n_ms, d)
    return G_Q, G_P


class GridDictionaryOperator:
    """Matrix-free (P^T kron Q^T) Sigma-bar: column (i, j) = G_P[:, i] kron G_Q[:, j].

    matvec reshapes the coefficient vector into an (n_aoa, n_aod) matrix and
    applies two small dense products instead of touching the full dictionary.
    """

    def __init__(self, design, grid: AngleGrid, normalize_columns: bool = False):
        self.grid = grid
        self.G_Q, self.G_P = grid_responses(design, grid)
        if normalize_columns:
            # dictionary column norms separate as ||G_P_i|| * ||G_Q_j||, so
            # per-factor normalization yields exactly unit-norm columns
            self.G_Q = self.G_Q / np.linalg.norm(self.G_Q, axis=0)
            self.G_P = self.G_P / np.linalg.norm(self.G_P, axis=0)
        self.m_bs, _ = self.G_Q.shape
        self.t_prime, _ = self.G_P.shape
        self.shape = (self.m_bs * self.t_prime, grid.size)

    def matvec(self, x):
        X = x.reshape(self.grid.n_aoa, self.grid.n_aod, order="F")
        M = self.G_Q @ X @ self.G_P.T
        return M.ravel(order="F")

    def rmatvec(self, y):
        M = y.reshape(self.m_bs, self.t_prime, order="F")
        X = self.G_Q.conj().T @ M @ self.G_P.conj()
        return X.ravel(order="F")

    def column_norms(self) -> np.ndarray:
        nq = np.linalg.norm(self.G_Q, axis=0)
        np_ = np.linalg.norm(self.G_P, axis=0)
        return (np_[None, :] * nq[:, None]).ravel(order="F")

    def column(self, k: int) -> np.ndarray:
        """Dictionary column k = kron(G_P[:, j], G_Q[:, i]) without a matvec."""
        i = k % self.grid.n_aoa
        j = k // self.grid.n_aoa
        return np.outer(self.G_Q[:, i], self.G_P[:, j]).ravel(order="F")


class StackedGridOperator:
    """Block-diagonal stack of one GridDictionaryOperator for several right-
    hand sides (one per user); a single batched application replaces a Python
    loop of small per-user solves."""

    def __init__(self, op: GridDictionaryOperator, n_rhs: int):
        if n_rhs < 1:
            raise ValueError("need at least one right-hand side")
        self.op = op
        self.n_rhs = n_rhs
        self.shape = (op.shape[0] * n_rhs, op.shape[1] * n_rhs)
        self._G_Qc = op.G_Q.conj()
        self._G_Pc = op.G_P.conj()
        g = op.grid
        X = np.empty((g.n_aoa, g.n_aod, n_rhs), dtype=np.complex128)
        Y = np.empty((op.m_bs, op.t_prime, n_rhs), dtype=np.complex128)
        self._fwd_path = np.einsum_path(
            "ma,adu,td->utm", op.G_Q, X, op.G_P, optimize="optimal")[0]
        self._adj_path = np.einsum_path(
            "ma,mtu,td->uda", self._G_Qc, Y, self._G_Pc, optimize="optimal")[0]

    def matvec(self, x):
        g = self.op.grid
        X = x.reshape(g.n_aoa, g.n_aod, self.n_rhs, order="F")
        # output written as (U, t', m) C-order == (m, t', U) F-order, so the
        # C-ravel below is the stacked per-user vec without a transpose copy
        out = np.einsum(
            "ma,adu,td->utm", self.op.G_Q, X, self.op.G_P, optimize=self._fwd_path)
        return out.ravel()

    def rmatvec(self, y):
        m, tp = self.op.m_bs, self.op.t_prime
        Y = y.reshape(m, tp, self.n_rhs, order="F")
        X = np.einsum(
            "ma,mtu,td->uda", self._G_Qc, Y, self._G_Pc, optimize=self._adj_path)
        return X.ravel()

    def column_norms(self) -> np.ndarray:
        return np.tile(self.op.column_norms(), self.n_rhs)


def build_dictionary(design, grid: AngleGrid) -> np.ndarray:
    """Dense (m_bs * t_prime) x (n_aoa * n_aod) dictionary via the mixed-product
    identity; intended for oracle tests and small grids only."""
    G_Q, G_P = grid_responses(design, grid)
    return np.kron(G_P, G_Q)
