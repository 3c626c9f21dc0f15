"""Layered-pilot training artifacts and uniqueness (Kruskal-type) checks.

A training design consists of
  * P  (n_ms x t_prime)  common beamforming matrix, entries (1/n_ms) e^{j*theta},
  * Q  (n_bs x m_bs)     combining matrix, entries (1/n_bs) e^{j*theta},
  * S  (t x u)           pilot matrix with unit-norm columns,
  * O  (u x L)           0/1 block selector expanding S to the per-path pilot
                          matrix S_L = S @ O.

The constant-modulus scaling of P and Q follows the analog phase-shifter
constraint (note the 1/n scaling, not 1/sqrt(n); it only shifts the global
SNR reference).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

KRANK_TOL = 1e-9          # subset dependent when sigma_min / sigma_max(full M) < tol
KRANK_EXHAUSTIVE_MAX = 20  # exhaustive subset search only up to this many columns


@dataclass(frozen=True)
class TrainingDesign:
    P: np.ndarray  # n_ms x t_prime
    Q: np.ndarray  # n_bs x m_bs
    S: np.ndarray  # t x u
    O: np.ndarray  # u x L, 0/1 block selector

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.complex128)
        Q = np.asarray(self.Q, dtype=np.complex128)
        S = np.asarray(self.S, dtype=np.complex128)
        O = np.asarray(self.O, dtype=np.float64)
        if O.ndim != 2 or O.shape[0] != S.shape[1]:
            raise ValueError("O must be u x L with u = pilot column count")
        col_sums = O.sum(axis=0)
        if not np.all((O == 0) | (O == 1)) or not np.all(col_sums == 1):
            raise ValueError("each column of O must contain exactly one 1")
        for m in (P, Q, S, O):
            m.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "O", O)

    @property
    def n_ms(self) -> int:
        return self.P.shape[0]

    @property
    def n_bs(self) -> int:
        return self.Q.shape[0]

    @property
    def m_bs(self) -> int:
        return self.Q.shape[1]

    @property
    def t_prime(self) -> int:
        return self.P.shape[1]

    @property
    def t(self) -> int:
        return self.S.shape[0]

    @property
    def n_users(self) -> int:
        return self.S.shape[1]

    @property
    def paths_per_user(self) -> list[int]:
        return [int(r) for r in self.O.sum(axis=1)]

    @property
    def S_L(self) -> np.ndarray:
        """Per-path pilot matrix: column l repeats the owning user's pilots."""
        return self.S @ self.O


def expansion_matrix(paths_per_user) -> np.ndarray:
    """Block selector O: row u has ones over user u's contiguous path block."""
    paths_per_user = [int(l) for l in paths_per_user]
    if any(l < 1 for l in paths_per_user):
        raise ValueError("every user needs at least one path")
    U, L = len(paths_per_user), sum(paths_per_user)
    O = np.zeros((U, L))
    k = 0
    for u, lu in enumerate(paths_per_user):
        O[u, k:k + lu] = 1.0
        k += lu
    return O


def random_unit_modulus(rng: np.random.Generator, rows: int, cols: int, scale: float) -> np.ndarray:
    """Matrix of entries scale * e^{j*theta}, theta i.i.d. uniform on [-pi, pi]."""
    theta = rng.uniform(-np.pi, np.pi, size=(rows, cols))
    return scale * np.exp(1j * theta)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary n x n DFT (unit-norm, mutually orthogonal columns)."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def mutual_coherence(S) -> float:
    """Largest normalized inner product between distinct columns."""
    S = np.asarray(S, dtype=np.complex128)
    norms = np.linalg.norm(S, axis=0)
    G = (S / norms).conj().T @ (S / norms)
    np.fill_diagonal(G, 0.0)
    return float(np.max(np.abs(G)))


def welch_bound(t: int, u: int) -> float:
    """Lower bound on the coherence of u unit vectors in C^t (0 when u <= t)."""
    if u <= t:
        return 0.0
    return float(np.sqrt((u - t) / (t * (u - 1))))


def minimize_coherence(
    rng: np.random.Generator,
    t: int,
    u: int,
    iters: int = 500,
    restarts: int = 10,
) -> np.ndarray:
    """Near-Grassmannian frame of u unit-norm columns in C^t.

    Projected gradient descent on the smooth coherence surrogate
    sum_{i != j} |<s_i, s_j>|^{2p}, annealing the power p so the surrogate
    sharpens toward the max as iterations progress.  Best frame seen over
    all restarts and iterations is kept.
    """
    best, best_mu = None, np.inf
    for _ in range(restarts):
        S = rng.standard_normal((t, u)) + 1j * rng.standard_normal((t, u))
        S /= np.linalg.norm(S, axis=0)
        for it in range(iters):
            p = 4.0 + 28.0 * it / max(iters - 1, 1)
            G = S.conj().T @ S
            W = np.abs(G) ** (2 * (p - 1))
            np.fill_diagonal(W, 0.0)
            grad = 2 * p * (S @ (W * G))      # Wirtinger gradient of the surrogate
            S = S - 0.1 * grad / max(np.linalg.norm(grad), 1e-12)
            S /= np.maximum(np.linalg.norm(S, axis=0), 1e-12)
            mu_now = mutual_coherence(S)
            if mu_now < best_mu:
                best, best_mu = S.copy(), mu_now
    return best


def pilot_matrix(rng: np.random.Generator, t: int, u: int) -> np.ndarray:
    """Pilot matrix with unit-norm columns.

    Square case uses the unitary DFT (coherence 0); t > u takes the first u
    DFT columns; t < u runs the coherence-minimization heuristic.
    """
    if t < 2:
        raise ValueError("pilot length t must be >= 2 for identifiability")
    if t >= u:
        return dft_matrix(t)[:, :u]
    return minimize_coherence(rng, t, u)


def build_design(
    rng: np.random.Generator,
    n_bs: int,
    n_ms: int,
    m_bs: int,
    t_prime: int,
    t: int,
    paths_per_user,
) -> TrainingDesign:
    """Random constant-modulus P and Q plus a coherence-minimized pilot matrix."""
    u = len(list(paths_per_user))
    return TrainingDesign(
        P=random_unit_modulus(rng, n_ms, t_prime, 1.0 / n_ms),
        Q=random_unit_modulus(rng, n_bs, m_bs, 1.0 / n_bs),
        S=pilot_matrix(rng, t, u),
        O=expansion_matrix(paths_per_user),
    )


# ---------------------------------------------------------------------------
# k-rank machinery
# ---------------------------------------------------------------------------

def _subset_independent(M: np.ndarray, cols, sigma_max: float) -> bool:
    sub = M[:, list(cols)]
    if len(cols) > M.shape[0]:
        return False
    s = np.linalg.svd(sub, compute_uv=False)
    return s[-1] > KRANK_TOL * sigma_max


def krank(M) -> int:
    """Kruskal rank: largest k such that every k-column subset is independent.

    If the whole matrix has full column rank the k-rank equals the column
    count (every subset of independent columns is independent), so the
    exhaustive search only runs for rank-deficient inputs.
    """
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("krank needs a nonempty matrix")
    n = M.shape[1]
    s = np.linalg.svd(M, compute_uv=False)
    sigma_max = s[0]
    if sigma_max == 0.0:
        return 0
    if n <= M.shape[0] and s[-1] > KRANK_TOL * sigma_max:
        return n
    if n > KRANK_EXHAUSTIVE_MAX:
        warnings.warn(
            f"krank: {n} columns exceeds the exhaustive limit; "
            "returning the full-matrix rank as an upper bound"
        )
        return int(np.sum(s > KRANK_TOL * sigma_max))
    k = 0
    for size in range(1, n + 1):
        if all(_subset_independent(M, c, sigma_max) for c in combinations(range(n), size)):
            k = size
        else:
            break
    return k


def krank_partitioned(M, blocks) -> int:
    """k'-rank of a column-partitioned matrix.

    The maximal r such that every choice of r blocks yields a jointly
    linearly independent set of columns.
    """
    M = np.asarray(M, dtype=np.complex128)
    blocks = [int(b) for b in blocks]
    if sum(blocks) != M.shape[1]:
        raise ValueError(f"block sizes {blocks} do not sum to {M.shape[1]} columns")
    if any(b < 1 for b in blocks):
        raise ValueError("block sizes must be positive")
    n_blocks = len(blocks)
    if n_blocks > KRANK_EXHAUSTIVE_MAX:
        warnings.warn("krank_partitioned: too many blocks for exhaustive search")
        n_blocks = KRANK_EXHAUSTIVE_MAX
    starts = np.concatenate([[0], np.cumsum(blocks)])
    col_sets = [list(range(starts[i], starts[i + 1])) for i in range(len(blocks))]
    sigma_max = np.linalg.svd(M, compute_uv=False)[0]
    if sigma_max == 0.0:
        return 0
    k = 0
    for size in range(1, len(blocks) + 1):
        ok = True
        for chosen in combinations(range(len(blocks)), size):
            cols = [c for b in chosen for c in col_sets[b]]
            if not _subset_independent(M, cols, sigma_max):
                ok = False
                break
        if ok:
            k = size
        else:
            break
    return k


# ---------------------------------------------------------------------------
# uniqueness report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniquenessReport:
    regime: str                  # "single_path" or "multi_path"
    k_aq: int
    k_ap: int
    k_s: int
    kruskal_lhs: int
    kruskal_rhs: int
    kruskal_ok: bool
    dimension_ok: bool           # m_bs * t_prime >= sum L_u^2 (multi-path only)
    passed: bool

    def summary(self) -> str:
        return (
            f"regime={self.regime} k(A_Q)={self.k_aq} k(A_P)={self.k_ap} "
            f"k(S)={self.k_s} sum={self.kruskal_lhs} needed>={self.kruskal_rhs} "
            f"dim_ok={self.dimension_ok} -> {'PASS' if self.passed else 'FAIL'}"
        )


def check_uniqueness(design: TrainingDesign, channel) -> UniquenessReport:
    """Evaluate the identifiability conditions for a design/channel pair.

    Single-path users: k(A_Q) + k(A_P) + k(S) >= 2U + 2.
    Multi-path users:  m_bs * t_prime >= sum L_u^2  and
                       k'(A_Q) + k'(A_P) + k(S) >= 2U + 2,
    with the partition rank taken over per-user column blocks.
    """
    from .channel_sim import steering_from_sin  # local import avoids a cycle

    paths = channel.flat_paths()
    sin_aoa = np.array([np.sin(p.aoa) for p in paths])
    sin_aod = np.array([np.sin(p.aod) for p in paths])
    A_Q = design.Q.T @ steering_from_sin(sin_aoa, channel.n_bs, channel.d_over_lambda)
    A_P = design.P.T @ steering_from_sin(sin_aod, channel.n_ms, channel.d_over_lambda)
    ppu = channel.paths_per_user
    U = channel.n_users
    k_s = krank(design.S)
    rhs = 2 * U + 2
    if all(l == 1 for l in ppu):
        k_aq, k_ap = krank(A_Q), krank(A_P)
        lhs = k_aq + k_ap + k_s
        dim_ok = True
        passed = lhs >= rhs
        regime = "single_path"
    else:
        k_aq = krank_partitioned(A_Q, ppu)
        k_ap = krank_partitioned(A_P, ppu)
        lhs = k_aq + k_ap + k_s
        dim_ok = design.m_bs * design.t_prime >= sum(l * l for l in ppu)
        passed = dim_ok and lhs >= rhs
        regime = "multi_path"
    return UniquenessReport(regime, k_aq, k_ap, k_s, lhs, rhs, lhs >= rhs, dim_ok, passed)


# ---------------------------------------------------------------------------
# serialization (shares the channel container style)
# ---------------------------------------------------------------------------

def _mat_to_lists(M: np.ndarray) -> dict:
    return {"re": M.real.tolist(), "im": M.imag.tolist()}


def _mat_from_lists(d: dict) -> np.ndarray:
    return np.array(d["re"]) + 1j * np.array(d["im"])


def design_to_dict(design: TrainingDesign) -> dict:
    return {
        "P": _mat_to_lists(design.P),
        "Q": _mat_to_lists(design.Q),
        "S": _mat_to_lists(design.S),
        "paths_per_user": design.paths_per_user,
    }


def design_from_dict(d: dict) -> TrainingDesign:
    return TrainingDesign(
        P=_mat_from_lists(d["P"]),
        Q=_mat_from_lists(d["Q"]),
        S=_mat_from_lists(d["S"]),
        O=expansion_matrix(d["paths_per_user"]),
    )


def save_design(design: TrainingDesign, path) -> None:
    with open(path, "w") as f:
        json.dump(design_to_dict(design), f)


def load_design(path) -> TrainingDesign:
    with open(path) as f:
        return design_from_dict(json.load(f))
