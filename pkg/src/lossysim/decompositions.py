"""Triangular and rectangular meshes of two-mode blocks realizing a unitary.

Both generators null the off-diagonal of ``U`` with nearest-neighbour
two-mode rotations, then absorb the leftover diagonal phases into the last
beamsplitter touching each mode. Every generated beamsplitter is dressed with
``Loss(eta)`` on both input arms.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .fock import check_unitary
from .network import Beamsplitter, LossyNetwork, dressed_network


def _right_null(U: np.ndarray, r: int, c: int) -> np.ndarray:
    """M with (U M)[r, c] = 0, acting on columns (c, c+1). Returns the 2x2 M."""
    x, y = U[r, c], U[r, c + 1]
    norm = np.hypot(abs(x), abs(y))
    if norm == 0.0:
        return np.eye(2, dtype=complex)
    M = np.array([[y, np.conj(x)], [-x, np.conj(y)]]) / norm
    U[:, [c, c + 1]] = U[:, [c, c + 1]] @ M
    return M


def _left_null(U: np.ndarray, r: int, c: int) -> np.ndarray:
    """L with (L U)[r, c] = 0, acting on rows (r-1, r). Returns the 2x2 L."""
    x, y = U[r - 1, c], U[r, c]
    norm = np.hypot(abs(x), abs(y))
    if norm == 0.0:
        return np.eye(2, dtype=complex)
    L = np.array([[np.conj(x), np.conj(y)], [y, -x]]) / norm
    U[[r - 1, r], :] = L @ U[[r - 1, r], :]
    return L


def _absorb_diagonal(m: int, blocks: list[tuple[tuple[int, int], np.ndarray]], d: np.ndarray):
    """Fold the output phases ``d`` into the last block on each mode."""
    blocks = [(modes, V.copy()) for modes, V in blocks]
    for q in range(m):
        for k in range(len(blocks) - 1, -1, -1):
            modes, V = blocks[k]
            if q in modes:
                row = modes.index(q)
                V[row, :] *= d[q]
                break
        else:
            if abs(d[q] - 1.0) > 1e-12:
                raise ValidationError(f"mode {q} is untouched but carries a phase")
    return [Beamsplitter.from_matrix(modes, V) for modes, V in blocks]


def _prepare(U) -> np.ndarray:
    U = check_unitary(U)
    if U.shape[0] < 2:
        raise ValidationError("meshes need at least two modes")
    return U.copy()


def generate_reck(U, eta: float) -> LossyNetwork:
    """Triangular mesh with m(m-1)/2 dressed beamsplitters."""
    W = _prepare(U)
    m = W.shape[0]
    blocks = []
    for i in range(m - 1, 0, -1):
        for j in range(i):
            M = _right_null(W, i, j)
            blocks.append(((j, j + 1), M.conj().T))
    bs = _absorb_diagonal(m, blocks, np.diag(W))
    return dressed_network(m, bs, eta, f"triangular mesh, m={m}, eta={eta}")


def generate_clements(U, eta: float) -> LossyNetwork:
    """Rectangular mesh with m(m-1)/2 dressed beamsplitters."""
    W = _prepare(U)
    m = W.shape[0]
    right, left = [], []
    for i in range(m - 1):
        if i % 2 == 0:
            for j in range(i + 1):
                c = i - j
                M = _right_null(W, m - 1 - j, c)
                right.append(((c, c + 1), M.conj().T))
        else:
            for j in range(1, i + 2):
                r = m + j - i - 2
                L = _left_null(W, r, j - 1)
                left.append(((r - 1, r), L))
    d = np.diag(W).copy()
    # U = L_1^dag ... L_p^dag D R, and L^dag D = D (D^-1 L^dag D)
    moved = []
    for modes, L in reversed(left):
        dd = d[list(modes)]
        moved.append((modes, (L.conj().T * dd[None, :]) / dd[:, None]))
    bs = _absorb_diagonal(m, right + moved, d)
    return dressed_network(m, bs, eta, f"rectangular mesh, m={m}, eta={eta}")
