"""Fock-basis combinatorics and matrix permanents.

Occupation vectors are plain tuples of non-negative ints (hashable, usable as
dict keys). Type vectors are the same tuples sorted non-increasingly.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from functools import lru_cache
from typing import Iterable, Sequence, Tuple

import numpy as np
from numba import njit

from .errors import CapExceededError, PhotonNumberMismatchError, ValidationError

Occupation = Tuple[int, ...]

RYSER_MAX_DIM = 20
NAIVE_MAX_DIM = 8
ENUMERATION_CAP = 10**7
UNITARY_ATOL = 1e-10

# float factorials; 170! is the largest that fits a double
FACTORIALS = np.array([float(math.factorial(k)) for k in range(171)])


def as_occupation(counts: Iterable[int], m: int | None = None) -> Occupation:
    """Validate and canonicalize an occupation vector."""
    occ = tuple(int(c) for c in counts)
    if any(c < 0 for c in occ):
        raise ValidationError(f"negative occupation in {occ}")
    if m is not None and len(occ) != m:
        raise ValidationError(f"occupation {occ} has {len(occ)} modes, expected {m}")
    return occ


def fock_input(n: int, m: int) -> Occupation:
    """The standard input |1,...,1,0,...,0> with ``n`` photons in ``m`` modes."""
    if not 0 <= n <= m:
        raise ValidationError(f"need 0 <= n <= m, got n={n}, m={m}")
    return (1,) * n + (0,) * (m - n)


def num_occupations(m: int, total: int) -> int:
    return math.comb(total + m - 1, m - 1) if m > 0 else int(total == 0)


@lru_cache(maxsize=256)
def _enumerate(m: int, total: int) -> Tuple[Occupation, ...]:
    if m == 1:
        return ((total,),)
    out = []
    for first in range(total, -1, -1):
        for rest in _enumerate(m - 1, total - first):
            out.append((first,) + rest)
    return tuple(out)


def enumerate_occupations(m: int, total: int) -> list[Occupation]:
    """All occupation vectors of ``total`` photons in ``m`` modes.

    Ordered lexicographically with the first mode most significant and
    descending, e.g. ``(2,0), (1,1), (0,2)``.
    """
    if m < 1 or total < 0:
        raise ValidationError(f"invalid enumeration m={m}, total={total}")
    if num_occupations(m, total) > ENUMERATION_CAP:
        raise CapExceededError(
            f"C({total + m - 1},{m - 1}) occupation vectors exceeds cap {ENUMERATION_CAP}"
        )
    return list(_enumerate(m, total))


def type_of(n: Sequence[int]) -> Occupation:
    """Non-increasingly sorted copy of ``n``."""
    return tuple(sorted((int(x) for x in n), reverse=True))


def enumerate_types(total: int, parts: int) -> list[Occupation]:
    """All types of length ``total`` with ``parts`` entries (zero padded)."""

    def rec(remaining, max_part, slots):
        if slots == 0:
            if remaining == 0:
                yield ()
            return
        for first in range(min(remaining, max_part), -1, -1):
            for rest in rec(remaining - first, first, slots - 1):
                yield (first,) + rest

    return list(rec(total, total, parts))


def count_of_type(tau: Sequence[int], m: int) -> int:
    """Number of m-mode occupation vectors whose type is ``tau``.

    ``tau`` may be shorter than ``m``; missing entries are zeros.
    """
    tau = type_of(tau)
    nonzero = [t for t in tau if t > 0]
    if len(nonzero) > m:
        raise ValidationError(f"type {tau} does not fit in {m} modes")
    padded = nonzero + [0] * (m - len(nonzero))
    denom = 1
    for mult in Counter(padded).values():
        denom *= math.factorial(mult)
    return math.factorial(m) // denom


def multinomial(counts: Sequence[int]) -> int:
    """|n|! / prod(n_i!)."""
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def factorial_product(n: Sequence[int]) -> float:
    return float(np.prod(FACTORIALS[list(n)])) if len(n) else 1.0


def dicke_normalization(n: Sequence[int]) -> float:
    """Normalization N(n) = sqrt(prod n_i! / |n|!) of the symmetrized basis ket."""
    n = as_occupation(n)
    return math.sqrt(factorial_product(n) / FACTORIALS[sum(n)])


def check_unitary(U: np.ndarray, atol: float = UNITARY_ATOL) -> np.ndarray:
    from .errors import NonUnitaryError

    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise NonUnitaryError(f"expected a square matrix, got shape {U.shape}")
    dev = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if dev > atol:
        raise NonUnitaryError(f"max |U^dag U - I| = {dev:.3e} exceeds {atol:g}")
    return U


def build_submatrix(U: np.ndarray, inp: Sequence[int], out: Sequence[int]) -> np.ndarray:
    """The k x k matrix U_{n,p}.

    Column i of ``U`` is repeated ``inp[i]`` times and row j is repeated
    ``out[j]`` times, so that single-particle amplitudes follow
    ``U|i> = sum_j U[j, i] |j>``.
    """
    U = np.asarray(U, dtype=complex)
    inp = as_occupation(inp, U.shape[1])
    out = as_occupation(out, U.shape[0])
    if sum(inp) != sum(out):
        raise PhotonNumberMismatchError(f"|input|={sum(inp)} but |output|={sum(out)}")
    if sum(inp) > RYSER_MAX_DIM:
        raise CapExceededError(f"{sum(inp)} photons exceeds permanent cap {RYSER_MAX_DIM}")
    cols = np.repeat(np.arange(len(inp)), inp)
    rows = np.repeat(np.arange(len(out)), out)
    return U[np.ix_(rows, cols)]


@njit(cache=True)
def _ryser_gray(A):
    k = A.shape[0]
    rowsum = np.zeros(k, dtype=np.complex128)
    total = 0.0 + 0.0j
    gray = 0
    sign = -1.0
    for g in range(1, 1 << k):
        # column flipped between consecutive Gray codes
        j = 0
        while not (g >> j) & 1:
            j += 1
        bit = 1 << j
        if gray & bit:
            gray ^= bit
            for i in range(k):
                rowsum[i] -= A[i, j]
        else:
            gray ^= bit
            for i in range(k):
                rowsum[i] += A[i, j]
        prod = 1.0 + 0.0j
        for i in range(k):
            prod *= rowsum[i]
        total += sign * prod
        sign = -sign
    return total * (-1.0) ** k


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"permanent needs a square matrix, got shape {A.shape}")
    return A


def permanent_ryser(A) -> complex:
    """Permanent by Ryser's inclusion-exclusion formula over Gray-code subsets.

    O(2^k k) time. Dimensions above 20 are refused.
    """
    A = _square(A)
    k = A.shape[0]
    if k > RYSER_MAX_DIM:
        raise CapExceededError(f"dimension {k} exceeds Ryser cap {RYSER_MAX_DIM}")
    if k == 0:
        return 1.0 + 0.0j
    return complex(_ryser_gray(np.ascontiguousarray(A)))


def permanent_naive(A) -> complex:
    """Permanent as the explicit sum over all k! permutations (k <= 8)."""
    A = _square(A)
    k = A.shape[0]
    if k > NAIVE_MAX_DIM:
        raise CapExceededError(f"dimension {k} exceeds naive cap {NAIVE_MAX_DIM}")
    rows = np.arange(k)
    total = 0j
    for perm in itertools.permutations(range(k)):
        total += np.prod(A[rows, list(perm)])
    return complex(total)


permanent = permanent_ryser
