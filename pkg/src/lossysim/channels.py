"""Loss channels and exact state evolution on the truncated Fock space.

Two exact routes are provided and cross-checked in the tests:

* permanent formulas for Fock-diagonal inputs (:func:`exact_bosonic_distribution`,
  :func:`exact_distinguishable_distribution`);
* a weighted pure-branch simulator (:class:`MixedFockState`) that applies
  two-mode unitaries and single-mode loss one element at a time.

Each branch of a :class:`MixedFockState` lives in a single photon-number
sector, since both loss and passive unitaries map sectors to sectors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from . import fock
from .errors import CapExceededError, NonUnitaryError, ValidationError
from .fock import Occupation

PROB_TOL = 1e-9
PRUNE_WEIGHT = 1e-14
BRANCH_MAX_PHOTONS = 4
BRANCH_MAX_DIM = 10**5
EXACT_MAX_PHOTONS = 6
EXACT_MAX_MODES = 8
DISTINGUISHABLE_MAX_PHOTONS = 10
DISTINGUISHABLE_MAX_MODES = 20


@dataclass(frozen=True)
class FockDistribution:
    """Probability map over occupation vectors of a fixed mode count.

    Keys may carry different photon totals. Iteration order is the insertion
    order, which every constructor in this package keeps deterministic.
    """

    m: int
    probs: Mapping[Occupation, float]
    tol: float = field(default=PROB_TOL, repr=False, compare=False)

    def __post_init__(self):
        clean = {}
        for key, p in self.probs.items():
            key = fock.as_occupation(key, self.m)
            p = float(p)
            if p < -1e-12:
                raise ValidationError(f"negative probability {p} at {key}")
            clean[key] = clean.get(key, 0.0) + max(p, 0.0)
        total = math.fsum(clean.values())
        if abs(total - 1.0) > self.tol:
            raise ValidationError(f"probabilities sum to {total!r}, not 1 (tol {self.tol:g})")
        object.__setattr__(self, "probs", clean)

    @classmethod
    def point(cls, occ: Sequence[int]) -> "FockDistribution":
        occ = fock.as_occupation(occ)
        return cls(len(occ), {occ: 1.0})

    @classmethod
    def mixture(cls, m: int, parts: Iterable[tuple[float, "FockDistribution"]], tol=PROB_TOL):
        acc: dict[Occupation, float] = {}
        for w, dist in parts:
            if w == 0.0:
                continue
            if dist.m != m:
                raise ValidationError(f"mode mismatch {dist.m} != {m}")
            for key, p in dist.probs.items():
                acc[key] = acc.get(key, 0.0) + w * p
        return cls(m, acc, tol=tol)

    def __getitem__(self, occ) -> float:
        return self.probs.get(tuple(occ), 0.0)

    def __len__(self):
        return len(self.probs)

    def items(self):
        return self.probs.items()

    def support(self) -> list[Occupation]:
        return [k for k, p in self.probs.items() if p > 0.0]

    def total_probability(self) -> float:
        return math.fsum(self.probs.values())

    def photon_number_marginal(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for key, p in self.probs.items():
            out[sum(key)] = out.get(sum(key), 0.0) + p
        return dict(sorted(out.items()))

    def sector(self, photons: int) -> "FockDistribution":
        """Restriction to a photon-number sector, renormalized."""
        part = {k: p for k, p in self.probs.items() if sum(k) == photons}
        mass = math.fsum(part.values())
        if mass <= 0.0:
            raise ValidationError(f"no probability in the {photons}-photon sector")
        return FockDistribution(self.m, {k: p / mass for k, p in part.items()})

    def sorted_items(self) -> list[tuple[Occupation, float]]:
        """Items ordered by photon number, then by the enumeration order."""
        return sorted(self.probs.items(), key=lambda kv: (sum(kv[0]), tuple(-x for x in kv[0])))

    def as_vector(self, keys: Sequence[Occupation]) -> np.ndarray:
        return np.array([self[k] for k in keys])


# ---------------------------------------------------------------- loss models


@dataclass(frozen=True)
class FixedLoss:
    """Exactly ``l_remaining`` photons survive."""

    l_remaining: int

    def __post_init__(self):
        if self.l_remaining < 0:
            raise ValidationError("l_remaining must be >= 0")


@dataclass(frozen=True)
class UniformBeamsplitterLoss:
    """Every photon independently survives with probability ``eta``."""

    eta: float

    def __post_init__(self):
        _check_eta(self.eta)


@dataclass(frozen=True)
class PerElementLoss:
    """Each loss element of a network has transmissivity ``eta``."""

    eta: float
    scheme: str = "clements"

    def __post_init__(self):
        _check_eta(self.eta)
        if self.scheme not in ("clements", "reck"):
            raise ValidationError(f"unknown mesh scheme {self.scheme!r}")


LossModel = Union[FixedLoss, UniformBeamsplitterLoss, PerElementLoss]


def _check_eta(eta: float) -> float:
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"transmissivity must lie in [0, 1], got {eta}")
    return float(eta)


def binomial_weights(n: int, eta: float) -> list[float]:
    """P(l survivors) for l = 0..n under independent survival ``eta``."""
    _check_eta(eta)
    return [math.comb(n, l) * eta**l * (1.0 - eta) ** (n - l) for l in range(n + 1)]


def fixed_loss_state(n: int, m: int, l: int) -> FockDistribution:
    """Uniform mixture over collision-free l-photon patterns on the first n modes."""
    if not 0 <= n <= m:
        raise ValidationError(f"need 0 <= n <= m, got n={n}, m={m}")
    if not 0 <= l <= n:
        raise ValidationError(f"need 0 <= l <= n, got l={l}, n={n}")
    count = math.comb(n, l)
    probs = {}
    for occupied in itertools.combinations(range(n), l):
        occ = [0] * m
        for i in occupied:
            occ[i] = 1
        probs[tuple(occ)] = 1.0 / count
    return FockDistribution(m, probs)


def binomial_loss_state(n: int, m: int, eta: float) -> FockDistribution:
    """The state of n photons after uniform loss ``eta`` (Fock diagonal)."""
    weights = binomial_weights(n, eta)
    return FockDistribution.mixture(
        m, ((w, fixed_loss_state(n, m, l)) for l, w in enumerate(weights) if w > 0.0)
    )


def lossy_input_state(n: int, m: int, loss: LossModel) -> FockDistribution:
    if isinstance(loss, FixedLoss):
        return fixed_loss_state(n, m, loss.l_remaining)
    if isinstance(loss, UniformBeamsplitterLoss):
        return binomial_loss_state(n, m, loss.eta)
    raise ValidationError(f"{type(loss).__name__} has no input-state form; use a network")


# ----------------------------------------------------------- branch simulator


@lru_cache(maxsize=512)
def _basis(m: int, photons: int):
    states = tuple(fock.enumerate_occupations(m, photons))
    if len(states) > BRANCH_MAX_DIM:
        raise CapExceededError(f"sector dimension {len(states)} exceeds {BRANCH_MAX_DIM}")
    index = {s: i for i, s in enumerate(states)}
    return states, index


@dataclass(frozen=True)
class Branch:
    weight: float
    photons: int
    vector: np.ndarray = field(repr=False)

    def amplitudes(self, m: int) -> dict[Occupation, complex]:
        states, _ = _basis(m, self.photons)
        return {s: complex(a) for s, a in zip(states, self.vector) if a != 0}


@dataclass(frozen=True)
class MixedFockState:
    """Density operator as a convex mixture of normalized pure branches."""

    m: int
    branches: tuple[Branch, ...]

    def __post_init__(self):
        weights = [b.weight for b in self.branches]
        if any(w < 0 for w in weights):
            raise ValidationError("negative branch weight")
        if abs(math.fsum(weights) - 1.0) > PROB_TOL:
            raise ValidationError(f"branch weights sum to {math.fsum(weights)!r}")
        for b in self.branches:
            if abs(np.linalg.norm(b.vector) - 1.0) > PROB_TOL:
                raise ValidationError("branch vector is not normalized")

    @classmethod
    def from_fock(cls, occ: Sequence[int]) -> "MixedFockState":
        occ = fock.as_occupation(occ)
        _check_branch_cap(sum(occ))
        states, index = _basis(len(occ), sum(occ))
        vec = np.zeros(len(states), dtype=complex)
        vec[index[occ]] = 1.0
        return cls(len(occ), (Branch(1.0, sum(occ), vec),))

    @classmethod
    def from_distribution(cls, dist: FockDistribution) -> "MixedFockState":
        """Fock-diagonal mixture with one branch per support point."""
        branches = []
        for occ, p in dist.items():
            if p <= 0.0:
                continue
            _check_branch_cap(sum(occ))
            states, index = _basis(dist.m, sum(occ))
            vec = np.zeros(len(states), dtype=complex)
            vec[index[occ]] = 1.0
            branches.append(Branch(p, sum(occ), vec))
        return cls(dist.m, tuple(_renormalized(branches)))

    @classmethod
    def from_amplitudes(cls, m: int, parts: Iterable[tuple[float, Mapping[Occupation, complex]]]):
        branches = []
        for w, amps in parts:
            totals = {sum(k) for k in amps}
            if len(totals) != 1:
                raise ValidationError("each branch must live in a single photon-number sector")
            photons = totals.pop()
            _check_branch_cap(photons)
            states, index = _basis(m, photons)
            vec = np.zeros(len(states), dtype=complex)
            for k, a in amps.items():
                vec[index[fock.as_occupation(k, m)]] = a
            vec /= np.linalg.norm(vec)
            branches.append(Branch(float(w), photons, vec))
        return cls(m, tuple(branches))

    def density_blocks(self) -> dict[int, np.ndarray]:
        """Photon-number blocks of the density matrix."""
        out: dict[int, np.ndarray] = {}
        for b in self.branches:
            block = b.weight * np.outer(b.vector, b.vector.conj())
            out[b.photons] = out.get(b.photons, 0) + block
        return dict(sorted(out.items()))


def _check_branch_cap(photons: int):
    if photons > BRANCH_MAX_PHOTONS:
        raise CapExceededError(f"{photons} photons exceeds branch-simulator cap {BRANCH_MAX_PHOTONS}")


def _renormalized(branches: list[Branch]) -> list[Branch]:
    kept = [b for b in branches if b.weight >= PRUNE_WEIGHT]
    total = math.fsum(b.weight for b in kept)
    return [Branch(b.weight / total, b.photons, b.vector) for b in kept]


def _stack(state: MixedFockState) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    groups: dict[int, list[Branch]] = {}
    for b in state.branches:
        groups.setdefault(b.photons, []).append(b)
    return {
        N: (np.array([b.weight for b in bs]), np.array([b.vector for b in bs]))
        for N, bs in sorted(groups.items())
    }


def _compress(weights: np.ndarray, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # more branches than the sector dimension: re-express the block through
    # its eigendecomposition, which is the same density operator
    rho = (vectors.T * weights) @ vectors.conj()
    evals, evecs = np.linalg.eigh(rho)
    keep = evals > PRUNE_WEIGHT
    return evals[keep], evecs[:, keep].T.copy()


def _unstack(m: int, groups: dict[int, tuple[np.ndarray, np.ndarray]]) -> MixedFockState:
    branches = []
    for N in sorted(groups):
        weights, vectors = groups[N]
        if len(weights) > vectors.shape[1] > 0:
            weights, vectors = _compress(weights, vectors)
        for w, v in zip(weights, vectors):
            branches.append(Branch(float(w), N, v))
    return MixedFockState(m, tuple(_renormalized(branches)))


@lru_cache(maxsize=4096)
def _loss_maps(m: int, photons: int, mode: int, k: int):
    src_states, _ = _basis(m, photons)
    _, dst_index = _basis(m, photons - k)
    src, dst, occ = [], [], []
    for i, s in enumerate(src_states):
        if s[mode] >= k:
            t = list(s)
            t[mode] -= k
            src.append(i)
            dst.append(dst_index[tuple(t)])
            occ.append(s[mode])
    return np.array(src, dtype=int), np.array(dst, dtype=int), np.array(occ, dtype=int)


def apply_single_mode_loss(state: MixedFockState, mode: int, eta: float) -> MixedFockState:
    """Pure loss of transmissivity ``eta`` on one mode, by Kraus branching.

    The k-photon-loss Kraus operator multiplies |n> by
    sqrt(C(n_mode, k) (1-eta)^k eta^(n_mode-k)) and removes k photons.
    """
    eta = _check_eta(eta)
    if not 0 <= mode < state.m:
        raise ValidationError(f"mode {mode} out of range for {state.m} modes")
    if eta == 1.0:
        return state
    out: dict[int, tuple[list, list]] = {}
    for N, (weights, vectors) in _stack(state).items():
        for k in range(N + 1):
            src, dst, occ = _loss_maps(state.m, N, mode, k)
            if len(src) == 0:
                continue
            factor = np.sqrt(
                np.array([math.comb(int(o), k) for o in occ]) * (1.0 - eta) ** k * eta ** (occ - k)
            )
            dim = len(_basis(state.m, N - k)[0])
            new = np.zeros((len(weights), dim), dtype=complex)
            new[:, dst] = vectors[:, src] * factor
            norms2 = np.einsum("ij,ij->i", new, new.conj()).real
            keep = weights * norms2 >= PRUNE_WEIGHT
            if not np.any(keep):
                continue
            ws, vs = out.setdefault(N - k, ([], []))
            ws.append(weights[keep] * norms2[keep])
            vs.append(new[keep] / np.sqrt(norms2[keep])[:, None])
    groups = {N: (np.concatenate(ws), np.concatenate(vs)) for N, (ws, vs) in out.items()}
    return _unstack(state.m, groups)


def apply_uniform_loss(state: MixedFockState, eta: float) -> MixedFockState:
    for mode in range(state.m):
        state = apply_single_mode_loss(state, mode, eta)
    return state


def two_mode_amplitudes(V: np.ndarray, total: int) -> np.ndarray:
    """T[a_out, a_in] = <a_out, total-a_out| V |a_in, total-a_in>."""
    T = np.zeros((total + 1, total + 1), dtype=complex)
    for a in range(total + 1):
        for b in range(total + 1):
            inp, out = (a, total - a), (b, total - b)
            sub = fock.build_submatrix(V, inp, out)
            norm = math.sqrt(fock.factorial_product(inp) * fock.factorial_product(out))
            T[b, a] = fock.permanent(sub) / norm
    return T


@lru_cache(maxsize=8192)
def _two_mode_matrix_cached(m: int, photons: int, i: int, j: int, vbytes: bytes) -> np.ndarray:
    V = np.frombuffer(vbytes, dtype=complex).reshape(2, 2)
    states, index = _basis(m, photons)
    tables = [two_mode_amplitudes(V, t) for t in range(photons + 1)]
    M = np.zeros((len(states), len(states)), dtype=complex)
    for col, s in enumerate(states):
        t = s[i] + s[j]
        T = tables[t]
        for b in range(t + 1):
            out = list(s)
            out[i], out[j] = b, t - b
            M[index[tuple(out)], col] = T[b, s[i]]
    M.setflags(write=False)
    return M


def two_mode_unitary_matrix(m: int, photons: int, modes: tuple[int, int], V) -> np.ndarray:
    """The operator induced by the 2x2 unitary ``V`` on one photon-number sector."""
    V = np.ascontiguousarray(V, dtype=complex)
    return _two_mode_matrix_cached(m, photons, int(modes[0]), int(modes[1]), V.tobytes())


def apply_two_mode_unitary(state: MixedFockState, modes: tuple[int, int], V) -> MixedFockState:
    """Apply a passive two-mode transformation; photon numbers are preserved."""
    V = np.asarray(V, dtype=complex)
    if V.shape != (2, 2):
        raise NonUnitaryError(f"expected a 2x2 matrix, got {V.shape}")
    fock.check_unitary(V)
    i, j = modes
    if i == j or not (0 <= i < state.m and 0 <= j < state.m):
        raise ValidationError(f"invalid mode pair {modes} for {state.m} modes")
    groups = {}
    for N, (weights, vectors) in _stack(state).items():
        M = two_mode_unitary_matrix(state.m, N, (i, j), V)
        groups[N] = (weights, vectors @ M.T)
    return _unstack(state.m, groups)


def measure_distribution(state: MixedFockState) -> FockDistribution:
    """Photon-number statistics D(n) = sum_b w_b |<n|psi_b>|^2."""
    probs: dict[Occupation, float] = {}
    for N, (weights, vectors) in _stack(state).items():
        states, _ = _basis(state.m, N)
        p = weights @ (np.abs(vectors) ** 2)
        for s, v in zip(states, p):
            probs[s] = probs.get(s, 0.0) + float(v)
    return FockDistribution(state.m, probs)


# ---------------------------------------------------------- permanent routes


def _as_input_distribution(inp, m: int) -> FockDistribution:
    if isinstance(inp, FockDistribution):
        if inp.m != m:
            raise ValidationError(f"input has {inp.m} modes, U has {m}")
        return inp
    return FockDistribution.point(fock.as_occupation(inp, m))


def transition_probabilities(U: np.ndarray, inp: Occupation) -> dict[Occupation, float]:
    """Pr(n -> p) = |Per(U_{n,p})|^2 / (prod n_i! prod p_j!) for every output p."""
    m = U.shape[0]
    norm_in = fock.factorial_product(inp)
    out = {}
    for p in fock.enumerate_occupations(m, sum(inp)):
        amp = fock.permanent(fock.build_submatrix(U, inp, p))
        out[p] = (amp.real**2 + amp.imag**2) / (norm_in * fock.factorial_product(p))
    return out


def exact_bosonic_distribution(U, inp) -> FockDistribution:
    """Output statistics of indistinguishable photons, input mixed over Fock states."""
    U = fock.check_unitary(U)
    m = U.shape[0]
    if m > EXACT_MAX_MODES:
        raise CapExceededError(f"m={m} exceeds exact-distribution cap {EXACT_MAX_MODES}")
    dist = _as_input_distribution(inp, m)
    if any(sum(k) > EXACT_MAX_PHOTONS for k in dist.support()):
        raise CapExceededError(f"input photon number exceeds cap {EXACT_MAX_PHOTONS}")
    acc: dict[Occupation, float] = {}
    for occ, w in dist.items():
        if w <= 0.0:
            continue
        for p, prob in transition_probabilities(U, occ).items():
            acc[p] = acc.get(p, 0.0) + w * prob
    return FockDistribution(m, acc, tol=1e-8)


def exact_distinguishable_distribution(U, inp, method: str = "permanent") -> FockDistribution:
    """Output statistics of perfectly distinguishable photons.

    ``method="permanent"`` uses Per(|U_{n,p}|^2) / prod p_j!;
    ``method="routing"`` convolves independent single-photon routings.
    """
    U = np.asarray(U, dtype=complex)
    m = U.shape[0]
    inp = fock.as_occupation(inp, m)
    k = sum(inp)
    if k > DISTINGUISHABLE_MAX_PHOTONS or m > DISTINGUISHABLE_MAX_MODES:
        raise CapExceededError(
            f"distinguishable cap is {DISTINGUISHABLE_MAX_PHOTONS} photons, "
            f"{DISTINGUISHABLE_MAX_MODES} modes"
        )
    P = np.abs(U) ** 2
    if method == "permanent":
        probs = {}
        for p in fock.enumerate_occupations(m, k):
            per = fock.permanent(fock.build_submatrix(P, inp, p)).real
            probs[p] = per / fock.factorial_product(p)
        return FockDistribution(m, probs)
    if method == "routing":
        if fock.num_occupations(m, k) > fock.ENUMERATION_CAP:
            raise CapExceededError("routing support exceeds enumeration cap")
        current = {(0,) * m: 1.0}
        for i, count in enumerate(inp):
            column = P[:, i]
            for _ in range(count):
                nxt: dict[Occupation, float] = {}
                for occ, w in current.items():
                    for j in range(m):
                        if column[j] == 0.0:
                            continue
                        t = list(occ)
                        t[j] += 1
                        t = tuple(t)
                        nxt[t] = nxt.get(t, 0.0) + w * column[j]
                current = nxt
        order = {p: i for i, p in enumerate(fock.enumerate_occupations(m, k))}
        return FockDistribution(m, dict(sorted(current.items(), key=lambda kv: order[kv[0]])))
    raise ValidationError(f"unknown method {method!r}")
