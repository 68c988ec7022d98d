"""Seeded samplers: mean-field (phase-averaged product state), exact, distinguishable.

The mean-field sampler never forms the phase average. Each sample draws its
own phases, builds one single-particle wavefunction and routes ``l``
independent particles through it. The matching exact oracle expands the
phase-averaged state combinatorially over occupation types instead.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import channels, fock, network, rng
from .channels import FixedLoss, FockDistribution, PerElementLoss, UniformBeamsplitterLoss
from .errors import CapExceededError, ValidationError

SIGMA_MAX_PHOTONS = 5
SIGMA_MAX_MODES = 6
EXACT_SAMPLER_MAX_PHOTONS = 4
EXACT_SAMPLER_MAX_MODES = 6
DISTINGUISHABLE_SAMPLER_MAX = 1000


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    n_samples: int
    chunk_size: int = rng.DEFAULT_CHUNK

    def __post_init__(self):
        rng.check_seed(self.seed)
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if self.chunk_size < 1:
            raise ValidationError("chunk_size must be >= 1")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(value)]
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if hasattr(value, "__dataclass_fields__"):
        return {"kind": type(value).__name__, **{k: _jsonable(getattr(value, k)) for k in value.__dataclass_fields__}}
    return value


def outcome_order(occ) -> tuple:
    """Sort key: photon number, then first mode most significant, descending."""
    return (sum(occ), tuple(-x for x in occ))


@dataclass(frozen=True)
class SampleBatch:
    sampler: str
    m: int
    samples: np.ndarray = field(repr=False)
    config: SamplerConfig
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != self.m:
            raise ValidationError(f"samples must be (N, {self.m}), got {arr.shape}")
        if arr.shape[0] != self.config.n_samples:
            raise ValidationError("sample count does not match the configuration")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def counts(self) -> dict[tuple, int]:
        keys, cnt = np.unique(self.samples, axis=0, return_counts=True)
        pairs = [(tuple(int(x) for x in k), int(c)) for k, c in zip(keys, cnt)]
        return dict(sorted(pairs, key=lambda kv: outcome_order(kv[0])))

    def empirical(self) -> FockDistribution:
        total = self.samples.shape[0]
        return FockDistribution(self.m, {k: c / total for k, c in self.counts().items()})

    def photon_counts(self) -> np.ndarray:
        return self.samples.sum(axis=1)

    def header(self) -> dict:
        return {
            "record": "header",
            "sampler": self.sampler,
            "m": self.m,
            "seed": self.config.seed,
            "n_samples": self.config.n_samples,
            "chunk_size": self.config.chunk_size,
            "params": _jsonable(self.params),
        }

    def to_jsonl(self) -> str:
        buf = io.StringIO()
        buf.write(json.dumps(self.header(), sort_keys=True) + "\n")
        for row in self.samples:
            buf.write("[" + ",".join(str(int(x)) for x in row) + "]\n")
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["outcome", "count", "frequency"])
        total = self.samples.shape[0]
        for k, c in self.counts().items():
            writer.writerow(["[" + ",".join(map(str, k)) + "]", c, repr(c / total)])
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    @classmethod
    def from_jsonl(cls, text: str) -> "SampleBatch":
        lines = text.splitlines()
        head = json.loads(lines[0])
        if head.get("record") != "header":
            raise ValidationError("first JSONL record must be the header")
        samples = np.array([json.loads(line) for line in lines[1:]], dtype=np.int64).reshape(-1, head["m"])
        config = SamplerConfig(head["seed"], head["n_samples"], head["chunk_size"])
        return cls(head["sampler"], head["m"], samples, config, head["params"])


# ------------------------------------------------------------- mean field


def _check_nml(n: int, m: int, l: int):
    if not 0 <= n <= m:
        raise ValidationError(f"need 0 <= n <= m, got n={n}, m={m}")
    if not 0 <= l <= n:
        raise ValidationError(f"need 0 <= l <= n, got l={l}, n={n}")


def _meanfield_probs(g: np.random.Generator, size: int, n: int, T: np.ndarray) -> np.ndarray:
    """Per-sample output probabilities of e^{-i phi_k}/sqrt(n) on the first n modes."""
    phases = g.uniform(0.0, 2.0 * np.pi, size=(size, n))
    psi = np.exp(-1j * phases) / math.sqrt(n)
    amps = psi @ T[:, :n].T
    return np.abs(amps) ** 2


def _route(g, l, probs: np.ndarray) -> np.ndarray:
    probs = probs / probs.sum(axis=1, keepdims=True)
    return g.multinomial(l, probs)


def _run_chunks(config: SamplerConfig, m: int, draw: Callable[[np.random.Generator, int], np.ndarray]):
    out = np.zeros((config.n_samples, m), dtype=np.int64)
    for index, start, stop in rng.chunks(config.n_samples, config.chunk_size):
        out[start:stop] = draw(rng.stream(config.seed, index), stop - start)
    return out


def sample_meanfield_fixed(n: int, m: int, l: int, U, config: SamplerConfig) -> SampleBatch:
    """l particles routed through U with a fresh maximally coherent random-phase state per sample."""
    _check_nml(n, m, l)
    U = fock.check_unitary(U)
    if U.shape[0] != m:
        raise ValidationError(f"U is {U.shape[0]}x{U.shape[0]}, expected {m}")

    def draw(g, size):
        if l == 0:
            return np.zeros((size, m), dtype=np.int64)
        return _route(g, l, _meanfield_probs(g, size, n, U))

    params = {"n": n, "l": l, "U": U}
    return SampleBatch("meanfield_fixed", m, _run_chunks(config, m, draw), config, params)


def sample_meanfield_binomial(n: int, m: int, eta: float, U, config: SamplerConfig) -> SampleBatch:
    """Mean-field sampling with l ~ Binomial(n, eta) drawn per sample."""
    _check_nml(n, m, 0)
    eta = channels._check_eta(eta)
    U = fock.check_unitary(U)
    if U.shape[0] != m:
        raise ValidationError(f"U is {U.shape[0]}x{U.shape[0]}, expected {m}")

    def draw(g, size):
        ls = g.binomial(n, eta, size=size)
        if n == 0:
            return np.zeros((size, m), dtype=np.int64)
        return _route(g, ls, _meanfield_probs(g, size, n, U))

    params = {"n": n, "eta": eta, "U": U}
    return SampleBatch("meanfield_binomial", m, _run_chunks(config, m, draw), config, params)


def sample_meanfield_network(n: int, net: network.LossyNetwork, config: SamplerConfig, relaxed: bool = False):
    """Mean-field sampling through a lossy network after uniform-loss extraction.

    Photons enter the first ``n`` modes. The extracted uniform loss becomes a
    binomial photon count; each surviving particle then propagates through the
    residual network's transfer matrix, and its missing norm is the chance the
    residual losses absorb it.
    """
    m = net.m
    _check_nml(n, m, 0)
    extract = network.extract_uniform_losses_relaxed if relaxed else network.extract_uniform_losses
    result = extract(net, active_inputs=range(n))
    T = result.residual.transfer_matrix()

    def draw(g, size):
        ls = g.binomial(n, result.eta_eff, size=size)
        if n == 0:
            return np.zeros((size, m), dtype=np.int64)
        probs = _meanfield_probs(g, size, n, T)
        lost = np.clip(1.0 - probs.sum(axis=1, keepdims=True), 0.0, None)
        return _route(g, ls, np.hstack([probs, lost]))[:, :m]

    params = {"n": n, "network": net.to_dict(), "s": result.s, "eta_eff": result.eta_eff}
    return SampleBatch("meanfield_network", m, _run_chunks(config, m, draw), config, params), result


# ------------------------------------------------------------ exact oracles


def sigma_star_input_state(n: int, m: int, l: int) -> FockDistribution:
    """Fock-diagonal phase-averaged product state, expanded over occupation types.

    A type tau of l particles on n modes carries weight m_tau * C(l; tau),
    where m_tau = NN(tau) n^-l for equal single-particle populations 1/n, and
    spreads uniformly over the NN(tau) occupation vectors of that type.
    """
    _check_nml(n, m, l)
    if l > SIGMA_MAX_PHOTONS or m > SIGMA_MAX_MODES:
        raise CapExceededError(f"phase-averaged oracle capped at l <= {SIGMA_MAX_PHOTONS}, m <= {SIGMA_MAX_MODES}")
    if n == 0:
        return FockDistribution.point((0,) * m)
    members: dict[tuple, list] = {}
    for occ in fock.enumerate_occupations(n, l):
        members.setdefault(fock.type_of(occ), []).append(occ)
    probs: dict[tuple, float] = {}
    for tau in fock.enumerate_types(l, n):
        group = members[tau]
        nn = fock.count_of_type(tau, n)
        assert nn == len(group)
        weight = nn * fock.multinomial(tau) / n**l
        for occ in group:
            probs[occ + (0,) * (m - n)] = weight / nn
    return FockDistribution(m, dict(sorted(probs.items(), key=lambda kv: outcome_order(kv[0]))))


def collision_free_weight(dist: FockDistribution) -> float:
    return math.fsum(p for k, p in dist.items() if max(k, default=0) <= 1)


def exact_sigma_star_distribution(n: int, m: int, l: int, U) -> FockDistribution:
    return channels.exact_bosonic_distribution(U, sigma_star_input_state(n, m, l))


def sigma_eta_input_state(n: int, m: int, eta: float) -> FockDistribution:
    """Binomial mixture of phase-averaged states over surviving photon number."""
    weights = channels.binomial_weights(n, eta)
    return FockDistribution.mixture(
        m, ((w, sigma_star_input_state(n, m, l)) for l, w in enumerate(weights) if w > 0.0)
    )


def exact_sigma_eta_distribution(n: int, m: int, eta: float, U) -> FockDistribution:
    return channels.exact_bosonic_distribution(U, sigma_eta_input_state(n, m, eta))


def exact_lossy_distribution(n: int, m: int, loss, U=None) -> FockDistribution:
    """Exact output of the lossy device for the standard n-photon input."""
    if n > EXACT_SAMPLER_MAX_PHOTONS or m > EXACT_SAMPLER_MAX_MODES:
        raise CapExceededError(
            f"exact sampler capped at n <= {EXACT_SAMPLER_MAX_PHOTONS}, m <= {EXACT_SAMPLER_MAX_MODES}"
        )
    if isinstance(loss, PerElementLoss):
        from .decompositions import generate_clements, generate_reck

        gen = generate_clements if loss.scheme == "clements" else generate_reck
        net = gen(U, loss.eta)
        return network.network_output_distribution(net, fock.fock_input(n, m))
    return channels.exact_bosonic_distribution(U, channels.lossy_input_state(n, m, loss))


def residual_dilation(T: np.ndarray) -> np.ndarray:
    """Unitary on 2m modes whose top-left block is the contraction ``T``."""
    T = np.asarray(T, dtype=complex)
    m = T.shape[0]
    eye = np.eye(m)

    def psd_sqrt(A):
        w, V = np.linalg.eigh((A + A.conj().T) / 2)
        return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T

    W = np.block([[T, psd_sqrt(eye - T @ T.conj().T)], [psd_sqrt(eye - T.conj().T @ T), -T.conj().T]])
    return fock.check_unitary(W, atol=1e-9)


def exact_network_sigma_eta_distribution(
    n: int, net: network.LossyNetwork, method: str = "branches", relaxed: bool = False
) -> FockDistribution:
    """Exact target of :func:`sample_meanfield_network`.

    ``method="branches"`` evolves the input through the residual network
    element by element; ``method="dilation"`` embeds the residual transfer
    matrix in a unitary on twice the modes and discards the ancilla modes.
    """
    m = net.m
    extract = network.extract_uniform_losses_relaxed if relaxed else network.extract_uniform_losses
    result = extract(net, active_inputs=range(n))
    inp = sigma_eta_input_state(n, m, result.eta_eff)
    if method == "branches":
        return network.network_output_distribution(result.residual, inp)
    if method == "dilation":
        W = residual_dilation(result.residual.transfer_matrix())
        wide = FockDistribution(2 * m, {k + (0,) * m: p for k, p in inp.items()})
        full = channels.exact_bosonic_distribution(W, wide)
        acc: dict[tuple, float] = {}
        for k, p in full.items():
            acc[k[:m]] = acc.get(k[:m], 0.0) + p
        return FockDistribution(m, dict(sorted(acc.items(), key=lambda kv: outcome_order(kv[0]))), tol=1e-8)
    raise ValidationError(f"unknown method {method!r}")


# --------------------------------------------------------- exact sampling


def sample_distribution(dist: FockDistribution, config: SamplerConfig, sampler: str = "exact", params=None):
    """Inverse-CDF sampling over the distribution's key order."""
    keys = list(dist.probs)
    cdf = np.cumsum([dist.probs[k] for k in keys])
    table = np.array(keys, dtype=np.int64).reshape(len(keys), dist.m)

    def draw(g, size):
        idx = np.searchsorted(cdf, g.random(size) * cdf[-1], side="right")
        return table[np.minimum(idx, len(keys) - 1)]

    return SampleBatch(sampler, dist.m, _run_chunks(config, dist.m, draw), config, params or {})


def sample_exact_lossy(n: int, m: int, loss, U, config: SamplerConfig) -> SampleBatch:
    U = fock.check_unitary(U)
    dist = exact_lossy_distribution(n, m, loss, U)
    return sample_distribution(dist, config, "exact_lossy", {"n": n, "loss": loss, "U": U})


def sample_exact_network(net: network.LossyNetwork, inp, config: SamplerConfig) -> SampleBatch:
    inp = fock.as_occupation(inp, net.m)
    dist = network.network_output_distribution(net, inp)
    return sample_distribution(dist, config, "exact_network", {"input": inp, "network": net.to_dict()})


def sample_distinguishable(inp, U, config: SamplerConfig) -> SampleBatch:
    """Each photon routed independently with probabilities |U[j, i]|^2."""
    U = np.asarray(U, dtype=complex)
    m = U.shape[0]
    inp = fock.as_occupation(inp, m)
    if sum(inp) > DISTINGUISHABLE_SAMPLER_MAX:
        raise CapExceededError(f"distinguishable sampler capped at {DISTINGUISHABLE_SAMPLER_MAX} photons")
    P = np.abs(U) ** 2
    P = P / P.sum(axis=0, keepdims=True)

    def draw(g, size):
        out = np.zeros((size, m), dtype=np.int64)
        for i, count in enumerate(inp):
            if count:
                out += g.multinomial(count, P[:, i], size=size)
        return out

    return SampleBatch("distinguishable", m, _run_chunks(config, m, draw), config, {"input": inp, "U": U})


# ------------------------------------------- fixed-loss / binomial-loss bridge


@dataclass(frozen=True)
class OracleResult:
    sample: Optional[object]
    calls: int
    success: bool


def simulate_fl_from_bs(bs_oracle: Callable[[], Sequence[int]], eta: float, n: int, budget: int, target: Optional[int] = None):
    """Fixed-loss sample by rejection on a binomial-loss oracle.

    Calls ``bs_oracle`` until its photon count equals ``target`` (default
    ``eta * n``, which must then be an integer) or the budget runs out.
    """
    channels._check_eta(eta)
    if target is None:
        if abs(eta * n - round(eta * n)) > 1e-9:
            raise ValidationError(f"eta*n = {eta * n} is not an integer; pass target explicitly")
        target = int(round(eta * n))
    for calls in range(1, budget + 1):
        sample = bs_oracle()
        if int(np.sum(sample)) == target:
            return OracleResult(sample, calls, True)
    return OracleResult(None, budget, False)


def simulate_bs_from_fl(fl_oracle: Callable[[int], object], eta: float, n: int, budget: int, g: np.random.Generator, delta: float = 0.5):
    """Binomial-loss sample from a fixed-loss oracle.

    Draws l ~ Binomial(n, eta) and queries ``fl_oracle(l)`` when l lies in the
    window |l - eta n| <= delta eta n; draws outside the window are retried
    within ``budget`` and count as truncation failures.
    """
    channels._check_eta(eta)
    for calls in range(1, budget + 1):
        l = int(g.binomial(n, eta))
        if abs(l - eta * n) <= delta * eta * n:
            return OracleResult(fl_oracle(l), calls, True)
    return OracleResult(None, budget, False)
