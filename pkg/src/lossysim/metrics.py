"""Distances, closed forms and bounds, each with an independent numerical oracle."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import fock
from .channels import FockDistribution
from .errors import CapExceededError, ValidationError

ORACLE_MAX_N = 8
ORACLE_MAX_L = 4
TWIRL_MAX_N = 6
TWIRL_MAX_L = 4
QUADRATURE_MAX_N = 3
LGAMMA_SWITCH = 100_000


@dataclass(frozen=True)
class DistanceReport:
    value: float
    formula_id: str
    inputs: dict
    oracle_value: Optional[float] = None

    def __post_init__(self):
        if not -1e-12 <= self.value <= 1.0 + 1e-12:
            raise ValidationError(f"{self.formula_id} distance {self.value} outside [0, 1]")


def _check_nl(n: int, l: int):
    if n < 0 or not 0 <= l <= n:
        raise ValidationError(f"need 0 <= l <= n, got n={n}, l={l}")


def _check_unit(name: str, x: float):
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {x}")


# ------------------------------------------------------------ separable distance


def d_sep_closed_form(n: int, l: int) -> float:
    """1 - n! / (n^l (n-l)!), the distance of the lossy state to the separable set.

    Evaluated as -expm1(sum log(1 - k/n)) so that tiny values keep full
    relative precision; lgamma takes over for very long products.
    """
    _check_nl(n, l)
    if l <= 1:
        return 0.0
    if l <= LGAMMA_SWITCH:
        log_ratio = math.fsum(math.log1p(-k / n) for k in range(1, l))
    else:
        log_ratio = math.lgamma(n + 1) - math.lgamma(n - l + 1) - l * math.log(n)
    return -math.expm1(log_ratio)


def d_sep_asymptotic(n: int, l: int) -> float:
    """Leading-order approximation l^2 / (2n)."""
    _check_nl(n, l)
    return l * l / (2.0 * n) if n else 0.0


def asymptotic_relative_error(n: int, l: int) -> float:
    exact = d_sep_closed_form(n, l)
    return abs(exact - d_sep_asymptotic(n, l)) / exact


def elementary_symmetric(p: np.ndarray, l: int) -> np.ndarray:
    """e_0..e_l of each row of ``p`` (shape (..., n)); returns shape (..., l+1)."""
    p = np.asarray(p, dtype=float)
    e = np.zeros(p.shape[:-1] + (l + 1,))
    e[..., 0] = 1.0
    for k in range(p.shape[-1]):
        x = p[..., k : k + 1]
        e[..., 1:] = e[..., 1:] + x * e[..., :-1]
    return e


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    v = np.atleast_2d(v)
    n = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def _q_and_grad(P: np.ndarray, l: int):
    e = elementary_symmetric(P, l)
    q = math.factorial(l) * e[:, l]
    # d e_l / d p_i = e_{l-1}(p without p_i) = sum_k (-p_i)^k e_{l-1-k}(p)
    grad = np.zeros_like(P)
    for k in range(l):
        grad += (-P) ** k * e[:, l - 1 - k : l - k]
    return q, math.factorial(l) * grad


def maximize_collision_free_weight(n: int, l: int, starts: int = 50, iters: int = 4000, seed: int = 0,
                                   include_uniform: bool = True):
    """Maximize l! e_l(p) over the simplex by projected gradient ascent.

    Returns ``(best_value, best_point, per_start_values)``.
    """
    g = np.random.Generator(np.random.Philox(key=seed))
    P = g.dirichlet(np.ones(n), size=starts)
    if include_uniform:
        P = np.vstack([P, np.full(n, 1.0 / n)])
    step = 0.5 / max(l, 1)
    for _ in range(iters):
        _, grad = _q_and_grad(P, l)
        new = project_simplex(P + step * grad)
        done = np.max(np.abs(new - P)) < 1e-15
        P = new
        if done:
            break
    q, _ = _q_and_grad(P, l)
    best = int(np.argmax(q))
    return float(q[best]), P[best], q


def d_sep_oracle(n: int, l: int, starts: int = 50, seed: int = 0) -> float:
    """1 - max q over product seeds, found numerically on the simplex."""
    _check_nl(n, l)
    if n > ORACLE_MAX_N or l > ORACLE_MAX_L:
        raise CapExceededError(f"oracle capped at n <= {ORACLE_MAX_N}, l <= {ORACLE_MAX_L}")
    if l == 0:
        return 0.0
    qmax, _, _ = maximize_collision_free_weight(n, l, starts=starts, seed=seed)
    return max(0.0, 1.0 - qmax)


def d_sep_report(n: int, l: int, with_oracle: bool = False) -> DistanceReport:
    oracle = d_sep_oracle(n, l) if with_oracle else None
    return DistanceReport(d_sep_closed_form(n, l), "d_sep", {"n": n, "l": l}, oracle)


# -------------------------------------------------------------- uniform loss


def binomial_pmf(n: int, eta: float) -> np.ndarray:
    _check_unit("eta", eta)
    if eta == 0.0 or eta == 1.0:
        out = np.zeros(n + 1)
        out[0 if eta == 0.0 else n] = 1.0
        return out
    ls = np.arange(n + 1)
    logc = np.array([math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) for k in ls])
    return np.exp(logc + ls * math.log(eta) + (n - ls) * math.log1p(-eta))


def beta_eta(n: int, eta: float) -> float:
    """Binomially averaged separable distance sum_l P(l) d_sep(n, l)."""
    pmf = binomial_pmf(n, eta)
    return math.fsum(float(pmf[l]) * d_sep_closed_form(n, l) for l in range(n + 1))


def lower_bound_threshold(n: int, eta: float, delta: float) -> int:
    """Smallest integer strictly above (1 - delta) eta n, clamped to [0, n]."""
    x = (1 - _exact(delta)) * _exact(eta) * n
    return min(max(math.floor(x) + 1, 0), n)


def beta_eta_bounds(n: int, eta: float, delta: float) -> tuple[float, float]:
    """(lower, upper) with lower = d_sep(l*) (1 - exp(-delta^2 n eta / 2))."""
    _check_unit("eta", eta)
    _check_unit("delta", delta)
    upper = eta * eta * n / 2.0 + eta * (1.0 - eta) / 2.0
    lstar = lower_bound_threshold(n, eta, delta)
    lower = d_sep_closed_form(n, lstar) * (-math.expm1(-delta * delta * n * eta / 2.0))
    return lower, upper


# ---------------------------------------------------------------- distances


def total_variation(P: FockDistribution, Q: FockDistribution) -> float:
    """Half the l1 distance over the union of supports."""
    if P.m != Q.m:
        raise ValidationError(f"mode mismatch: {P.m} vs {Q.m}")
    keys = sorted(set(P.probs) | set(Q.probs))
    return 0.5 * math.fsum(abs(P[k] - Q[k]) for k in keys)


def trace_distance_diagonal(P, Q) -> float:
    """Trace distance of two states diagonal in the Fock basis."""
    if not isinstance(P, FockDistribution):
        P = _diag(P)
    if not isinstance(Q, FockDistribution):
        Q = _diag(Q)
    if P.m != Q.m:
        raise ValidationError(f"basis mismatch: {P.m} vs {Q.m} modes")
    return total_variation(P, Q)


def _diag(weights: Mapping) -> FockDistribution:
    keys = list(weights)
    if not keys:
        raise ValidationError("empty weight map")
    return FockDistribution(len(keys[0]), weights)


# ------------------------------------------------------------------ Chernoff


def chernoff_bounds(n: int, eta: float, delta: float) -> tuple[float, float]:
    """(exp(-delta^2 eta n / 2), exp(-delta eta n / 3)) for the low and high tails."""
    _check_unit("eta", eta)
    _check_unit("delta", delta)
    return math.exp(-delta * delta * eta * n / 2.0), math.exp(-delta * eta * n / 3.0)


def _exact(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**9)


def exact_binomial_tails(n: int, eta: float, delta: float) -> tuple[Fraction, Fraction]:
    """P(X <= (1-delta) eta n) and P(X >= (1+delta) eta n), in rational arithmetic."""
    e, d = _exact(eta), _exact(delta)
    lo, hi = (1 - d) * e * n, (1 + d) * e * n
    pmf = [math.comb(n, k) * e**k * (1 - e) ** (n - k) for k in range(n + 1)]
    return sum((p for k, p in enumerate(pmf) if k <= lo), Fraction(0)), sum(
        (p for k, p in enumerate(pmf) if k >= hi), Fraction(0)
    )


# -------------------------------------------------------------- de Finetti


def definetti_bound(n: int, l: int, m: int) -> float:
    if n < 1 or l < 0 or m < 1:
        raise ValidationError("need n >= 1, l >= 0, m >= 1")
    return 2.0 * l * m / n


def definetti_comparison(n: int, l: int, m: int) -> dict:
    bound = definetti_bound(n, l, m)
    dsep = d_sep_closed_form(n, l)
    return {
        "n": n, "l": l, "m": m,
        "d_sep": dsep,
        "definetti": bound,
        "vacuous": bound >= 1.0,
        "consistent": dsep <= min(1.0, bound) + 1e-15,
    }


# ------------------------------------------------------------------- twirl


def _check_twirl(alpha: np.ndarray, l: int):
    if alpha.ndim != 1 or len(alpha) > TWIRL_MAX_N or l > TWIRL_MAX_L or l < 0:
        raise CapExceededError(f"twirl oracle capped at n <= {TWIRL_MAX_N}, l <= {TWIRL_MAX_L}")
    if abs(np.vdot(alpha, alpha).real - 1.0) > 1e-9:
        raise ValidationError("alpha must be a unit vector")


def _permutation_average(weights: dict, n: int) -> dict:
    out = {k: 0.0 for k in weights}
    perms = list(itertools.permutations(range(n)))
    for k, w in weights.items():
        for p in perms:
            out[tuple(k[i] for i in p)] += w / len(perms)
    return out


def twirl_oracle(alpha, l: int, permute: bool = False) -> dict:
    """Fock-diagonal weights of the phase twirl of |alpha>^{(x) l}.

    The weight of |k> is C(l; k) prod |alpha_i|^{2 k_i}. With ``permute=True``
    the result is further averaged over all mode permutations.
    """
    alpha = np.asarray(alpha, dtype=complex)
    _check_twirl(alpha, l)
    pops = np.abs(alpha) ** 2
    weights = {
        k: fock.multinomial(k) * float(np.prod(pops ** np.array(k)))
        for k in fock.enumerate_occupations(len(alpha), l)
    }
    return _permutation_average(weights, len(alpha)) if permute else weights


def twirl_quadrature(alpha, l: int, points: int = 64, permute: bool = False) -> tuple[dict, float]:
    """Phase twirl by an explicit product trapezoid rule on the density matrix.

    Returns ``(diagonal weights, largest surviving off-diagonal magnitude)``.
    """
    alpha = np.asarray(alpha, dtype=complex)
    _check_twirl(alpha, l)
    n = len(alpha)
    if n > QUADRATURE_MAX_N:
        raise CapExceededError(f"quadrature capped at n <= {QUADRATURE_MAX_N}")
    basis = fock.enumerate_occupations(n, l)
    K = np.array(basis)
    coef = np.sqrt([float(fock.multinomial(k)) for k in basis])
    grid = 2 * np.pi * np.arange(points) / points
    phases = np.array(list(itertools.product(grid, repeat=n)))
    a = alpha[None, :] * np.exp(1j * phases)
    # <k| (sum_i a_i |i>)^{(x) l} = sqrt(C(l; k)) prod a_i^{k_i}
    vecs = coef[None, :] * np.prod(a[:, None, :] ** K[None, :, :], axis=2)
    rho = vecs.T @ vecs.conj() / len(phases)
    if permute:
        index = {k: i for i, k in enumerate(basis)}
        acc = np.zeros_like(rho)
        perms = list(itertools.permutations(range(n)))
        for p in perms:
            idx = [index[tuple(k[i] for i in p)] for k in basis]
            P = np.zeros_like(rho)
            P[idx, np.arange(len(basis))] = 1.0
            acc += P @ rho @ P.T
        rho = acc / len(perms)
    off = rho - np.diag(np.diag(rho))
    return {k: float(rho[i, i].real) for i, k in enumerate(basis)}, float(np.max(np.abs(off), initial=0.0))


# ---------------------------------------------------------------- CSV curves


def dsep_curve_rows(ns: Iterable[int], ls: Iterable[int], oracle: bool = True) -> list[dict]:
    rows = []
    ls = list(ls)
    for n in ns:
        for l in ls:
            if l > n:
                continue
            within = oracle and n <= ORACLE_MAX_N and l <= ORACLE_MAX_L
            rows.append({
                "n": n,
                "l": l,
                "d_sep": d_sep_closed_form(n, l),
                "asymptotic": d_sep_asymptotic(n, l),
                "oracle": d_sep_oracle(n, l) if within else "",
            })
    return rows


def beta_curve_rows(ns: Iterable[int], etas: Iterable[float], delta: float) -> list[dict]:
    rows = []
    etas = list(etas)
    for n in ns:
        for eta in etas:
            lower, upper = beta_eta_bounds(n, eta, delta)
            rows.append({"n": n, "eta": eta, "beta": beta_eta(n, eta), "lower": lower, "upper": upper})
    return rows


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in columns)])
    return buf.getvalue()
