"""Lossy linear-optical networks and uniform-loss extraction.

A network is a topologically ordered list of two-mode unitaries and
single-mode loss elements. Each mode line is cut into *edges* by the
beamsplitters touching it: edge ``(mode, k)`` runs from the k-th beamsplitter
on that mode (or the input when k = 0) to the next one (or the output).

Extraction moves units of loss along edges using a single identity: equal
losses on both outputs of a two-mode unitary equal the same losses on both
inputs. Every layer pulls one loss from each active input edge.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from . import channels
from .errors import (
    CapExceededError,
    HeterogeneousLossError,
    MalformedNetworkError,
    NetworkParseError,
    NonCanonicalNetworkError,
    ValidationError,
)
from .fock import check_unitary

ETA_MATCH_TOL = 1e-12
CHANNEL_MAX_PHOTONS = 4
CHANNEL_MAX_MODES = 6


@dataclass(frozen=True)
class Beamsplitter:
    """V = diag(e^{ia}, e^{ib}) [[cos t, -e^{-ip} sin t], [e^{ip} sin t, cos t]]."""

    modes: tuple[int, int]
    theta: float
    phi: float = 0.0
    phases: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        i, j = (int(x) for x in self.modes)
        if i == j:
            raise MalformedNetworkError(f"beamsplitter modes must differ, got {self.modes}")
        object.__setattr__(self, "modes", (i, j))
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        core = np.array(
            [[c, -np.exp(-1j * self.phi) * s], [np.exp(1j * self.phi) * s, c]], dtype=complex
        )
        return np.exp(1j * np.array(self.phases))[:, None] * core

    @classmethod
    def from_matrix(cls, modes: tuple[int, int], W) -> "Beamsplitter":
        """Parameters of an arbitrary 2x2 unitary ``W``.

        The overall phase comes from det W; phases are read off whichever of
        the two column entries is larger, so tiny entries never set a phase.
        """
        W = check_unitary(np.asarray(W, dtype=complex))
        if W.shape != (2, 2):
            raise ValidationError(f"expected 2x2, got {W.shape}")
        theta = math.atan2(abs(W[1, 0]), abs(W[0, 0]))
        total = np.angle(np.linalg.det(W))
        if abs(W[0, 0]) >= abs(W[1, 0]):
            alpha = np.angle(W[0, 0])
            beta = total - alpha
            phi = np.angle(W[1, 0]) - beta
        else:
            alpha = np.angle(W[0, 0]) if abs(W[0, 0]) > 0 else np.angle(-W[0, 1])
            phi = alpha - np.angle(-W[0, 1])
            beta = np.angle(W[1, 0]) - phi
        out = cls(modes, theta, float(phi), (float(alpha), float(beta)))
        if np.max(np.abs(out.matrix() - W)) > 1e-9:
            raise ValidationError("beamsplitter parameterization failed to reproduce matrix")
        return out


@dataclass(frozen=True)
class Loss:
    mode: int
    eta: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise MalformedNetworkError(f"transmissivity {self.eta} outside [0, 1]")


Element = Union[Beamsplitter, Loss]


@dataclass(frozen=True)
class LossyNetwork:
    m: int
    elements: tuple[Element, ...]
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        for k, el in enumerate(self.elements):
            modes = el.modes if isinstance(el, Beamsplitter) else (el.mode,)
            if any(not 0 <= q < self.m for q in modes):
                raise MalformedNetworkError(f"element {k} touches a mode outside 0..{self.m - 1}")

    @property
    def beamsplitters(self) -> list[tuple[int, Beamsplitter]]:
        return [(k, el) for k, el in enumerate(self.elements) if isinstance(el, Beamsplitter)]

    @property
    def losses(self) -> list[Loss]:
        return [el for el in self.elements if isinstance(el, Loss)]

    def loss_count(self) -> int:
        return len(self.losses)

    def transfer_matrix(self) -> np.ndarray:
        """Single-particle amplitude map; losses act as sqrt(eta) on their mode."""
        T = np.eye(self.m, dtype=complex)
        for el in self.elements:
            if isinstance(el, Loss):
                T[el.mode, :] *= math.sqrt(el.eta)
            else:
                i, j = el.modes
                T[[i, j], :] = el.matrix() @ T[[i, j], :]
        return T

    def lossless_unitary(self) -> np.ndarray:
        return LossyNetwork(self.m, [e for e in self.elements if isinstance(e, Beamsplitter)]).transfer_matrix()

    def to_dict(self) -> dict:
        out = []
        for el in self.elements:
            if isinstance(el, Loss):
                out.append({"type": "loss", "mode": el.mode, "eta": el.eta})
            else:
                d = {"type": "bs", "modes": list(el.modes), "theta": el.theta, "phi": el.phi}
                if el.phases != (0.0, 0.0):
                    d["phases"] = list(el.phases)
                out.append(d)
        doc = {"m": self.m, "elements": out}
        if self.provenance:
            doc["description"] = self.provenance
        return doc

    def to_json(self, indent: Optional[int] = 1) -> str:
        return json.dumps(self.to_dict(), indent=indent)


# --------------------------------------------------------------------- JSON

_BS_KEYS = {"type", "modes", "theta", "phi", "phases", "eta_in", "note"}
_LOSS_KEYS = {"type", "mode", "eta", "note"}
_TOP_KEYS = {"m", "elements", "description"}


def _element_lines(text: str) -> list[int]:
    """Line number where each entry of the top-level ``elements`` array starts."""
    match = re.search(r'"elements"\s*:\s*\[', text)
    if not match:
        return []
    decoder = json.JSONDecoder()
    pos, lines = match.end(), []
    while pos < len(text):
        while pos < len(text) and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= len(text) or text[pos] == "]":
            break
        lines.append(text.count("\n", 0, pos) + 1)
        try:
            _, pos = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            break
    return lines


def _expand_element(raw, m: int) -> list[Element]:
    if not isinstance(raw, dict) or "type" not in raw:
        raise ValueError("element must be an object with a 'type'")
    kind = raw["type"]
    if kind == "loss":
        extra = set(raw) - _LOSS_KEYS
        if extra:
            raise ValueError(f"unknown keys {sorted(extra)}")
        return [Loss(int(raw["mode"]), float(raw["eta"]))]
    if kind == "bs":
        extra = set(raw) - _BS_KEYS
        if extra:
            raise ValueError(f"unknown keys {sorted(extra)}")
        modes = tuple(int(q) for q in raw["modes"])
        if len(modes) != 2:
            raise ValueError("'modes' must list two modes")
        bs = Beamsplitter(
            modes, float(raw["theta"]), float(raw.get("phi", 0.0)), tuple(raw.get("phases", (0.0, 0.0)))
        )
        if len(bs.phases) != 2:
            raise ValueError("'phases' must list two values")
        pre: list[Element] = []
        if "eta_in" in raw:
            etas = [float(e) for e in raw["eta_in"]]
            if len(etas) != 2:
                raise ValueError("'eta_in' must list two values")
            pre = [Loss(modes[0], etas[0]), Loss(modes[1], etas[1])]
        return pre + [bs]
    raise ValueError(f"unknown element type {kind!r}")


def network_from_dict(doc: dict, text: Optional[str] = None) -> LossyNetwork:
    if not isinstance(doc, dict):
        raise NetworkParseError("network document must be a JSON object")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise NetworkParseError(f"unknown top-level keys {sorted(extra)}")
    if "m" not in doc or "elements" not in doc:
        raise NetworkParseError("network needs 'm' and 'elements'")
    m = doc["m"]
    if not isinstance(m, int) or m < 1:
        raise NetworkParseError(f"'m' must be a positive integer, got {m!r}")
    lines = _element_lines(text) if text else []
    elements: list[Element] = []
    for k, raw in enumerate(doc["elements"]):
        line = lines[k] if k < len(lines) else None
        try:
            new = _expand_element(raw, m)
            LossyNetwork(m, new)
        except KeyError as exc:
            raise NetworkParseError(f"missing key {exc.args[0]!r}", element=k, line=line) from exc
        except (ValueError, TypeError) as exc:
            raise NetworkParseError(str(exc), element=k, line=line) from exc
        elements.extend(new)
    return LossyNetwork(m, elements, str(doc.get("description", "")))


def network_from_json(text: str) -> LossyNetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(exc.msg, line=exc.lineno) from exc
    return network_from_dict(doc, text)


def load_network(path) -> LossyNetwork:
    with open(path, encoding="utf-8") as fh:
        return network_from_json(fh.read())


def dressed_network(m: int, blocks: Iterable[Beamsplitter], eta: float, provenance: str = "") -> LossyNetwork:
    """Canonical network: every beamsplitter preceded by Loss(eta) on both arms."""
    elements: list[Element] = []
    for bs in blocks:
        elements += [Loss(bs.modes[0], eta), Loss(bs.modes[1], eta), bs]
    return LossyNetwork(m, elements, provenance)


# -------------------------------------------------------------- edge model


@dataclass
class _Edges:
    """Loss content of every edge plus the beamsplitter incidence."""

    m: int
    bs: list[Beamsplitter]
    ins: list[tuple[tuple[int, int], tuple[int, int]]]
    outs: list[tuple[tuple[int, int], tuple[int, int]]]
    end: dict[tuple[int, int], Optional[int]]
    units: dict[tuple[int, int], list[float]]

    def final_edges(self):
        return [e for e, b in self.end.items() if b is None]

    def count(self, e) -> int:
        return len(self.units[e])


def _edges(net: LossyNetwork) -> _Edges:
    seg = [0] * net.m
    bs, ins, outs = [], [], []
    end: dict[tuple[int, int], Optional[int]] = {}
    units: dict[tuple[int, int], list[float]] = {(q, 0): [] for q in range(net.m)}
    for el in net.elements:
        if isinstance(el, Loss):
            units[(el.mode, seg[el.mode])].append(el.eta)
            continue
        i, j = el.modes
        b = len(bs)
        bs.append(el)
        ins.append(((i, seg[i]), (j, seg[j])))
        end[(i, seg[i])] = end[(j, seg[j])] = b
        seg[i] += 1
        seg[j] += 1
        outs.append(((i, seg[i]), (j, seg[j])))
        units[(i, seg[i])] = []
        units[(j, seg[j])] = []
    for q in range(net.m):
        end[(q, seg[q])] = None
    return _Edges(net.m, bs, ins, outs, end, units)


def check_canonical(net: LossyNetwork) -> None:
    """Exactly one loss on each beamsplitter input arm and none on output lines."""
    ed = _edges(net)
    for e, b in ed.end.items():
        want = 0 if b is None else 1
        if ed.count(e) != want:
            where = "output line" if b is None else f"input arm of beamsplitter {b}"
            raise NonCanonicalNetworkError(
                f"mode {e[0]} {where} carries {ed.count(e)} loss elements, expected {want}"
            )


def _active_set(m: int, active_inputs) -> tuple[int, ...]:
    if active_inputs is None:
        return tuple(range(m))
    act = tuple(sorted({int(a) for a in active_inputs}))
    if not act or any(not 0 <= a < m for a in act):
        raise ValidationError(f"active inputs {active_inputs} invalid for m={m}")
    return act


def label_shortest_paths(net: LossyNetwork, active_inputs=None) -> tuple[dict[int, int], int]:
    """Minimum loss count on any input-to-element path, by one forward pass.

    Returns ``(labels, s)`` where ``labels`` maps element indices of the
    beamsplitters to their label and ``s`` is the minimum over output lines.
    Inputs outside ``active_inputs`` are treated as unreachable.
    """
    act = set(_active_set(net.m, active_inputs))
    inf = math.inf
    dist = [0.0 if q in act else inf for q in range(net.m)]
    labels: dict[int, int] = {}
    for k, el in enumerate(net.elements):
        if isinstance(el, Loss):
            dist[el.mode] += 1
        else:
            i, j = el.modes
            d = min(dist[i], dist[j])
            dist[i] = dist[j] = d
            if d < inf:
                labels[k] = int(d)
    s = min(dist)
    return labels, int(s)


def io_path_bounds(net: LossyNetwork) -> np.ndarray:
    """``B[out, in]``: fewest beamsplitters on a path from input ``in`` to output ``out``.

    Entries are ``inf`` when no path exists.
    """
    inf = math.inf
    out = np.full((net.m, net.m), inf)
    for src in range(net.m):
        dist = [inf] * net.m
        dist[src] = 0.0
        for el in net.elements:
            if isinstance(el, Beamsplitter):
                i, j = el.modes
                d = min(dist[i], dist[j]) + 1
                dist[i] = dist[j] = d
        out[:, src] = dist
    return out


# ---------------------------------------------------------------- extraction


@dataclass(frozen=True)
class ExtractionResult:
    s: int
    eta_eff: float
    eta_star: float
    residual: LossyNetwork
    active_inputs: tuple[int, ...]
    removed: int
    trace: tuple[tuple, ...] = ()
    snapshots: tuple[LossyNetwork, ...] = field(default=(), repr=False)

    def loss_placement(self) -> list[dict]:
        return loss_placement(self.residual)


def _emit(ed: _Edges, unit_eta: float, attenuators: dict, provenance: str) -> LossyNetwork:
    elements: list[Element] = []

    def flush(e):
        q = e[0]
        elements.extend(Loss(q, unit_eta) for _ in range(len(ed.units[e])))
        elements.extend(Loss(q, a) for a in attenuators.get(e, ()))

    for b, bs in enumerate(ed.bs):
        for e in ed.ins[b]:
            flush(e)
        elements.append(bs)
    for e in sorted(ed.final_edges()):
        flush(e)
    return LossyNetwork(ed.m, elements, provenance)


def _zero_reachable(ed: _Edges, act) -> tuple[list[int], bool]:
    """Beamsplitters reachable from active inputs along loss-free edges."""
    reach = {(q, 0) for q in act if ed.count((q, 0)) == 0}
    hit: set[int] = set()
    # edges and beamsplitters are generated in topological order
    for b in range(len(ed.bs)):
        if any(e in reach for e in ed.ins[b]):
            hit.add(b)
            for e in ed.outs[b]:
                if ed.count(e) == 0:
                    reach.add(e)
    blocked = any(e in reach for e in ed.final_edges())
    return sorted(hit), blocked


def _extract(net, unit_eta, attenuators, ed, active_inputs, keep_trace, provenance):
    act = _active_set(net.m, active_inputs)
    _, s = label_shortest_paths(_emit(ed, unit_eta, {}, ""), act)
    trace: list[tuple] = []
    snaps: list[LossyNetwork] = []
    for layer in range(1, s + 1):
        hit, blocked = _zero_reachable(ed, act)
        if blocked:
            raise MalformedNetworkError(f"an output is reachable without loss at layer {layer}")
        for b in reversed(hit):
            for e in ed.outs[b]:
                ed.units[e].pop()
            for e in ed.ins[b]:
                ed.units[e].append(unit_eta)
            trace.append(("commute", b, layer))
        for q in act:
            ed.units[(q, 0)].pop()
        trace.append(("pull_layer", layer))
        if keep_trace:
            snaps.append(_emit(ed, unit_eta, attenuators, f"after layer {layer}"))
    residual = _emit(ed, unit_eta, attenuators, provenance)
    return ExtractionResult(
        s=s,
        eta_eff=unit_eta**s,
        eta_star=unit_eta,
        residual=residual,
        active_inputs=act,
        removed=s * len(act),
        trace=tuple(trace),
        snapshots=tuple(snaps),
    )


def extract_uniform_losses(net: LossyNetwork, active_inputs=None, keep_trace: bool = False) -> ExtractionResult:
    """Pull ``s`` uniform loss layers to the front of a canonical network.

    All loss elements must share one transmissivity ``eta``; the channel then
    factorizes as the residual network after uniform loss ``eta**s``.
    """
    check_canonical(net)
    etas = {el.eta for el in net.losses}
    if not etas:
        return ExtractionResult(0, 1.0, 1.0, net, _active_set(net.m, active_inputs), 0)
    eta = max(etas)
    if max(etas) - min(etas) > ETA_MATCH_TOL:
        raise HeterogeneousLossError(
            f"loss elements have {len(etas)} distinct transmissivities; use the relaxed extraction"
        )
    ed = _edges(net)
    for e in ed.units:
        ed.units[e] = [eta] * len(ed.units[e])
    return _extract(net, eta, {}, ed, active_inputs, keep_trace, "residual after uniform-loss extraction")


def extract_uniform_losses_relaxed(net: LossyNetwork, active_inputs=None, keep_trace: bool = False) -> ExtractionResult:
    """Extraction for unequal losses using the largest transmissivity ``eta_star``.

    Each loss ``eta_e`` is split into a movable ``eta_star`` unit and a fixed
    attenuator ``eta_e / eta_star`` that stays on its edge (dropped when 1).
    """
    check_canonical(net)
    etas = [el.eta for el in net.losses]
    if any(e == 0.0 for e in etas):
        raise ValidationError("a loss element with eta = 0 blocks its path; relaxed extraction needs eta > 0")
    if not etas:
        return ExtractionResult(0, 1.0, 1.0, net, _active_set(net.m, active_inputs), 0)
    eta_star = max(etas)
    ed = _edges(net)
    attenuators: dict[tuple[int, int], list[float]] = {}
    for e, values in ed.units.items():
        ratios = [v / eta_star for v in values if v != eta_star]
        if ratios:
            attenuators[e] = ratios
        ed.units[e] = [eta_star] * len(values)
    return _extract(
        net, eta_star, attenuators, ed, active_inputs, keep_trace, "residual after relaxed extraction"
    )


def loss_placement(net: LossyNetwork) -> list[dict]:
    """Loss elements grouped by edge: ``{"mode", "segment", "etas"}``, nonempty edges only."""
    ed = _edges(net)
    return [
        {"mode": q, "segment": k, "etas": list(v)}
        for (q, k), v in sorted(ed.units.items())
        if v
    ]


# ----------------------------------------------------------------- channels


def _check_channel_caps(m: int, photons: int):
    if m > CHANNEL_MAX_MODES or photons > CHANNEL_MAX_PHOTONS:
        raise CapExceededError(
            f"network simulation capped at {CHANNEL_MAX_PHOTONS} photons and {CHANNEL_MAX_MODES} modes"
        )


def network_to_channel(net: LossyNetwork) -> Callable[[channels.MixedFockState], channels.MixedFockState]:
    """Evolution procedure folding the elements in order over a branch state."""

    def evolve(state: channels.MixedFockState) -> channels.MixedFockState:
        if state.m != net.m:
            raise ValidationError(f"state has {state.m} modes, network has {net.m}")
        _check_channel_caps(net.m, max((b.photons for b in state.branches), default=0))
        for el in net.elements:
            if isinstance(el, Loss):
                state = channels.apply_single_mode_loss(state, el.mode, el.eta)
            else:
                state = channels.apply_two_mode_unitary(state, el.modes, el.matrix())
        return state

    return evolve


def _as_state(m: int, inp) -> channels.MixedFockState:
    if isinstance(inp, channels.MixedFockState):
        return inp
    if isinstance(inp, channels.FockDistribution):
        return channels.MixedFockState.from_distribution(inp)
    return channels.MixedFockState.from_fock(inp)


def network_output_distribution(net: LossyNetwork, inp) -> channels.FockDistribution:
    return channels.measure_distribution(network_to_channel(net)(_as_state(net.m, inp)))


def extracted_output_distribution(result: ExtractionResult, inp) -> channels.FockDistribution:
    """Output of uniform loss ``eta_eff`` on the active inputs followed by the residual."""
    m = result.residual.m
    state = _as_state(m, inp)
    for q in result.active_inputs:
        state = channels.apply_single_mode_loss(state, q, result.eta_eff)
    return channels.measure_distribution(network_to_channel(result.residual)(state))


def random_canonical_network(m: int, n_bs: int, eta: float, g: np.random.Generator) -> LossyNetwork:
    """Dressed network of ``n_bs`` random two-mode unitaries on random mode pairs."""
    if m < 2:
        raise ValidationError("need at least two modes")
    blocks = []
    for _ in range(n_bs):
        i, j = (int(x) for x in g.choice(m, size=2, replace=False))
        theta, phi, a, b = g.uniform(0, 2 * np.pi, size=4)
        blocks.append(Beamsplitter((i, j), float(theta) / 4, float(phi), (float(a), float(b))))
    return dressed_network(m, blocks, eta, f"random canonical network, m={m}, blocks={n_bs}")
