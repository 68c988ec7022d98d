import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lossysim import fixture_path
from lossysim import network as nw
from lossysim.decompositions import generate_clements, generate_reck
from lossysim.errors import (
    HeterogeneousLossError,
    NetworkParseError,
    NonCanonicalNetworkError,
    ValidationError,
)
from lossysim.metrics import total_variation
from lossysim.rng import stream
from conftest import haar


def one_bs(eta=0.9):
    return nw.dressed_network(2, [nw.Beamsplitter((0, 1), 0.4, 0.1)], eta)


def layered(m, layers, eta):
    """Brick-wall network; every IO path crosses exactly `layers` blocks per layer pair."""
    blocks = []
    for t in range(layers):
        start = t % 2
        blocks += [nw.Beamsplitter((i, i + 1), 0.3 + 0.1 * i, 0.2 * t) for i in range(start, m - 1, 2)]
    return nw.dressed_network(m, blocks, eta)


def assert_equivalent(net, result, inputs, tol=1e-9):
    for inp in inputs:
        a = nw.network_output_distribution(net, inp)
        b = nw.extracted_output_distribution(result, inp)
        assert total_variation(a, b) <= tol, inp


class TestElements:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6))
    def test_beamsplitter_parameterization_covers_u2(self, seed):
        W = haar(2, seed)
        assert np.allclose(nw.Beamsplitter.from_matrix((0, 1), W).matrix(), W, atol=1e-12)

    @pytest.mark.parametrize("W", [np.eye(2), np.array([[0, 1], [1, 0]]), np.diag([1j, -1]),
                                   np.array([[0, -1j], [1j, 0]])])
    def test_degenerate_angles(self, W):
        assert np.allclose(nw.Beamsplitter.from_matrix((0, 1), W).matrix(), W)

    def test_transfer_matrix_of_loss(self):
        net = nw.LossyNetwork(2, [nw.Loss(0, 0.64)])
        assert np.allclose(net.transfer_matrix(), np.diag([0.8, 1.0]))


class TestJson:
    def test_round_trip(self):
        g = stream(3)
        net = nw.random_canonical_network(4, 5, 0.8, g)
        back = nw.network_from_json(net.to_json())
        assert back.elements == net.elements

    def test_eta_in_expands_to_losses(self):
        net = nw.load_network(fixture_path("fig10.json"))
        assert len(net.beamsplitters) == 6 and net.loss_count() == 12
        nw.check_canonical(net)

    def test_parse_errors_carry_location(self):
        text = '{"m": 2,\n "elements": [\n  {"type": "loss", "mode": 0, "eta": 0.5},\n  {"type": "bs", "modes": [0, 0], "theta": 1}\n ]}'
        with pytest.raises(NetworkParseError) as exc:
            nw.network_from_json(text)
        assert exc.value.element == 1 and exc.value.line == 4
        with pytest.raises(NetworkParseError, match="line 2"):
            nw.network_from_json('{"m": 2,\n "elements": [}')
        with pytest.raises(NetworkParseError, match="unknown keys"):
            nw.network_from_json('{"m": 2, "elements": [{"type": "loss", "mode": 0, "eta": 1, "x": 1}]}')
        with pytest.raises(NetworkParseError, match="missing key"):
            nw.network_from_json('{"m": 2, "elements": [{"type": "loss", "mode": 0}]}')
        with pytest.raises(NetworkParseError):
            nw.network_from_json('{"m": 2, "elements": [{"type": "loss", "mode": 3, "eta": 1}]}')


class TestLabels:
    def test_single_beamsplitter(self):
        labels, s = nw.label_shortest_paths(one_bs())
        assert list(labels.values()) == [1] and s == 1

    def test_fixtures(self):
        labels10, s10 = nw.label_shortest_paths(nw.load_network(fixture_path("fig10.json")))
        assert s10 == 2 and list(labels10.values()) == [1, 1, 2, 2, 2, 3]
        labels11, s11 = nw.label_shortest_paths(nw.load_network(fixture_path("fig11.json")))
        assert s11 == 3 and list(labels11.values()) == [1, 1, 2, 2, 2, 3, 3, 4, 3]

    def test_triangle_has_single_block_path(self):
        net = generate_reck(haar(5, 1), 0.9)
        assert nw.label_shortest_paths(net)[1] == 1
        assert nw.io_path_bounds(net).min() == 1

    def test_rectangle_depth(self):
        net = generate_clements(haar(4, 1), 0.9)
        bounds = nw.io_path_bounds(net)
        from_input = bounds.min(axis=0)
        assert all(from_input[1:-1] >= math.ceil(4 / 2))
        assert from_input.min() == nw.label_shortest_paths(net)[1] == 2

    def test_labels_match_brute_force_paths(self):
        g = stream(9)
        for _ in range(20):
            net = nw.random_canonical_network(4, 6, 0.9, g)
            _, s = nw.label_shortest_paths(net)
            # a dressed path crosses one loss per block, so s is the fewest blocks
            assert s == nw.io_path_bounds(net).min()

    def test_invariant_under_reordering_commuting_blocks(self):
        blocks = [nw.Beamsplitter(p, 0.3) for p in [(0, 1), (2, 3), (1, 2), (0, 1), (2, 3)]]
        swapped = [blocks[1], blocks[0], blocks[2], blocks[4], blocks[3]]
        a = nw.dressed_network(4, blocks, 0.9)
        b = nw.dressed_network(4, swapped, 0.9)
        la, sa = nw.label_shortest_paths(a)
        lb, sb = nw.label_shortest_paths(b)
        assert sa == sb
        key = lambda net, labels: sorted((net.elements[k].modes, v) for k, v in labels.items())
        assert key(a, la) == key(b, lb)

    def test_restricted_inputs(self):
        net = generate_reck(haar(4, 2), 0.9)
        assert nw.label_shortest_paths(net)[1] == 1
        assert nw.label_shortest_paths(net, active_inputs=[0])[1] >= 1
        with pytest.raises(ValidationError):
            nw.label_shortest_paths(net, active_inputs=[])


class TestExtraction:
    def test_single_beamsplitter(self):
        r = nw.extract_uniform_losses(one_bs(0.8))
        assert r.s == 1 and r.eta_eff == pytest.approx(0.8)
        assert r.residual.loss_count() == 0

    def test_fig10(self):
        net = nw.load_network(fixture_path("fig10.json"))
        r = nw.extract_uniform_losses(net)
        assert r.s == 2 and r.eta_eff == pytest.approx(0.81)
        assert r.residual.loss_count() == net.loss_count() - 2 * 4

    def test_fig11_matches_fixture(self):
        net = nw.load_network(fixture_path("fig11.json"))
        r = nw.extract_uniform_losses(net)
        expected = json.loads(fixture_path("fig13_expected.json").read_text())
        assert r.s == expected["s"] == 3
        assert r.eta_eff == pytest.approx(expected["eta_eff"])
        got = [(p["mode"], p["segment"], len(p["etas"])) for p in r.loss_placement()]
        want = [(p["mode"], p["segment"], p["count"]) for p in expected["placement"]]
        assert got == want
        assert r.residual.loss_count() == expected["residual_loss_count"]
        assert_equivalent(net, r, [(1, 1, 1, 1), (1, 0, 0, 1), (0, 2, 1, 0)])

    @pytest.mark.parametrize("layers", [2, 3, 4])
    def test_balanced_layers(self, layers):
        net = layered(4, layers, 0.9)
        r = nw.extract_uniform_losses(net)
        assert r.eta_eff == pytest.approx(0.9**r.s)
        assert r.removed == r.s * 4
        assert r.residual.loss_count() == net.loss_count() - r.s * 4
        assert_equivalent(net, r, [(1, 1, 0, 1)])

    def test_every_layer_shortens_paths_by_one(self):
        g = stream(4)
        for _ in range(10):
            net = nw.random_canonical_network(5, 8, 0.9, g)
            r = nw.extract_uniform_losses(net, keep_trace=True)
            assert len(r.snapshots) == r.s
            before = nw.label_shortest_paths(net)[1]
            for k, snap in enumerate(r.snapshots, 1):
                assert nw.label_shortest_paths(snap)[1] == before - k
            pulls = [t for t in r.trace if t[0] == "pull_layer"]
            assert [t[1] for t in pulls] == list(range(1, r.s + 1))

    def test_intermediate_snapshots_are_equivalent(self):
        net = nw.load_network(fixture_path("fig11.json"))
        r = nw.extract_uniform_losses(net, keep_trace=True)
        ref = nw.network_output_distribution(net, (1, 1, 0, 1))
        for k, snap in enumerate(r.snapshots, 1):
            partial = nw.ExtractionResult(k, 0.9**k, 0.9, snap, r.active_inputs, 4 * k)
            assert total_variation(ref, nw.extracted_output_distribution(partial, (1, 1, 0, 1))) <= 1e-9

    def test_random_networks_equivalent(self):
        g = stream(12)
        for _ in range(8):
            m = int(g.integers(2, 5))
            net = nw.random_canonical_network(m, int(g.integers(1, 7)), 0.8, g)
            r = nw.extract_uniform_losses(net)
            assert r.residual.loss_count() == net.loss_count() - r.s * m
            inp = tuple(int(x) for x in g.multinomial(2, np.ones(m) / m))
            assert_equivalent(net, r, [inp])

    def test_active_inputs(self):
        net = generate_reck(haar(4, 0), 0.9)
        full = nw.extract_uniform_losses(net)
        part = nw.extract_uniform_losses(net, active_inputs=[0, 1])
        assert part.s >= full.s
        assert part.removed == part.s * 2
        assert part.residual.loss_count() == net.loss_count() - part.s * 2
        assert_equivalent(net, part, [(1, 1, 0, 0), (2, 0, 0, 0)])

    def test_non_canonical(self):
        net = nw.LossyNetwork(2, [nw.Loss(0, 0.9), nw.Beamsplitter((0, 1), 0.4)])
        with pytest.raises(NonCanonicalNetworkError):
            nw.extract_uniform_losses(net)
        net = nw.LossyNetwork(2, list(one_bs().elements) + [nw.Loss(1, 0.9)])
        with pytest.raises(NonCanonicalNetworkError):
            nw.extract_uniform_losses(net)

    def test_heterogeneous_redirected(self):
        net = nw.LossyNetwork(2, [nw.Loss(0, 0.9), nw.Loss(1, 0.8), nw.Beamsplitter((0, 1), 0.4)])
        with pytest.raises(HeterogeneousLossError):
            nw.extract_uniform_losses(net)


class TestRelaxed:
    def test_equal_losses_identical(self):
        net = nw.load_network(fixture_path("fig10.json"))
        a, b = nw.extract_uniform_losses(net), nw.extract_uniform_losses_relaxed(net)
        assert (a.s, a.eta_eff) == (b.s, b.eta_eff)
        assert a.residual.elements == b.residual.elements

    def test_factorization(self):
        net = nw.LossyNetwork(2, [nw.Loss(0, 0.9), nw.Loss(1, 0.8), nw.Beamsplitter((0, 1), 0.4)])
        r = nw.extract_uniform_losses_relaxed(net)
        assert r.eta_star == 0.9 and r.s == 1 and r.eta_eff == pytest.approx(0.9)
        (only,) = r.residual.losses
        assert only.mode == 1 and only.eta == pytest.approx(0.8 / 0.9)
        assert_equivalent(net, r, [(1, 1), (2, 0)], tol=1e-12)

    def test_random_heterogeneous_equivalent(self):
        g = stream(21)
        for _ in range(5):
            net = nw.random_canonical_network(3, 5, 0.9, g)
            etas = g.uniform(0.5, 1.0, size=net.loss_count())
            it = iter(etas)
            net = nw.LossyNetwork(3, [nw.Loss(e.mode, float(next(it))) if isinstance(e, nw.Loss) else e
                                      for e in net.elements])
            r = nw.extract_uniform_losses_relaxed(net)
            assert r.eta_eff == pytest.approx(max(etas) ** r.s)
            assert_equivalent(net, r, [(1, 1, 1)])

    def test_blocked_path(self):
        net = nw.LossyNetwork(2, [nw.Loss(0, 0.0), nw.Loss(1, 0.8), nw.Beamsplitter((0, 1), 0.4)])
        with pytest.raises(ValidationError):
            nw.extract_uniform_losses_relaxed(net)


class TestChannel:
    def test_lossless_matches_exact(self):
        from lossysim.channels import exact_bosonic_distribution

        U = haar(4, 6)
        net = generate_clements(U, 1.0)
        a = nw.network_output_distribution(net, (1, 0, 1, 1))
        assert total_variation(a, exact_bosonic_distribution(U, (1, 0, 1, 1))) <= 1e-9

    def test_single_loss(self):
        d = nw.network_output_distribution(nw.LossyNetwork(1, [nw.Loss(0, 0.3)]), (2,))
        assert d[(2,)] == pytest.approx(0.09) and d[(0,)] == pytest.approx(0.49)

    def test_transfer_matrix_gives_single_photon_statistics(self):
        g = stream(5)
        net = nw.random_canonical_network(4, 6, 0.7, g)
        T = net.transfer_matrix()
        d = nw.network_output_distribution(net, (0, 1, 0, 0))
        for j in range(4):
            e = [0] * 4
            e[j] = 1
            assert d[tuple(e)] == pytest.approx(abs(T[j, 1]) ** 2)
        assert d[(0, 0, 0, 0)] == pytest.approx(1 - np.sum(abs(T[:, 1]) ** 2))

    def test_cap(self):
        from lossysim.errors import CapExceededError

        with pytest.raises(CapExceededError):
            nw.network_output_distribution(nw.LossyNetwork(7, []), (1,) + (0,) * 6)
