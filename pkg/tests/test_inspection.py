"""Unit tests for the topology report."""

import math

import numpy as np
import pytest

from livewire.checkpoint import save_checkpoint
from livewire.config import InitConfig
from livewire.infometrics import EventLog
from livewire.initializer import connection_probability, init_network
from livewire.models import Edge
from livewire.topology import Network
from livewire.training.inspection import (
    age_histogram,
    degree_distribution,
    inspect,
    inspect_network,
)
from tests.builders import n, random_network


def _aged(ages: list[int]) -> Network:
    return Network([1, len(ages)], [Edge(n(0, 0), n(1, i), 0.1, age=a) for i, a in enumerate(ages)])


class TestAgeHistogram:
    def test_single_bin_when_all_ages_match(self):
        """
        Given three edges of age 7
        When the age histogram is built
        Then it has a single bin [7, 7] counting all three
        """
        bins = age_histogram(_aged([7, 7, 7]))

        assert [(b.low, b.high, b.count) for b in bins] == [(7, 7, 3)]

    def test_bins_cover_every_edge(self):
        """
        Given 32 edges with ages 0 to 93
        When the age histogram is built with at most 10 bins
        Then the bins are contiguous, span every age and count every edge
        """
        ages = list(range(0, 95, 3))

        bins = age_histogram(_aged(ages), max_bins=10)

        assert sum(b.count for b in bins) == len(ages)
        assert len(bins) <= 10
        assert bins[0].low == 0 and bins[-1].high == 93
        assert all(a.high + 1 == b.low for a, b in zip(bins, bins[1:], strict=False))

    def test_empty_network(self):
        """
        Given a network without edges
        When the age histogram is built
        Then it is empty
        """
        assert age_histogram(Network([2, 2])) == []


class TestDegreeDistribution:
    def test_counts_sum_to_eligible_nodes(self):
        """
        Given a 4-layer network with 20 edges
        When in- and out-degree distributions are built
        Then they count every non-input and non-output node and sum to the edge count
        """
        net = random_network([3, 4, 4, 2], 20, seed=0)

        incoming = degree_distribution(net, incoming=True)
        outgoing = degree_distribution(net, incoming=False)

        assert sum(incoming.values()) == 10
        assert sum(outgoing.values()) == 11
        assert sum(d * c for d, c in incoming.items()) == net.edge_count
        assert sum(d * c for d, c in outgoing.items()) == net.edge_count


class TestInspect:
    def test_report_from_checkpoint(self, tmp_path):
        """
        Given a saved 10-edge network
        When one node is inspected
        Then the report carries the shape, that node's incoming edges and no MI
        """
        net = random_network([3, 4, 2], 10, seed=1)
        path = tmp_path / "checkpoint.json"
        save_checkpoint(net, path)
        node = net.edges[0].dst

        report = inspect(path, [node])

        assert report.edge_count == 10
        assert report.layer_widths == [3, 4, 2]
        assert report.nodes[0].node == str(node)
        assert len(report.nodes[0].incoming) == net.in_degree(node)
        assert report.mi is None

    def test_node_outside_the_network(self, tmp_path):
        """
        Given node 1:4 of a 4-wide layer
        When it is inspected
        Then ValueError says it is outside the layer widths
        """
        path = tmp_path / "checkpoint.json"
        save_checkpoint(random_network([3, 4, 2], 5, seed=2), path)

        with pytest.raises(ValueError, match="outside layer widths"):
            inspect(path, [n(1, 4)])

    def test_mi_from_saved_events(self, tmp_path):
        """
        Given an event log over three nodes saved next to a checkpoint
        When two of the nodes are inspected
        Then the report holds exactly one MI snapshot for that pair
        """
        net = random_network([3, 4, 2], 10, seed=3)
        ckpt, events_path = tmp_path / "checkpoint.json", tmp_path / "events.json"
        save_checkpoint(net, ckpt)
        rng = np.random.default_rng(4)
        log = EventLog.from_arrays({n(1, i): rng.random(200) < 0.3 for i in range(3)})
        log.save(events_path)

        report = inspect(ckpt, [n(1, 0), n(1, 2)], events_path)

        assert [(m.a, m.b) for m in report.mi] == [("1:0", "1:2")]
        assert report.mi[0].n_obs == 200
        assert len(inspect(ckpt, events_path=events_path).mi) == 3

    def test_untracked_nodes_give_no_pairs(self):
        """
        Given an event log tracking only one of two inspected nodes
        When the network is inspected
        Then no MI pairs are reported
        """
        net = random_network([3, 4, 2], 10, seed=5)
        log = EventLog.from_arrays({n(1, 0): np.zeros(150, dtype=bool)})

        assert inspect_network(net, [n(1, 0), n(1, 1)], log).mi == []

    def test_initial_density_by_distance(self):
        """
        Given a freshly initialized [32, 32, 32, 32] network
        When it is inspected
        Then the density at each layer distance is within 4 sd of p(d)
        """
        cfg = InitConfig(sparsity_hyperparameter=0.5, branching_factor=-0.7, seed=11)
        widths = [32, 32, 32, 32]

        report = inspect_network(init_network(widths, cfg))

        for distance in (1, 2, 3):
            p = connection_probability(distance, cfg)
            trials = 32 * 32 * (4 - distance)
            sd = math.sqrt(p * (1 - p) / trials)
            assert abs(report.density_by_distance[distance] - p) <= 4 * sd
