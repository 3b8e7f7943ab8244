"""Unit tests for the credibility-weighted momentum optimizer."""

import logging

import numpy as np
import pytest

from livewire.config import CredibilitySchedule, CyclicSchedule, OptimizerConfig
from livewire.models import Edge
from livewire.plasticity import PlasticityError, effective_rate, step
from livewire.propagation import Gradients
from livewire.topology import Network
from tests.builders import n, random_network

EDGE = (n(0, 0), n(1, 0))


def _single_edge(weight: float = 0.0) -> Network:
    return Network([1, 1], [Edge(*EDGE, weight)])


def _flat(eta: float = 0.1, momentum: float = 0.9, **overrides) -> OptimizerConfig:
    return OptimizerConfig(
        momentum_coeff=momentum,
        schedule=CredibilitySchedule(eta_new=eta, eta_floor=eta),
        **overrides,
    )


def _grads(edges: dict, norm: dict | None = None) -> Gradients:
    return Gradients(edges=edges, norm=norm or {}, loss=0.0)


class TestMomentum:
    def test_constant_gradient_accumulates_geometrically(self):
        """
        Given one edge, momentum 0.9 and a constant gradient g
        When three steps are taken
        Then the momentum buffer reads g, 1.9g and 2.71g
        """
        net = _single_edge()
        g = 0.5
        seen = []
        for _ in range(3):
            step(net, _grads({EDGE: g}), _flat())
            seen.append(net.edges[0].momentum)

        assert seen == pytest.approx([g, 1.9 * g, 2.71 * g])

    def test_update_is_rate_times_momentum(self):
        """
        Given one edge of weight 1 and rate 0.1
        When one step with gradient 0.5 is taken
        Then the weight drops by 0.05 and both the edge and the network age by one
        """
        net = _single_edge(weight=1.0)

        step(net, _grads({EDGE: 0.5}), _flat(eta=0.1))

        assert net.edges[0].weight == pytest.approx(1.0 - 0.1 * 0.5)
        assert net.edges[0].age == 1
        assert net.step_count == 1

    def test_degenerate_schedule_is_plain_sgd(self):
        """
        Given eta_floor = eta_new and momentum 0
        When several steps are applied to a random net
        Then each weight is exactly w - eta * g
        """
        net = random_network([3, 4, 2], 12, seed=0)
        rng = np.random.default_rng(1)
        cfg = _flat(eta=0.05, momentum=0.0)
        for _ in range(5):
            grads = {e.key: float(rng.normal()) for e in net.edges}
            expected = [e.weight - 0.05 * grads[e.key] for e in net.edges]

            step(net, _grads(grads), cfg)

            assert [e.weight for e in net.edges] == expected


class TestRates:
    def test_mixed_ages_get_their_own_rates(self):
        """
        Given edges of ages 0, 10, 100 and 1000 and a warmup ramp
        When a step is taken at step 3
        Then each applied rate equals global(3) * (floor + excess * h / (h + age))
        """
        ages = [0, 10, 100, 1000]
        net = Network([1, 4], [Edge(n(0, 0), n(1, i), 0.0, age=a) for i, a in enumerate(ages)])
        ramp = CyclicSchedule(base=0.5, peak=1.0, floor=0.2, warmup_steps=4, decay_steps=4)
        schedule = CredibilitySchedule(
            eta_new=0.2, eta_floor=0.02, halflife=50.0, global_scale=ramp
        )
        cfg = OptimizerConfig(schedule=schedule)

        report = step(net, _grads({e.key: 1.0 for e in net.edges}), cfg, step_index=3)

        global_scale = 0.5 + (1.0 - 0.5) * 3 / 4
        for edge, age in zip(net.edges, ages, strict=True):
            expected = global_scale * (0.02 + 0.18 * 50.0 / (50.0 + age))
            assert report.rates[edge.key] == pytest.approx(expected, rel=1e-12)
            assert edge.age == age + 1

    def test_young_edges_learn_faster(self):
        """
        Given a credibility schedule with halflife 20
        When the rate is read at growing ages
        Then it never rises and starts at eta_new
        """
        schedule = CredibilitySchedule(eta_new=0.1, eta_floor=0.001, halflife=20.0)

        rates = [effective_rate(age, 0, schedule) for age in range(0, 200, 10)]

        assert rates == sorted(rates, reverse=True)
        assert rates[0] == pytest.approx(0.1)

    def test_rate_boost_for_persistently_large_gradients(self):
        """
        Given ten old edges where one sees a much larger gradient
        When a step with rate boost (90th percentile, factor 2) is taken
        Then only that edge runs at double its credibility rate
        """
        net = Network([1, 10], [Edge(n(0, 0), n(1, i), 0.0, age=1000) for i in range(10)])
        cfg = OptimizerConfig(rate_boost=True)
        grads = {e.key: 0.01 for e in net.edges}
        big = net.edges[3].key
        grads[big] = 1.0

        report = step(net, _grads(grads), cfg, step_index=0)

        base = effective_rate(1000, 0, cfg.schedule)
        assert report.boosted == 1
        assert report.rates[big] == pytest.approx(2 * base)
        assert report.rates[net.edges[0].key] == pytest.approx(base)

    def test_boost_never_exceeds_new_edge_rate(self):
        """
        Given two new edges and a boost threshold at the 10th percentile
        When the larger-gradient edge is boosted
        Then its rate is capped at eta_new
        """
        net = Network([1, 2], [Edge(n(0, 0), n(1, 0), 0.0), Edge(n(0, 0), n(1, 1), 0.0)])
        cfg = OptimizerConfig(rate_boost=True, rate_boost_percentile=10.0)
        grads = {net.edges[0].key: 0.0, net.edges[1].key: 5.0}

        report = step(net, _grads(grads), cfg, step_index=0)

        assert report.rates[net.edges[1].key] == pytest.approx(cfg.schedule.eta_new)


class TestClipping:
    def test_global_norm_clip(self):
        """
        Given gradients (3, 4) and a clip norm of 1
        When a step without momentum is taken
        Then the gradients are scaled by 0.2
        """
        net = Network([1, 2], [Edge(n(0, 0), n(1, 0), 0.0), Edge(n(0, 0), n(1, 1), 0.0)])
        keys = [e.key for e in net.edges]

        report = step(
            net, _grads({keys[0]: 3.0, keys[1]: 4.0}), _flat(momentum=0.0, gradient_clip=1.0)
        )

        assert report.clip_scale == pytest.approx(0.2)
        assert [e.momentum for e in net.edges] == pytest.approx([0.6, 0.8])

    def test_small_gradients_are_not_clipped(self):
        """
        Given a gradient below the clip norm
        When a step is taken
        Then the clip scale is 1
        """
        report = step(_single_edge(), _grads({EDGE: 0.1}), _flat(gradient_clip=1.0))

        assert report.clip_scale == 1.0


class TestNormParameters:
    def test_scale_and_shift_use_the_network_age(self):
        """
        Given a network that has taken 30 steps
        When norm gradients are applied
        Then scale and shift move at the rate of a 30-step-old edge
        """
        net = Network([1, 2, 1])
        net.step_count = 30
        cfg = OptimizerConfig(momentum_coeff=0.0)
        dscale, dshift = np.array([1.0, -2.0]), np.array([0.5, 0.0])

        step(net, _grads({}, {1: (dscale, dshift)}), cfg, step_index=30)

        rate = effective_rate(30, 30, cfg.schedule)
        np.testing.assert_allclose(net.norm_state[1].scale, 1.0 - rate * dscale)
        np.testing.assert_allclose(net.norm_state[1].shift, -rate * dshift)
        assert net.step_count == 31


class TestErrors:
    def test_stale_gradients_are_ignored_with_a_warning(self, caplog):
        """
        Given a gradient for an edge the network no longer has
        When a step is taken
        Then it is reported as stale with a warning and the live edge is unchanged
        """
        net = _single_edge(weight=0.3)
        gone = (n(0, 0), n(1, 5))

        with caplog.at_level(logging.WARNING, logger="livewire.plasticity"):
            report = step(net, _grads({EDGE: 0.0, gone: 1.0}), _flat())

        assert report.stale == [gone]
        assert net.edges[0].weight == 0.3
        assert "stale gradient" in caplog.text

    def test_missing_gradient_counts_as_zero(self):
        """
        Given an edge without a gradient entry
        When a step is taken
        Then its weight is unchanged and it still ages
        """
        net = _single_edge(weight=0.3)

        step(net, _grads({}), _flat())

        assert net.edges[0].weight == 0.3
        assert net.edges[0].age == 1

    def test_non_finite_gradient_is_refused(self):
        """
        Given a NaN gradient
        When a step is taken
        Then PlasticityError is raised before any weight or counter changes
        """
        net = _single_edge(weight=0.3)

        with pytest.raises(PlasticityError, match="non-finite gradient"):
            step(net, _grads({EDGE: float("nan")}), _flat())
        assert net.edges[0].weight == 0.3
        assert net.step_count == 0

    def test_non_finite_norm_gradient_is_refused(self):
        """
        Given an infinite scale gradient in layer 1
        When a step is taken
        Then PlasticityError names the layer
        """
        net = Network([1, 2, 1])
        bad = (np.array([np.inf, 0.0]), np.zeros(2))

        with pytest.raises(PlasticityError, match="layer 1"):
            step(net, _grads({}, {1: bad}), _flat())
