"""Tests for TuckER training and the gradient check."""

import numpy as np
import pytest

from cti_graph_toolkit.config import TuckerConfig
from cti_graph_toolkit.exceptions import ContractError, TrainingError
from cti_graph_toolkit.ontology import RelationType, Triple
from cti_graph_toolkit.tucker.model import TuckerModel
from cti_graph_toolkit.tucker.training import (
    analytic_gradients,
    gradient_check,
    group_triples,
    loss_and_gradients,
    train,
    vocabulary,
)

FAST = dict(d_e=8, d_r=4, batch_size=16, iterations=5, seed=3)


def _random_case(rng):
    n_e = int(rng.integers(3, 7))
    d_e = int(rng.integers(1, 9))
    d_r = int(rng.integers(1, 9))
    ids = [f"Malware:M{i}" for i in range(n_e)]
    relations = [RelationType.USES, RelationType.TARGETS, RelationType.HAS_ALIAS]
    triples = [
        Triple(ids[int(rng.integers(n_e))], relations[int(rng.integers(3))],
               ids[int(rng.integers(n_e))])
        for _ in range(int(rng.integers(1, 5)))
    ]
    entity_ids, relation_ids = vocabulary(triples, ids)
    config = TuckerConfig(d_e=d_e, d_r=d_r, init_scale=0.5,
                          seed=int(rng.integers(1_000_000)))
    return TuckerModel.initialize(entity_ids, relation_ids, config), triples


class TestGrouping:
    """Training data layout."""

    def test_vocabulary_sorted(self, planted):
        """Entities and relations come back sorted and unique."""
        entity_ids, relation_ids = vocabulary(planted)
        assert len(entity_ids) == 40
        assert entity_ids == sorted(entity_ids)
        assert relation_ids == ["has", "targets", "uses"]

    def test_extra_entities(self):
        """Entities without triples can join the vocabulary."""
        triples = [Triple("Malware:A", RelationType.USES, "AttackPattern:T1")]
        entity_ids, _ = vocabulary(triples, ["Location:Spain"])
        assert "Location:Spain" in entity_ids

    def test_groups_by_head_and_relation(self, planted):
        """Each (head, relation) pair is one group holding all its tails."""
        model = TuckerModel.initialize(*vocabulary(planted), TuckerConfig(d_e=2, d_r=2))
        data = group_triples(planted, model)
        assert len(data) == 16 * 3
        uses = model.relation_index(RelationType.USES)
        head = model.entity_index("Malware:M00")
        row = [i for i, (h, r) in enumerate(data.pairs.tolist()) if (h, r) == (head, uses)]
        assert len(data.tails[row[0]]) == 3

    def test_alias_trains_both_ways(self):
        """hasAlias facts form groups from both ends."""
        triples = [Triple("Malware:A", RelationType.HAS_ALIAS, "Malware:B")]
        model = TuckerModel.initialize(*vocabulary(triples), TuckerConfig(d_e=2, d_r=2))
        data = group_triples(triples, model)
        assert len(data) == 2

    def test_label_smoothing(self):
        """Targets are (1 - ls) * y + ls / n_e."""
        triples = [Triple("Malware:A", RelationType.USES, "AttackPattern:T1")]
        model = TuckerModel.initialize(*vocabulary(triples), TuckerConfig(d_e=2, d_r=2))
        data = group_triples(triples, model)
        y = data.targets(np.arange(1), 2, 0.1)
        assert sorted(y[0].tolist()) == pytest.approx([0.05, 0.95])


class TestGradients:
    """Analytic gradients against finite differences."""

    def test_random_models(self):
        """Twenty random small models pass the gradient check."""
        rng = np.random.default_rng(2024)
        for _ in range(20):
            model, triples = _random_case(rng)
            assert gradient_check(model, triples, n_samples=40) <= 1e-4

    def test_single_triple(self, planted):
        """A single triple is accepted."""
        model = TuckerModel.initialize(*vocabulary(planted), TuckerConfig(d_e=4, d_r=3))
        assert gradient_check(model, planted[0]) <= 1e-4

    def test_detects_wrong_gradient(self, planted):
        """A shifted gradient fails the check."""
        model = TuckerModel.initialize(*vocabulary(planted), TuckerConfig(d_e=4, d_r=3))

        def shifted(m, data):
            return tuple(g + 0.1 for g in analytic_gradients(m, data))

        assert gradient_check(model, planted[:6], gradient_fn=shifted) > 0.1

    def test_epsilon_range(self, planted):
        """Steps outside (0, 1e-3] are refused."""
        model = TuckerModel.initialize(*vocabulary(planted), TuckerConfig(d_e=2, d_r=2))
        with pytest.raises(ContractError):
            gradient_check(model, planted[:2], epsilon=0.01)

    def test_zero_core(self, planted):
        """With a zero core only the core receives gradient, and the loss is ln 2."""
        model = TuckerModel.initialize(*vocabulary(planted), TuckerConfig(d_e=4, d_r=3))
        zero = model.with_parameters(model.entity_matrix, model.relation_matrix,
                                     np.zeros_like(model.core_tensor))
        loss, (dE, dR, dW) = loss_and_gradients(zero, planted[:10])
        assert loss == pytest.approx(np.log(2.0))
        assert not dE.any()
        assert not dR.any()
        assert np.abs(dW).max() > 0

    def test_empty_triples(self, planted):
        """Loss of nothing is a contract violation."""
        model = TuckerModel.initialize(*vocabulary(planted), TuckerConfig(d_e=2, d_r=2))
        with pytest.raises(ContractError):
            loss_and_gradients(model, [])


class TestTrain:
    """End-to-end training."""

    def test_empty(self):
        """Training needs triples."""
        with pytest.raises(ContractError):
            train([], TuckerConfig(**FAST))

    def test_trace_length(self, planted):
        """One loss value per iteration."""
        result = train(planted, TuckerConfig(**FAST))
        assert len(result.loss_trace) == 5
        assert result.final_loss == result.loss_trace[-1]
        assert result.model.n_entities == 40

    def test_deterministic(self, planted):
        """Equal seeds give bitwise-equal parameters and traces."""
        a = train(planted, TuckerConfig(**FAST))
        b = train(planted, TuckerConfig(**FAST))
        assert a.model.parameters_equal(b.model)
        assert a.loss_trace == b.loss_trace

    def test_seed_matters(self, planted):
        """Different seeds give different parameters."""
        a = train(planted, TuckerConfig(**FAST))
        b = train(planted, TuckerConfig(**{**FAST, "seed": 4}))
        assert not a.model.parameters_equal(b.model)

    def test_workers_deterministic(self, planted):
        """Parallel gradients are reproducible and match the serial run."""
        parallel = TuckerConfig(**{**FAST, "workers": 2})
        a = train(planted, parallel)
        b = train(planted, parallel)
        serial = train(planted, TuckerConfig(**FAST))
        assert a.model.parameters_equal(b.model)
        assert np.allclose(a.model.entity_matrix, serial.model.entity_matrix, atol=1e-6)

    def test_loss_decreases_on_planted_graph(self, planted):
        """Training drives the loss down by at least 90%."""
        config = TuckerConfig(d_e=20, d_r=20, iterations=400, learning_rate=0.005,
                              label_smoothing=0.0, input_dropout=0.0,
                              hidden_dropout1=0.0, hidden_dropout2=0.0, seed=1)
        trace = train(planted, config).loss_trace
        assert trace[-1] <= 0.1 * trace[0]

    def test_divergence_raises(self, planted):
        """A huge learning rate ends in TrainingError."""
        config = TuckerConfig(**{**FAST, "learning_rate": 1e200})
        with np.errstate(all="ignore"):
            with pytest.raises(TrainingError):
                train(planted, config)
