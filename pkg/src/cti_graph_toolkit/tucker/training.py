"""
TuckER Training
===============

1-N training of a TuckER model with Adam, plus a finite-difference
gradient check.

Each (head, relation) pair present in the training triples forms one
group whose target vector marks every true tail. An iteration is one
pass over the groups in a seeded shuffled order, in mini-batches of
``batch_size`` groups. The loss is binary cross-entropy on the logits of
all tails, averaged over batch rows and entities, with label smoothing
``(1 - ls) * y + ls / n_e``. ``hasAlias`` facts train in both orientations.

Usage:
    >>> from cti_graph_toolkit.tucker.training import train
    >>> result = train(kg.triples, TuckerConfig(iterations=200, seed=1))
    >>> result.model, result.loss_trace[-1]
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..config import TuckerConfig
from ..exceptions import ContractError, TrainingError
from ..ontology import Entity, Triple
from .model import TuckerModel

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# denominator floor of the per-coordinate relative error
GRADIENT_FLOOR = 1e-5

Params = Tuple[np.ndarray, np.ndarray, np.ndarray]
GradientFn = Callable[[TuckerModel, "TrainingData"], Params]


# =============================================================================
# TRAINING DATA
# =============================================================================

@dataclass(frozen=True)
class TrainingData:
    """
    Training triples grouped by (head, relation) in index space.

    Attributes:
        pairs: ``(G, 2)`` int array of (head index, relation index), sorted
        tails: Tail indices per group, aligned with ``pairs``
    """

    pairs: np.ndarray
    tails: Tuple[Tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.tails)

    def targets(self, rows: np.ndarray, n_entities: int, label_smoothing: float) -> np.ndarray:
        y = np.zeros((len(rows), n_entities))
        for out_row, group in enumerate(rows):
            y[out_row, list(self.tails[group])] = 1.0
        if label_smoothing:
            y = (1.0 - label_smoothing) * y + label_smoothing / n_entities
        return y


def vocabulary(
    triples: Sequence[Triple], entities: Optional[Iterable[str]] = None
) -> Tuple[List[str], List[str]]:
    """Sorted entity ids (triple endpoints plus ``entities``) and sorted relation names."""
    entity_ids = {t.head for t in triples} | {t.tail for t in triples}
    if entities is not None:
        entity_ids |= set(entities)
    relations = {t.relation.value for t in triples}
    return sorted(entity_ids), sorted(relations)


def group_triples(triples: Iterable[Triple], model: TuckerModel) -> TrainingData:
    """Index triples against ``model``'s vocabulary and group tails by (head, relation)."""
    groups: Dict[Tuple[int, int], set] = {}
    for t in triples:
        h = model.entity_index(t.head)
        r = model.relation_index(t.relation)
        tl = model.entity_index(t.tail)
        groups.setdefault((h, r), set()).add(tl)
        if t.relation.symmetric:
            groups.setdefault((tl, r), set()).add(h)
    keys = sorted(groups)
    pairs = np.array(keys, dtype=np.int64).reshape(-1, 2)
    return TrainingData(pairs, tuple(tuple(sorted(groups[k])) for k in keys))


# =============================================================================
# LOSS AND GRADIENTS
# =============================================================================

@dataclass
class _Masks:
    """Inverted-dropout masks for one batch; None means no dropout."""
    input: Optional[np.ndarray] = None
    hidden1: Optional[np.ndarray] = None
    hidden2: Optional[np.ndarray] = None


def _dropout_mask(rng: np.random.Generator, shape: Tuple[int, ...], rate: float):
    if rate <= 0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))


def _loss_and_grads(
    params: Params,
    heads: np.ndarray,
    rels: np.ndarray,
    targets: np.ndarray,
    masks: _Masks,
    norm: float,
) -> Tuple[float, Params]:
    """Summed BCE divided by ``norm`` and its gradients for one block of rows."""
    E, R, W = params
    d_e, d_r = W.shape[0], W.shape[1]
    B = len(heads)

    x0 = E[heads]
    if masks.input is not None:
        x0 = x0 * masks.input
    # W laid out as (d_r, d_e * d_e) so a batch of slices is one matmul
    Wt = W.transpose(1, 0, 2).reshape(d_r, d_e * d_e)
    Wr = (R[rels] @ Wt).reshape(B, d_e, d_e)
    if masks.hidden1 is not None:
        Wr = Wr * masks.hidden1
    x1 = np.einsum("bi,bij->bj", x0, Wr)
    if masks.hidden2 is not None:
        x1 = x1 * masks.hidden2
    logits = x1 @ E.T

    loss = float(_bce_with_logits(logits, targets).sum() / norm)
    G = (expit(logits) - targets) / norm

    dE = G.T @ x1
    dx1 = G @ E
    if masks.hidden2 is not None:
        dx1 = dx1 * masks.hidden2
    dWr = x0[:, :, None] * dx1[:, None, :]
    dx0 = np.einsum("bij,bj->bi", Wr, dx1)
    if masks.hidden1 is not None:
        dWr = dWr * masks.hidden1
    if masks.input is not None:
        dx0 = dx0 * masks.input
    np.add.at(dE, heads, dx0)

    flat = dWr.reshape(B, d_e * d_e)
    dW = (R[rels].T @ flat).reshape(d_r, d_e, d_e).transpose(1, 0, 2)
    dR = np.zeros_like(R)
    np.add.at(dR, rels, flat @ Wt.T)
    return loss, (dE, dR, np.ascontiguousarray(dW))


def _batch_step(
    params: Params,
    data: TrainingData,
    rows: np.ndarray,
    config: TuckerConfig,
    rng: Optional[np.random.Generator],
    label_smoothing: float,
    pool: Optional[ThreadPoolExecutor] = None,
) -> Tuple[float, Params]:
    E, _, W = params
    d_e = W.shape[0]
    heads, rels = data.pairs[rows, 0], data.pairs[rows, 1]
    targets = data.targets(rows, E.shape[0], label_smoothing)
    B = len(rows)
    norm = float(B * E.shape[0])

    masks = _Masks()
    if rng is not None:
        masks = _Masks(
            _dropout_mask(rng, (B, d_e), config.input_dropout),
            _dropout_mask(rng, (B, d_e, d_e), config.hidden_dropout1),
            _dropout_mask(rng, (B, d_e), config.hidden_dropout2),
        )

    if pool is None or B < 2:
        return _loss_and_grads(params, heads, rels, targets, masks, norm)

    chunks = np.array_split(np.arange(B), min(config.workers, B))

    def work(idx: np.ndarray) -> Tuple[float, Params]:
        sub = _Masks(*(m[idx] if m is not None else None
                       for m in (masks.input, masks.hidden1, masks.hidden2)))
        return _loss_and_grads(params, heads[idx], rels[idx], targets[idx], sub, norm)

    # map() yields in submission order, so the reduction order is fixed
    results = list(pool.map(work, chunks))
    loss, grads = results[0][0], [g.copy() for g in results[0][1]]
    for part_loss, part_grads in results[1:]:
        loss += part_loss
        for acc, g in zip(grads, part_grads):
            acc += g
    return loss, (grads[0], grads[1], grads[2])


def loss_and_gradients(
    model: TuckerModel,
    triples: Sequence[Triple],
    label_smoothing: Optional[float] = None,
) -> Tuple[float, Params]:
    """
    Full-batch loss and analytic gradients without dropout.

    Returns:
        (loss, (dE, dR, dW))
    """
    data = group_triples(triples, model)
    if not len(data):
        raise ContractError("no triples to evaluate")
    ls = model.config.label_smoothing if label_smoothing is None else label_smoothing
    params = (model.entity_matrix, model.relation_matrix, model.core_tensor)
    return _batch_step(params, data, np.arange(len(data)), model.config, None, ls)


def _full_loss(model: TuckerModel, data: TrainingData, label_smoothing: float) -> float:
    params = (model.entity_matrix, model.relation_matrix, model.core_tensor)
    return _batch_step(params, data, np.arange(len(data)), model.config, None,
                       label_smoothing)[0]


# =============================================================================
# TRAINING
# =============================================================================

@dataclass
class _Adam:
    lr: float
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    step_count: int = 0

    def step(self, params: List[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        c1 = 1.0 - ADAM_BETA1 ** self.step_count
        c2 = 1.0 - ADAM_BETA2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


@dataclass
class TrainingResult:
    """Final model and the mean training loss of every iteration."""

    model: TuckerModel
    loss_trace: List[float]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")


def train(
    triples: Sequence[Triple],
    config: Optional[TuckerConfig] = None,
    entities: Optional[Union[Mapping[str, Entity], Iterable[str]]] = None,
) -> TrainingResult:
    """
    Train a TuckER model.

    One seeded generator drives initialization, then the per-iteration
    shuffles and dropout masks, so equal inputs give bitwise-equal models.

    Args:
        triples: Training triples
        config: Training settings (defaults: d=50, batch 64, 1000 iterations, lr 0.001)
        entities: Extra entity ids to include in the vocabulary

    Returns:
        TrainingResult with the model and per-iteration loss trace

    Raises:
        ContractError: If ``triples`` is empty
        TrainingError: If the loss becomes non-finite
    """
    config = config or TuckerConfig()
    triples = list(triples)
    if not triples:
        raise ContractError("cannot train on an empty triple set")

    entity_ids, relation_ids = vocabulary(triples, entities)
    rng = np.random.default_rng(config.seed)
    model = TuckerModel.initialize(entity_ids, relation_ids, config, rng)
    data = group_triples(triples, model)
    logger.info("training %r on %d triples in %d groups", model, len(triples), len(data))

    params = [np.array(model.entity_matrix), np.array(model.relation_matrix),
              np.array(model.core_tensor)]
    adam = _Adam(config.learning_rate)
    trace: List[float] = []
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for iteration in range(1, config.iterations + 1):
            order = rng.permutation(len(data))
            total = 0.0
            for start in range(0, len(data), config.batch_size):
                rows = order[start:start + config.batch_size]
                loss, grads = _batch_step(tuple(params), data, rows, config, rng,
                                          config.label_smoothing, pool)
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at iteration {iteration}, batch starting {start}; "
                        f"try a smaller learning_rate (now {config.learning_rate})"
                    )
                adam.step(params, grads)
                total += loss * len(rows)
            trace.append(total / len(data))
            if iteration == 1 or iteration % 100 == 0:
                logger.debug("iteration %d loss %.6f", iteration, trace[-1])
    finally:
        if pool is not None:
            pool.shutdown()

    if not all(np.isfinite(p).all() for p in params):
        raise TrainingError("parameters became non-finite")
    return TrainingResult(model.with_parameters(*params), trace)


# =============================================================================
# GRADIENT CHECK
# =============================================================================

def analytic_gradients(model: TuckerModel, data: TrainingData) -> Params:
    """Gradients of the full-batch loss on ``data`` without dropout."""
    params = (model.entity_matrix, model.relation_matrix, model.core_tensor)
    return _batch_step(params, data, np.arange(len(data)), model.config, None,
                       model.config.label_smoothing)[1]


def gradient_check(
    model: TuckerModel,
    triples: Union[Triple, Sequence[Triple]],
    epsilon: float = 1e-5,
    n_samples: int = 30,
    seed: int = 0,
    gradient_fn: Optional[GradientFn] = None,
) -> float:
    """
    Compare analytic gradients with central finite differences.

    The loss is the full-batch training loss on ``triples`` without dropout.
    A random subset of parameter coordinates is checked; the relative error
    of one coordinate is ``|a - n| / max(|a| + |n|, 1e-5)``.

    Args:
        model: Model at the point to check
        triples: One triple or several
        epsilon: Finite-difference step, in (0, 1e-3]
        n_samples: Coordinates checked
        seed: Coordinate sampling seed
        gradient_fn: Replacement for the analytic gradient (used to test the check itself)

    Returns:
        Maximum relative error over the sampled coordinates
    """
    if not 0 < epsilon <= 1e-3:
        raise ContractError("epsilon must lie in (0, 1e-3]")
    batch = [triples] if isinstance(triples, Triple) else list(triples)
    data = group_triples(batch, model)
    if not len(data):
        raise ContractError("no triples to check")
    analytic = (gradient_fn or analytic_gradients)(model, data)

    base = [np.array(model.entity_matrix), np.array(model.relation_matrix),
            np.array(model.core_tensor)]
    sizes = [p.size for p in base]
    rng = np.random.default_rng(seed)
    flat_choices = rng.choice(sum(sizes), size=min(n_samples, sum(sizes)), replace=False)
    ls = model.config.label_smoothing

    worst = 0.0
    for flat in sorted(int(c) for c in flat_choices):
        which = 0
        while flat >= sizes[which]:
            flat -= sizes[which]
            which += 1
        coord = np.unravel_index(flat, base[which].shape)

        def loss_at(delta: float) -> float:
            shifted = [p.copy() for p in base]
            shifted[which][coord] += delta
            return _full_loss(model.with_parameters(*shifted), data, ls)

        numeric = (loss_at(epsilon) - loss_at(-epsilon)) / (2 * epsilon)
        a = float(analytic[which][coord])
        error = abs(a - numeric) / max(abs(a) + abs(numeric), GRADIENT_FLOOR)
        worst = max(worst, error)
    logger.debug("gradient check: max relative error %.3e", worst)
    return worst
