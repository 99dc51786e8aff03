"""Pre-training objectives and the alternating training loop.

Three objectives over one shared encoder: masked-token prediction over the
comment/code block, masked-edge prediction over variable nodes, and
node-to-code alignment. Structure tasks hide their target relations in the
attention mask and score candidate pairs by a sigmoid dot product of the
final-layer representations (no extra head).
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .dfg import extract_dfg
from .encoding import (
    EmptyCorpus,
    EncodedExample,
    Limits,
    Vocabulary,
    additive_mask,
    build_attention_mask,
    build_vocab,
    encode_example,
)
from .model import (
    Activations,
    ModelConfig,
    ModelParams,
    NonFiniteLoss,
    compute_gradients,
    forward,
    init_params,
    mlm_logits,
)
from .optim import AdamState, adam_step, init_adam

MASK_FRACTION = 0.15
NODE_SAMPLE_FRACTION = 0.2


class NoMaskablePositions(ValueError):
    pass


class NoNodes(ValueError):
    pass


class NoEdges(ValueError):
    pass


class EmptyCounts(ValueError):
    pass


class DivergedLoss(ArithmeticError):
    pass


class CorpusFormatError(ValueError):
    pass


# corpus -------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusItem:
    code: str
    docstring: str
    lang: str


def load_corpus(path) -> list[CorpusItem]:
    items: list[CorpusItem] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            items.append(CorpusItem(code=obj["code"], docstring=obj["docstring"], lang=obj["lang"]))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise CorpusFormatError(f"line {lineno}: {e}") from e
    if not items:
        raise EmptyCorpus(f"no corpus entries in {path}")
    return items


def encode_corpus(
    items: list[CorpusItem],
    vocab: Vocabulary,
    limits: Limits = Limits(),
    max_positions: int = 512,
    use_dataflow: bool = True,
) -> list[EncodedExample]:
    encoded = []
    for item in items:
        dfg = extract_dfg(item.code)
        encoded.append(
            encode_example(
                item.docstring,
                item.code,
                dfg,
                vocab,
                limits=limits,
                max_positions=max_positions,
                include_dataflow=use_dataflow,
            )
        )
    return encoded


# masked-token objective -----------------------------------------------------


@dataclass(frozen=True)
class MlmBatchTarget:
    masked_ids: tuple[int, ...]
    positions: tuple[int, ...]
    original_ids: tuple[int, ...]


def select_mlm_targets(example: EncodedExample, rng: np.random.Generator, vocab_size: int) -> MlmBatchTarget:
    """Pick round(15%) of comment/code positions (min 1) and corrupt them:
    80% mask token, 10% random non-reserved token, 10% unchanged."""
    from .encoding import MASK, RESERVED

    maskable = example.maskable_positions
    if not maskable:
        raise NoMaskablePositions("example has no comment or code tokens")
    count = max(1, int(MASK_FRACTION * len(maskable) + 0.5))
    chosen = sorted(int(p) for p in rng.choice(len(maskable), size=count, replace=False))
    positions = tuple(maskable[i] for i in chosen)
    ids = list(example.ids)
    originals = tuple(ids[p] for p in positions)
    reserved_count = len(RESERVED)
    for p in positions:
        u = rng.random()
        if u < 0.8:
            ids[p] = MASK
        elif u < 0.9 and vocab_size > reserved_count:
            ids[p] = int(rng.integers(reserved_count, vocab_size))
    return MlmBatchTarget(masked_ids=tuple(ids), positions=positions, original_ids=originals)


def mlm_loss(activations: Activations, targets: MlmBatchTarget, params: ModelParams) -> Tensor:
    if not targets.positions:
        raise ValueError("no masked positions to score")
    rows = ag.take_rows(activations.final, targets.positions)
    log_probs = ag.log_softmax(mlm_logits(params, rows), axis=-1)
    picked = ag.gather_cols(log_probs, targets.original_ids)
    return ag.mul(ag.tmean(picked), -1.0)


# structure objectives -------------------------------------------------------


@dataclass(frozen=True)
class EdgeTargetSet:
    sampled_positions: tuple[int, ...]
    masked_edges: tuple[tuple[int, int], ...]  # <src_pos, dst_pos>
    candidates: tuple[tuple[int, int], ...]
    labels: tuple[int, ...]
    mask: np.ndarray  # boolean allow-matrix with the masked edges blocked


@dataclass(frozen=True)
class AlignTargetSet:
    sampled_positions: tuple[int, ...]
    masked_links: tuple[tuple[int, int], ...]  # <node_pos, code_pos>
    candidates: tuple[tuple[int, int], ...]
    labels: tuple[int, ...]
    mask: np.ndarray


def _sample_node_subset(example: EncodedExample, rng: np.random.Generator) -> tuple[int, ...]:
    nodes = example.node_positions
    count = math.ceil(NODE_SAMPLE_FRACTION * len(nodes))
    chosen = rng.choice(len(nodes), size=count, replace=False)
    return tuple(sorted(nodes[int(i)] for i in chosen))


def _sample_negatives(pool: list, count: int, rng: np.random.Generator) -> list:
    take = min(count, len(pool))
    if take == 0:
        return []
    idx = rng.choice(len(pool), size=take, replace=False)
    return [pool[int(i)] for i in sorted(idx)]


def sample_edge_targets(example: EncodedExample, rng: np.random.Generator) -> EdgeTargetSet:
    nodes = example.node_positions
    if not nodes:
        raise NoNodes("example has no variable nodes")
    edges = sorted(example.node_edges)
    if not edges:
        raise NoEdges("example has no data-flow edges")
    sampled = _sample_node_subset(example, rng)
    in_sample = set(sampled)
    positives = [e for e in edges if e[0] in in_sample or e[1] in in_sample]
    # Negative pool: pairs touching the sample that are not edges. Self pairs
    # are excluded (a dot-product score of a vector with itself cannot fall
    # below 0.5) and so are mirrors of true edges: the pair scorer is
    # symmetric, so a reversed edge would carry a contradictory label.
    edge_set = set(edges)
    mirrored = {(b, a) for a, b in edge_set}
    pool = sorted(
        ({(a, b) for a in sampled for b in nodes} | {(a, b) for a in nodes for b in sampled})
        - edge_set
        - mirrored
        - {(a, a) for a in sampled}
    )
    negatives = _sample_negatives(pool, len(positives), rng)
    allow = np.array(build_attention_mask(example))
    for src, dst in positives:
        allow[dst, src] = False
    allow.flags.writeable = False
    return EdgeTargetSet(
        sampled_positions=sampled,
        masked_edges=tuple(positives),
        candidates=tuple(positives + negatives),
        labels=tuple([1] * len(positives) + [0] * len(negatives)),
        mask=allow,
    )


def sample_align_targets(example: EncodedExample, rng: np.random.Generator) -> AlignTargetSet:
    nodes = example.node_positions
    if not nodes:
        raise NoNodes("example has no variable nodes")
    sampled = _sample_node_subset(example, rng)
    in_sample = set(sampled)
    links = sorted(example.node_token_links)
    positives = [l for l in links if l[0] in in_sample]
    pool = sorted({(v, c) for v in sampled for c in example.code_positions} - set(links))
    negatives = _sample_negatives(pool, len(positives), rng)
    allow = np.array(build_attention_mask(example))
    for node_pos, code_pos in positives:
        allow[node_pos, code_pos] = False
        allow[code_pos, node_pos] = False
    allow.flags.writeable = False
    return AlignTargetSet(
        sampled_positions=sampled,
        masked_links=tuple(positives),
        candidates=tuple(positives + negatives),
        labels=tuple([1] * len(positives) + [0] * len(negatives)),
        mask=allow,
    )


def _pair_score_loss(activations: Activations, candidates, labels) -> Tensor:
    h = activations.final
    i_idx = [i for i, _ in candidates]
    j_idx = [j for _, j in candidates]
    dots = ag.tsum(ag.mul(ag.take_rows(h, i_idx), ag.take_rows(h, j_idx)), axis=1)
    y = np.asarray(labels, dtype=h.dtype)
    pos_term = ag.mul(ag.log_sigmoid(dots), y)
    neg_term = ag.mul(ag.log_sigmoid(ag.mul(dots, -1.0)), 1.0 - y)
    return ag.mul(ag.tsum(ag.add(pos_term, neg_term)), -1.0 / len(candidates))


def edge_pred_loss(activations: Activations, target_set: EdgeTargetSet, params: ModelParams) -> Tensor:
    if not target_set.candidates:
        raise ValueError("empty edge candidate set")
    return _pair_score_loss(activations, target_set.candidates, target_set.labels)


def node_align_loss(activations: Activations, target_set: AlignTargetSet, params: ModelParams) -> Tensor:
    if not target_set.candidates:
        raise ValueError("empty alignment candidate set")
    return _pair_score_loss(activations, target_set.candidates, target_set.labels)


# language sampling ----------------------------------------------------------


@dataclass(frozen=True)
class LanguageSampler:
    languages: tuple[str, ...]
    counts: tuple[int, ...]
    alpha: float
    probabilities: tuple[float, ...]

    def sample(self, rng: np.random.Generator) -> str:
        i = int(rng.choice(len(self.languages), p=np.asarray(self.probabilities)))
        return self.languages[i]


def language_sampler(counts, alpha: float = 0.7) -> LanguageSampler:
    """Smoothed multinomial over languages: q_i proportional to p_i^alpha."""
    if isinstance(counts, Mapping):
        items = list(counts.items())
    else:
        items = [(str(i), int(c)) for i, c in enumerate(counts)]
    if not items:
        raise EmptyCounts("no language counts given")
    if any(c <= 0 for _, c in items):
        raise ValueError("language counts must be positive")
    raw = np.array([c for _, c in items], dtype=np.float64)
    p = raw / raw.sum()
    if alpha == 1.0:
        q = p
    else:
        w = p**alpha
        q = w / w.sum()
    return LanguageSampler(
        languages=tuple(name for name, _ in items),
        counts=tuple(int(c) for _, c in items),
        alpha=float(alpha),
        probabilities=tuple(float(x) for x in q),
    )


# training loop --------------------------------------------------------------


@dataclass(frozen=True)
class Objectives:
    mlm: bool = True
    edge_pred: bool = True
    node_align: bool = True


@dataclass
class PretrainResult:
    params: ModelParams
    vocab: Vocabulary
    loss_log: list[tuple[int, str, float]] = field(default_factory=list)
    adam: AdamState | None = None


def _mean(tensors: list[Tensor]) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = ag.add(total, t)
    return ag.mul(total, 1.0 / len(tensors))


def pretrain_run(
    corpus: list[CorpusItem],
    config: ModelConfig,
    objectives: Objectives = Objectives(),
    steps: int = 100,
    rng=None,
    *,
    vocab: Vocabulary | None = None,
    limits: Limits = Limits(),
    batch_size: int = 8,
    lr: float = 1e-3,
    use_dataflow: bool = True,
    params: ModelParams | None = None,
) -> PretrainResult:
    """Alternating loop: even steps pair MLM with edge prediction, odd steps
    with node alignment (each only when enabled). Every batch is drawn from a
    single language chosen by the smoothed multinomial sampler."""
    if not corpus:
        raise EmptyCorpus("pretraining corpus is empty")
    if not objectives.mlm:
        raise ValueError("the masked-token objective cannot be disabled")
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(0 if rng is None else rng)
    if vocab is None:
        vocab = build_vocab([(it.docstring, it.code) for it in corpus], config.vocab_size)
    encoded = encode_corpus(corpus, vocab, limits=limits, max_positions=config.max_positions, use_dataflow=use_dataflow)
    by_lang: dict[str, list[int]] = {}
    for i, item in enumerate(corpus):
        by_lang.setdefault(item.lang, []).append(i)
    sampler = language_sampler({lang: len(by_lang[lang]) for lang in sorted(by_lang)})
    if params is None:
        params = init_params(config)
    state = init_adam(params)
    log: list[tuple[int, str, float]] = []

    for step in range(steps):
        lang_pool = by_lang[sampler.sample(rng)]
        picks = rng.choice(len(lang_pool), size=batch_size, replace=len(lang_pool) < batch_size)
        batch = [encoded[lang_pool[int(i)]] for i in picks]
        structure = "edgepred" if step % 2 == 0 else "nodealign"
        if structure == "edgepred" and not objectives.edge_pred:
            structure = None
        if structure == "nodealign" and not objectives.node_align:
            structure = None

        prepared = []
        for ex in batch:
            mlm_t = select_mlm_targets(ex, rng, len(vocab))
            tset = None
            if structure == "edgepred":
                try:
                    tset = sample_edge_targets(ex, rng)
                except (NoNodes, NoEdges):
                    tset = None
            elif structure == "nodealign":
                try:
                    tset = sample_align_targets(ex, rng)
                except NoNodes:
                    tset = None
            if tset is not None and not tset.candidates:
                tset = None
            prepared.append((ex, mlm_t, tset))

        parts: dict[str, float] = {}

        def loss_fn(p: ModelParams) -> Tensor:
            mlm_losses: list[Tensor] = []
            struct_losses: list[Tensor] = []
            for ex, mlm_t, tset in prepared:
                allow = tset.mask if tset is not None else build_attention_mask(ex, use_dataflow=use_dataflow)
                acts = forward(p, mlm_t.masked_ids, ex.position_ids, additive_mask(allow, dtype=np.float32))
                mlm_losses.append(mlm_loss(acts, mlm_t, p))
                if tset is not None:
                    score = edge_pred_loss if structure == "edgepred" else node_align_loss
                    struct_losses.append(score(acts, tset, p))
            total = _mean(mlm_losses)
            parts["mlm"] = float(total.data)
            if struct_losses:
                struct = _mean(struct_losses)
                parts[structure] = float(struct.data)
                total = ag.add(total, struct)
            return total

        try:
            _, grads = compute_gradients(loss_fn, params)
        except NonFiniteLoss as e:
            raise DivergedLoss(f"step {step}: {e}") from e
        adam_step(params, grads, state, lr)
        log.append((step, "mlm", parts["mlm"]))
        if structure is not None and structure in parts:
            log.append((step, structure, parts[structure]))

    return PretrainResult(params=params, vocab=vocab, loss_log=log, adam=state)


def write_loss_log(path, rows: list[tuple[int, str, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "objective", "loss"])
        for step, objective, loss in rows:
            writer.writerow([step, objective, repr(float(loss))])


def structure_accuracy(
    params: ModelParams,
    encoded: list[EncodedExample],
    objective: str,
    rng: np.random.Generator,
    threshold: float = 0.5,
) -> float:
    """Binary accuracy of the pair scorer over freshly sampled target sets."""
    dtype = params.tensors["tok_emb"].data.dtype
    correct = 0
    total = 0
    for ex in encoded:
        try:
            if objective == "edgepred":
                tset = sample_edge_targets(ex, rng)
            elif objective == "nodealign":
                tset = sample_align_targets(ex, rng)
            else:
                raise ValueError(f"unknown objective {objective!r}")
        except (NoNodes, NoEdges):
            continue
        if not tset.candidates:
            continue
        acts = forward(params, ex.ids, ex.position_ids, additive_mask(tset.mask, dtype=dtype))
        h = acts.final.data
        for (i, j), y in zip(tset.candidates, tset.labels):
            p = 1.0 / (1.0 + np.exp(-float(h[i] @ h[j])))
            correct += int((p > threshold) == bool(y))
            total += 1
    if total == 0:
        raise ValueError("no structure candidates in the given examples")
    return correct / total
