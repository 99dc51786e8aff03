"""Retrieval and clone-detection heads over the shared encoder.

Both tasks are bi-encoder: queries and code fragments are encoded
independently and compared in vector space. Search scores are raw inner
products; clone probability is a sigmoid of the dot product scaled by
1/sqrt(hidden_dim).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .dfg import DataFlowGraph, extract_dfg
from .encoding import (
    EncodedExample,
    Limits,
    Vocabulary,
    additive_mask,
    build_attention_mask,
    comment_tokens,
    encode_example,
)
from .frontend import FrontendError
from .model import Activations, ModelParams, compute_gradients, forward
from .optim import adam_step, init_adam


class EmptyInput(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class ParseFailure(ValueError):
    pass


_EMPTY_DFG = DataFlowGraph(nodes=(), edges=frozenset())


@dataclass
class SearchExample:
    query: str
    code: str
    query_encoded: EncodedExample | None = None
    code_encoded: EncodedExample | None = None


@dataclass(frozen=True)
class CloneExample:
    code_a: str
    code_b: str
    label: int


@dataclass(frozen=True)
class RankingResult:
    query_id: int
    ordering: tuple[int, ...]  # candidate ids, best first
    gold_rank: int  # 1-based


# encoding helpers -----------------------------------------------------------


def encode_query_example(query: str, vocab: Vocabulary, limits: Limits = Limits(), max_positions: int = 512) -> EncodedExample:
    if not comment_tokens(query):
        raise EmptyInput("query has no tokens")
    return encode_example(
        query,
        "",
        _EMPTY_DFG,
        vocab,
        limits=limits,
        max_positions=max_positions,
        include_code=False,
        include_dataflow=False,
    )


def encode_code_example(
    code: str,
    vocab: Vocabulary,
    limits: Limits = Limits(),
    max_positions: int = 512,
    use_dataflow: bool = True,
) -> EncodedExample:
    try:
        dfg = extract_dfg(code) if use_dataflow else _EMPTY_DFG
    except FrontendError as e:
        raise ParseFailure(str(e)) from e
    return encode_example(
        "",
        code,
        dfg,
        vocab,
        limits=limits,
        max_positions=max_positions,
        include_comment=False,
        include_dataflow=use_dataflow,
    )


def _cls_vector(params: ModelParams, example: EncodedExample, use_dataflow: bool = True) -> Tensor:
    allow = build_attention_mask(example, use_dataflow=use_dataflow)
    dtype = params.tensors["tok_emb"].data.dtype
    acts = forward(params, example.ids, example.position_ids, additive_mask(allow, dtype=dtype))
    return ag.take_rows(acts.final, [0])


def encode_text(query: str, params: ModelParams, vocab: Vocabulary, limits: Limits = Limits()) -> np.ndarray:
    """Final-layer [CLS] vector of the comment-only encoding of `query`."""
    ex = encode_query_example(query, vocab, limits, params.config.max_positions)
    return _cls_vector(params, ex, use_dataflow=False).data[0].copy()


def encode_code(
    code: str,
    params: ModelParams,
    vocab: Vocabulary,
    use_dataflow: bool = True,
    limits: Limits = Limits(),
) -> np.ndarray:
    """Final-layer [CLS] vector of the code(+nodes) encoding, no comment segment."""
    ex = encode_code_example(code, vocab, limits, params.config.max_positions, use_dataflow)
    return _cls_vector(params, ex, use_dataflow=use_dataflow).data[0].copy()


# ranking --------------------------------------------------------------------


def rank_candidates(query_vec: np.ndarray, candidate_vecs, gold_id: int, query_id: int = 0) -> RankingResult:
    q = np.asarray(query_vec, dtype=np.float64)
    cands = [np.asarray(c, dtype=np.float64) for c in candidate_vecs]
    if not cands:
        raise EmptyInput("no candidates to rank")
    for c in cands:
        if c.shape != q.shape:
            raise DimensionMismatch(f"candidate shape {c.shape} vs query {q.shape}")
    scores = [float(q @ c) for c in cands]
    ordering = tuple(sorted(range(len(cands)), key=lambda i: (-scores[i], i)))
    return RankingResult(query_id=query_id, ordering=ordering, gold_rank=ordering.index(gold_id) + 1)


def mrr(rankings) -> float:
    if not rankings:
        raise EmptyInput("no rankings")
    ranks = [r.gold_rank if isinstance(r, RankingResult) else int(r) for r in rankings]
    return float(np.mean([1.0 / r for r in ranks]))


def evaluate_search(params: ModelParams, examples: list[SearchExample], use_dataflow: bool = True) -> float:
    """Whole-corpus protocol: every example's code is a candidate for every query."""
    if not examples:
        raise EmptyInput("no search examples")
    code_vecs = [_cls_vector(params, ex.code_encoded, use_dataflow).data[0] for ex in examples]
    results = []
    for qid, ex in enumerate(examples):
        qv = _cls_vector(params, ex.query_encoded, use_dataflow=False).data[0]
        results.append(rank_candidates(qv, code_vecs, gold_id=qid, query_id=qid))
    return mrr(results)


def prepare_search_examples(
    pairs,
    vocab: Vocabulary,
    limits: Limits = Limits(),
    max_positions: int = 512,
    use_dataflow: bool = True,
) -> list[SearchExample]:
    out = []
    for query, code in pairs:
        out.append(
            SearchExample(
                query=query,
                code=code,
                query_encoded=encode_query_example(query, vocab, limits, max_positions),
                code_encoded=encode_code_example(code, vocab, limits, max_positions, use_dataflow),
            )
        )
    return out


# fine-tuning ----------------------------------------------------------------


def finetune_search(
    examples: list[SearchExample],
    params: ModelParams,
    rng,
    lr: float = 1e-3,
    batch_size: int = 8,
    epochs: int = 20,
    use_dataflow: bool = True,
    val_examples: list[SearchExample] | None = None,
    patience: int = 3,
) -> ModelParams:
    """In-batch contrastive fine-tuning: each query's own code is the positive,
    the other codes in the batch are negatives, softmax cross-entropy on inner
    products. Early-stops on validation MRR when a validation split is given."""
    if len(examples) < 2:
        raise EmptyInput("need at least two pairs for in-batch contrast")
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(0 if rng is None else rng)
    state = init_adam(params)
    best_val = -1.0
    best_snapshot = None
    stale = 0
    for _epoch in range(epochs):
        order = rng.permutation(len(examples))
        for lo in range(0, len(order), batch_size):
            batch = [examples[int(i)] for i in order[lo : lo + batch_size]]
            if len(batch) < 2:
                continue

            def loss_fn(p: ModelParams) -> Tensor:
                q_rows = ag.concat([_cls_vector(p, ex.query_encoded, use_dataflow=False) for ex in batch], axis=0)
                c_rows = ag.concat([_cls_vector(p, ex.code_encoded, use_dataflow) for ex in batch], axis=0)
                scores = ag.matmul(q_rows, ag.transpose(c_rows))
                log_probs = ag.log_softmax(scores, axis=-1)
                diag = ag.gather_cols(log_probs, list(range(len(batch))))
                return ag.mul(ag.tmean(diag), -1.0)

            _, grads = compute_gradients(loss_fn, params)
            adam_step(params, grads, state, lr)
        if val_examples:
            score = evaluate_search(params, val_examples, use_dataflow)
            if score > best_val:
                best_val = score
                best_snapshot = {k: t.data.copy() for k, t in params.tensors.items()}
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    break
    if best_snapshot is not None:
        for k, t in params.tensors.items():
            t.data = best_snapshot[k]
    return params


# clone detection ------------------------------------------------------------


def clone_probability(
    code_a: str,
    code_b: str,
    params: ModelParams,
    vocab: Vocabulary,
    use_dataflow: bool = True,
    limits: Limits = Limits(),
) -> float:
    ha = encode_code(code_a, params, vocab, use_dataflow, limits)
    hb = encode_code(code_b, params, vocab, use_dataflow, limits)
    scaled = float(ha @ hb) / math.sqrt(params.config.hidden_dim)
    return float(1.0 / (1.0 + np.exp(-scaled)))


def finetune_clone(
    pairs: list[CloneExample],
    params: ModelParams,
    vocab: Vocabulary,
    rng,
    lr: float = 1e-3,
    batch_size: int = 8,
    epochs: int = 20,
    use_dataflow: bool = True,
    limits: Limits = Limits(),
) -> ModelParams:
    """Binary cross-entropy on the scaled-dot clone probability."""
    if not pairs:
        raise EmptyInput("no clone pairs")
    if rng is None or isinstance(rng, int):
        rng = np.random.default_rng(0 if rng is None else rng)
    max_positions = params.config.max_positions
    encoded = [
        (
            encode_code_example(p.code_a, vocab, limits, max_positions, use_dataflow),
            encode_code_example(p.code_b, vocab, limits, max_positions, use_dataflow),
            p.label,
        )
        for p in pairs
    ]
    scale = 1.0 / math.sqrt(params.config.hidden_dim)
    state = init_adam(params)
    for _epoch in range(epochs):
        order = rng.permutation(len(encoded))
        for lo in range(0, len(order), batch_size):
            batch = [encoded[int(i)] for i in order[lo : lo + batch_size]]

            def loss_fn(p: ModelParams) -> Tensor:
                terms = []
                for ex_a, ex_b, label in batch:
                    ha = _cls_vector(p, ex_a, use_dataflow)
                    hb = _cls_vector(p, ex_b, use_dataflow)
                    logit = ag.mul(ag.tsum(ag.mul(ha, hb)), scale)
                    sign = 1.0 if label else -1.0
                    terms.append(ag.mul(ag.log_sigmoid(ag.mul(logit, sign)), -1.0))
                total = terms[0]
                for t in terms[1:]:
                    total = ag.add(total, t)
                return ag.mul(total, 1.0 / len(terms))

            _, grads = compute_gradients(loss_fn, params)
            adam_step(params, grads, state, lr)
    return params


def clone_metrics(predictions, labels, threshold: float = 0.5) -> tuple[float, float, float]:
    preds = [float(p) for p in predictions]
    golds = [int(l) for l in labels]
    if len(preds) != len(golds):
        raise DimensionMismatch("predictions and labels differ in length")
    tp = sum(1 for p, y in zip(preds, golds) if p > threshold and y == 1)
    fp = sum(1 for p, y in zip(preds, golds) if p > threshold and y == 0)
    fn = sum(1 for p, y in zip(preds, golds) if p <= threshold and y == 1)
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return precision, recall, f1


# attention analysis ---------------------------------------------------------


def cls_attention_split(activations: Activations, example: EncodedExample) -> tuple[float, float]:
    """Fraction of [CLS] attention mass on code vs node keys, averaged over
    all heads and layers, renormalized over the two classes."""
    node_pos = example.node_positions
    if not node_pos:
        return (1.0, 0.0)
    if not activations.attention:
        raise ValueError("activations carry no attention maps")
    rows = [w.data[0] for layer in activations.attention for w in layer]
    mean_row = np.mean(np.stack(rows), axis=0)
    code_mass = float(mean_row[list(example.code_positions)].sum())
    node_mass = float(mean_row[list(node_pos)].sum())
    total = code_mass + node_mass
    if total == 0.0:
        raise ValueError("[CLS] row carries no mass on code or node keys")
    return (code_mass / total, node_mass / total)


# query filtering ------------------------------------------------------------


def filter_search_corpus(items) -> list:
    """Appendix-style data cleaning for retrieval corpora. Pure and idempotent:
    drops items whose code does not parse, whose query is shorter than 3 or
    longer than 256 tokens, mentions "http", or is empty / mostly non-ASCII."""
    kept = []
    for item in items:
        try:
            extract_dfg(item.code)
        except FrontendError:
            continue
        words = comment_tokens(item.docstring)
        if len(words) < 3 or len(words) > 256:
            continue
        if "http" in item.docstring:
            continue
        text = item.docstring.strip()
        if not text:
            continue
        ascii_count = sum(1 for ch in text if ord(ch) < 128)
        if ascii_count * 2 < len(text):
            continue
        kept.append(item)
    return kept
