"""Command-line surface.

Exit codes: 0 success, 1 bad flags or configuration, 2 data errors
(unreadable / malformed / unparseable inputs), 3 numerical divergence.
Every run that writes artifacts drops the merged RunConfig JSON beside them,
and all randomness descends from the single configured seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dfg import extract_dfg, serialize_dfg
from .downstream import (
    CloneExample,
    DimensionMismatch,
    EmptyInput,
    ParseFailure,
    clone_metrics,
    clone_probability,
    cls_attention_split,
    encode_code_example,
    evaluate_search,
    filter_search_corpus,
    finetune_clone,
    finetune_search,
    prepare_search_examples,
)
from .encoding import (
    EmptyCorpus,
    Limits,
    SequenceTooLong,
    Vocabulary,
    additive_mask,
    build_attention_mask,
    build_vocab,
    encode_example,
    mask_density,
)
from .frontend import FrontendError
from .model import ModelConfig, NonFiniteLoss, forward, init_params
from .pretrain import (
    CorpusFormatError,
    DivergedLoss,
    Objectives,
    load_corpus,
    pretrain_run,
    write_loss_log,
)

DATA_ERRORS = (
    FrontendError,
    EmptyCorpus,
    SequenceTooLong,
    CorpusFormatError,
    CheckpointError,
    EmptyInput,
    DimensionMismatch,
    ParseFailure,
    OSError,
    json.JSONDecodeError,
)


class BadFlags(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int = 0
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    vocab_size: int = 512
    max_positions: int = 512
    max_comment: int = 128
    max_code: int = 256
    max_nodes: int = 64
    edge_pred: bool = True
    node_align: bool = True
    use_dataflow: bool = True
    steps: int = 100
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 8
    corpus: str | None = None
    checkpoint: str | None = None
    vocab: str | None = None
    out: str | None = None
    file: str | None = None
    comment: str | None = None

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            num_layers=self.num_layers,
            hidden_dim=self.hidden_dim,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim,
            vocab_size=self.vocab_size,
            max_positions=self.max_positions,
            seed=self.seed,
        )

    def limits(self) -> Limits:
        return Limits(max_comment=self.max_comment, max_code=self.max_code, max_nodes=self.max_nodes)

    def objectives(self) -> Objectives:
        return Objectives(mlm=True, edge_pred=self.edge_pred, node_align=self.node_align)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, command: str, overrides: dict) -> "RunConfig":
        allowed = {f.name for f in fields(cls)} - {"command"}
        unknown = sorted(set(overrides) - allowed)
        if unknown:
            raise BadFlags(f"unknown config keys: {', '.join(unknown)}")
        return cls(command=command, **overrides)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadFlags(message)


def _add_common(sub: argparse.ArgumentParser, *names: str) -> None:
    s = argparse.SUPPRESS
    table = {
        "seed": lambda: sub.add_argument("--seed", type=int, default=s),
        "config": lambda: sub.add_argument("--config", default=s, help="JSON file with RunConfig defaults"),
        "corpus": lambda: sub.add_argument("--corpus", default=s),
        "checkpoint": lambda: sub.add_argument("--checkpoint", default=s),
        "vocab": lambda: sub.add_argument("--vocab", default=s),
        "out": lambda: sub.add_argument("--out", default=s),
        "steps": lambda: sub.add_argument("--steps", type=int, default=s),
        "epochs": lambda: sub.add_argument("--epochs", type=int, default=s),
        "lr": lambda: sub.add_argument("--lr", type=float, default=s),
        "batch_size": lambda: sub.add_argument("--batch-size", dest="batch_size", type=int, default=s),
        "vocab_size": lambda: sub.add_argument("--vocab-size", dest="vocab_size", type=int, default=s),
        "no_dataflow": lambda: sub.add_argument(
            "--no-dataflow", dest="use_dataflow", action="store_false", default=s
        ),
        "no_edgepred": lambda: sub.add_argument(
            "--no-edgepred", dest="edge_pred", action="store_false", default=s
        ),
        "no_nodealign": lambda: sub.add_argument(
            "--no-nodealign", dest="node_align", action="store_false", default=s
        ),
        "model": lambda: [
            sub.add_argument("--num-layers", dest="num_layers", type=int, default=s),
            sub.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=s),
            sub.add_argument("--num-heads", dest="num_heads", type=int, default=s),
            sub.add_argument("--ffn-dim", dest="ffn_dim", type=int, default=s),
            sub.add_argument("--max-positions", dest="max_positions", type=int, default=s),
        ],
        "limits": lambda: [
            sub.add_argument("--max-comment", dest="max_comment", type=int, default=s),
            sub.add_argument("--max-code", dest="max_code", type=int, default=s),
            sub.add_argument("--max-nodes", dest="max_nodes", type=int, default=s),
        ],
    }
    for name in names:
        table[name]()


def build_parser() -> _Parser:
    parser = _Parser(prog="codeflow", description="Data-flow-aware code encoder toolkit")
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("extract-dfg", help="print the variable data-flow graph of a source file")
    p.add_argument("file")
    _add_common(p, "config")

    p = subs.add_parser("encode", help="print the encoded layout and attention-mask density")
    p.add_argument("file")
    p.add_argument("--comment", default=argparse.SUPPRESS)
    _add_common(p, "config", "seed", "vocab_size", "no_dataflow", "limits", "model")

    p = subs.add_parser("pretrain", help="run the alternating pre-training loop")
    _add_common(
        p,
        "config", "seed", "corpus", "out", "steps", "lr", "batch_size", "vocab_size",
        "no_dataflow", "no_edgepred", "no_nodealign", "model", "limits",
    )

    for name in ("finetune-search", "eval-search"):
        p = subs.add_parser(name)
        _add_common(
            p,
            "config", "seed", "corpus", "checkpoint", "vocab", "out",
            "epochs", "lr", "batch_size", "vocab_size", "no_dataflow", "model", "limits",
        )

    for name in ("finetune-clone", "eval-clone"):
        p = subs.add_parser(name)
        _add_common(
            p,
            "config", "seed", "corpus", "checkpoint", "vocab", "out",
            "epochs", "lr", "batch_size", "vocab_size", "no_dataflow", "model", "limits",
        )

    p = subs.add_parser("attention-split", help="report [CLS] attention mass on code vs nodes")
    _add_common(
        p,
        "config", "seed", "corpus", "checkpoint", "vocab", "out", "vocab_size",
        "no_dataflow", "model", "limits",
    )
    return parser


def _merge_config(args: argparse.Namespace) -> RunConfig:
    ns = dict(vars(args))
    command = ns.pop("command", None)
    if not command:
        raise BadFlags("a subcommand is required")
    overrides: dict = {}
    config_path = ns.pop("config", None)
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise BadFlags(f"cannot read --config {config_path}: {e}") from e
        if not isinstance(loaded, dict):
            raise BadFlags("--config must hold a JSON object")
        loaded.pop("command", None)
        overrides.update(loaded)
    overrides.update(ns)
    try:
        rc = RunConfig.from_dict(command, overrides)
        rc.model_config()
        if min(rc.max_comment, rc.max_code, rc.max_nodes) < 1:
            raise ValueError("limits must be positive")
        if rc.steps < 0 or rc.epochs < 0 or rc.batch_size < 1:
            raise ValueError("steps/epochs must be >= 0 and batch size >= 1")
    except (TypeError, ValueError) as e:
        raise BadFlags(str(e)) from e
    return rc


def _require(rc: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(rc, n) is None]
    if missing:
        raise BadFlags(f"{rc.command} requires --{missing[0].replace('_', '-')}")


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _write_artifacts(rc: RunConfig, metrics: dict | None = None) -> None:
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(rc.to_json(), encoding="utf-8")
    if metrics is not None:
        (out / "metrics.json").write_text(json.dumps(metrics, sort_keys=True) + "\n", encoding="utf-8")


def _load_model(rc: RunConfig, items=None):
    """Either load checkpoint + vocab from disk or build both fresh from the
    corpus so evaluation commands also work on untrained weights."""
    if rc.checkpoint is not None:
        params = load_checkpoint(rc.checkpoint)
        vocab_path = Path(rc.vocab) if rc.vocab else Path(rc.checkpoint).parent / "vocab.txt"
        vocab = Vocabulary.deserialize(vocab_path.read_text(encoding="utf-8"))
        return params, vocab
    if items is None:
        raise BadFlags(f"{rc.command} requires --checkpoint when no corpus is given")
    params = init_params(rc.model_config())
    vocab = build_vocab([(it.docstring, it.code) for it in items], rc.vocab_size)
    return params, vocab


# command handlers -----------------------------------------------------------


def _cmd_extract_dfg(rc: RunConfig) -> int:
    source = Path(rc.file).read_text(encoding="utf-8")
    sys.stdout.write(serialize_dfg(extract_dfg(source)) + "\n")
    return 0


def _cmd_encode(rc: RunConfig) -> int:
    source = Path(rc.file).read_text(encoding="utf-8")
    comment = rc.comment or ""
    vocab = build_vocab([(comment, source)], rc.vocab_size)
    dfg = extract_dfg(source)
    example = encode_example(
        comment,
        source,
        dfg,
        vocab,
        limits=rc.limits(),
        max_positions=rc.max_positions,
        include_comment=bool(comment),
        include_dataflow=rc.use_dataflow,
    )
    allow = build_attention_mask(example, use_dataflow=rc.use_dataflow)
    _print_json(
        {
            "ids": list(example.ids),
            "segments": list(example.segments),
            "position_ids": list(example.position_ids),
            "num_nodes": len(example.node_positions),
            "num_edges": len(example.node_edges),
            "mask_density": mask_density(allow),
        }
    )
    return 0


def _cmd_pretrain(rc: RunConfig) -> int:
    _require(rc, "corpus", "out")
    corpus = load_corpus(rc.corpus)
    result = pretrain_run(
        corpus,
        rc.model_config(),
        rc.objectives(),
        steps=rc.steps,
        rng=np.random.default_rng(rc.seed),
        limits=rc.limits(),
        batch_size=rc.batch_size,
        lr=rc.lr,
        use_dataflow=rc.use_dataflow,
    )
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.gcb", result.params)
    (out / "vocab.txt").write_text(result.vocab.serialize(), encoding="utf-8")
    write_loss_log(out / "losses.csv", result.loss_log)
    mlm_rows = [loss for _, objective, loss in result.loss_log if objective == "mlm"]
    metrics = {
        "steps": rc.steps,
        "initial_mlm_loss": mlm_rows[0] if mlm_rows else None,
        "final_mlm_loss": mlm_rows[-1] if mlm_rows else None,
    }
    _write_artifacts(rc, metrics)
    _print_json(metrics)
    return 0


def _cmd_search(rc: RunConfig, tune: bool) -> int:
    _require(rc, "corpus", "out")
    raw_items = filter_search_corpus(load_corpus(rc.corpus))
    if not raw_items:
        raise EmptyCorpus("no usable search examples after filtering")
    params, vocab = _load_model(rc, raw_items)
    examples = prepare_search_examples(
        [(it.docstring, it.code) for it in raw_items], vocab, rc.limits(), rc.max_positions, rc.use_dataflow
    )
    if tune:
        params = finetune_search(
            examples,
            params,
            np.random.default_rng(rc.seed),
            lr=rc.lr,
            batch_size=rc.batch_size,
            epochs=rc.epochs,
            use_dataflow=rc.use_dataflow,
        )
    score = evaluate_search(params, examples, rc.use_dataflow)
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    if tune:
        save_checkpoint(out / "model.gcb", params)
        (out / "vocab.txt").write_text(vocab.serialize(), encoding="utf-8")
    metrics = {"mrr": score}
    _write_artifacts(rc, metrics)
    _print_json(metrics)
    return 0


def _load_clone_pairs(path) -> list[CloneExample]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            pairs.append(CloneExample(code_a=obj["code_a"], code_b=obj["code_b"], label=int(obj["label"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise CorpusFormatError(f"line {lineno}: {e}") from e
    if not pairs:
        raise EmptyCorpus(f"no clone pairs in {path}")
    return pairs


def _cmd_clone(rc: RunConfig, tune: bool) -> int:
    _require(rc, "corpus", "out")
    pairs = _load_clone_pairs(rc.corpus)
    if rc.checkpoint:
        params, vocab = _load_model(rc)
    else:
        params, vocab = _load_model_from_codes(rc, pairs)
    if tune:
        params = finetune_clone(
            pairs,
            params,
            vocab,
            np.random.default_rng(rc.seed),
            lr=rc.lr,
            batch_size=rc.batch_size,
            epochs=rc.epochs,
            use_dataflow=rc.use_dataflow,
            limits=rc.limits(),
        )
    predictions = [
        clone_probability(p.code_a, p.code_b, params, vocab, rc.use_dataflow, rc.limits()) for p in pairs
    ]
    precision, recall, f1 = clone_metrics(predictions, [p.label for p in pairs])
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    if tune:
        save_checkpoint(out / "model.gcb", params)
        (out / "vocab.txt").write_text(vocab.serialize(), encoding="utf-8")
    metrics = {"precision": precision, "recall": recall, "f1": f1}
    _write_artifacts(rc, metrics)
    _print_json(metrics)
    return 0


def _load_model_from_codes(rc: RunConfig, pairs: list[CloneExample]):
    params = init_params(rc.model_config())
    corpus = [("", p.code_a) for p in pairs] + [("", p.code_b) for p in pairs]
    vocab = build_vocab(corpus, rc.vocab_size)
    return params, vocab


def _cmd_attention_split(rc: RunConfig) -> int:
    _require(rc, "corpus")
    items = load_corpus(rc.corpus)
    params, vocab = _load_model(rc, items)
    dtype = params.tensors["tok_emb"].data.dtype
    per_lang: dict[str, list[tuple[float, float]]] = {}
    for item in items:
        dfg = extract_dfg(item.code)
        example = encode_example(
            item.docstring,
            item.code,
            dfg,
            vocab,
            limits=rc.limits(),
            max_positions=rc.max_positions,
            include_dataflow=rc.use_dataflow,
        )
        allow = build_attention_mask(example, use_dataflow=rc.use_dataflow)
        acts = forward(params, example.ids, example.position_ids, additive_mask(allow, dtype=dtype))
        per_lang.setdefault(item.lang, []).append(cls_attention_split(acts, example))
    report = {}
    everything = [f for fractions in per_lang.values() for f in fractions]
    for lang, fractions in sorted(per_lang.items()):
        report[lang] = {
            "code_fraction": float(np.mean([c for c, _ in fractions])),
            "node_fraction": float(np.mean([n for _, n in fractions])),
        }
    report["overall"] = {
        "code_fraction": float(np.mean([c for c, _ in everything])),
        "node_fraction": float(np.mean([n for _, n in everything])),
    }
    if rc.out:
        _write_artifacts(rc, report)
    _print_json(report)
    return 0


_HANDLERS = {
    "extract-dfg": _cmd_extract_dfg,
    "encode": _cmd_encode,
    "pretrain": _cmd_pretrain,
    "finetune-search": lambda rc: _cmd_search(rc, tune=True),
    "eval-search": lambda rc: _cmd_search(rc, tune=False),
    "finetune-clone": lambda rc: _cmd_clone(rc, tune=True),
    "eval-clone": lambda rc: _cmd_clone(rc, tune=False),
    "attention-split": _cmd_attention_split,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        rc = _merge_config(args)
        return _HANDLERS[rc.command](rc)
    except BadFlags as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
    except DATA_ERRORS as e:
        sys.stderr.write(f"data error: {e}\n")
        return 2
    except (DivergedLoss, NonFiniteLoss) as e:
        sys.stderr.write(f"numerical divergence: {e}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
