"""Model-input construction: vocabulary, sequence layout, positions, mask.

The input sequence is ``[CLS] W [SEP] C [SEP] V``: comment words, code
tokens, then one position per data-flow node. Node positions share a single
reserved position id (the last slot of the position table) and attend only
along data-flow edges, to the code token they were identified from, and to
themselves; everything in the comment/code/special block attends freely
within that block, and special-token queries attend everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dfg import DataFlowGraph
from .frontend.lexer import Token

PAD, CLS, SEP, MASK, UNK = 0, 1, 2, 3, 4
RESERVED = (("[PAD]", PAD), ("[CLS]", CLS), ("[SEP]", SEP), ("[MASK]", MASK), ("[UNK]", UNK))

SEG_SPECIAL = "special"
SEG_COMMENT = "comment"
SEG_CODE = "code"
SEG_NODE = "node"
SEG_PAD = "pad"  # only appears when an example is padded for batching

# Attention is blocked by adding a large negative constant to the score,
# not a literal -inf: exp() then underflows to exactly zero.
MASK_PENALTY = -1e9


class EmptyCorpus(ValueError):
    pass


class SequenceTooLong(ValueError):
    pass


@dataclass(frozen=True)
class Limits:
    max_comment: int = 128
    max_code: int = 256
    max_nodes: int = 64


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]

    def __len__(self) -> int:
        return len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def serialize(self) -> str:
        """Sorted ``token\\tid`` lines; backslash, tab and newline escaped."""
        lines = []
        for token, idx in sorted(self.token_to_id.items()):
            esc = token.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")
            lines.append(f"{esc}\t{idx}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def deserialize(text: str) -> "Vocabulary":
        mapping: dict[str, int] = {}
        for line in text.splitlines():
            if not line:
                continue
            esc, idx = line.rsplit("\t", 1)
            token = (
                esc.replace("\\n", "\n").replace("\\t", "\t").replace("\\\\", "\\")
            )
            mapping[token] = int(idx)
        return Vocabulary(mapping)


def comment_tokens(comment: str) -> list[str]:
    return comment.split()


def code_token_strings(tokens: list[Token]) -> list[str]:
    """Canonical model-facing strings: structural tokens get stable names."""
    out = []
    for tok in tokens:
        if tok.kind == "newline":
            out.append("<nl>")
        elif tok.kind == "indent":
            out.append("<ind>")
        elif tok.kind == "dedent":
            out.append("<ded>")
        else:
            out.append(tok.text)
    return out


def build_vocab(corpus: list[tuple[str, str]], size: int) -> Vocabulary:
    """Frequency vocabulary over (comment, code) pairs.

    The five reserved ids come first; the remaining ``size - 5`` slots go to
    the most frequent tokens, ties broken by the lexicographically smaller
    token.
    """
    from .frontend.lexer import tokenize

    if size < 5:
        raise ValueError(f"vocabulary size must be at least 5, got {size}")
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for comment, code in corpus:
        for w in comment_tokens(comment):
            counts[w] = counts.get(w, 0) + 1
        for s in code_token_strings(tokenize(code)):
            counts[s] = counts.get(s, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    mapping = dict(RESERVED)
    for token, _ in ranked[: size - 5]:
        mapping[token] = len(mapping)
    return Vocabulary(mapping)


@dataclass(frozen=True)
class EncodedExample:
    ids: tuple[int, ...]
    segments: tuple[str, ...]
    position_ids: tuple[int, ...]
    node_edges: frozenset[tuple[int, int]]  # <src_pos, dst_pos> over positions
    node_token_links: frozenset[tuple[int, int]]  # <node_pos, code_pos>
    code_token_of_node: dict[int, int]  # node position -> code position

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def node_positions(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.segments) if s == SEG_NODE)

    @property
    def code_positions(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.segments) if s == SEG_CODE)

    @property
    def comment_positions(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.segments) if s == SEG_COMMENT)

    @property
    def maskable_positions(self) -> tuple[int, ...]:
        return tuple(
            i for i, s in enumerate(self.segments) if s in (SEG_COMMENT, SEG_CODE)
        )


def encode_example(
    comment: str,
    code: str,
    dfg: DataFlowGraph,
    vocab: Vocabulary,
    limits: Limits = Limits(),
    max_positions: int = 512,
    include_comment: bool = True,
    include_code: bool = True,
    include_dataflow: bool = True,
) -> EncodedExample:
    """Build the ``[CLS] W [SEP] C [SEP] V`` input for one example.

    Comment, code and node sequences are truncated to their limits; a node
    whose source token fell past the code truncation point is dropped, and
    edges touching dropped nodes are dropped with them. The ``include_*``
    switches drop whole segments (with the [SEP] that follows them):
    comment-only query encoding, code-only candidate encoding, and the
    no-data-flow ablation.
    """
    from .frontend.lexer import tokenize

    if not include_code and include_dataflow:
        raise ValueError("data-flow nodes require the code segment")
    words = comment_tokens(comment)[: limits.max_comment] if include_comment else []

    ids: list[int] = [CLS]
    segments: list[str] = [SEG_SPECIAL]
    if include_comment:
        for w in words:
            ids.append(vocab.id_of(w))
            segments.append(SEG_COMMENT)
        ids.append(SEP)
        segments.append(SEG_SPECIAL)
    code_pos_of_token: dict[int, int] = {}
    if include_code:
        kept_code = tokenize(code)[: limits.max_code]
        for offset, s in enumerate(code_token_strings(kept_code)):
            code_pos_of_token[kept_code[offset].index] = len(ids)
            ids.append(vocab.id_of(s))
            segments.append(SEG_CODE)
        ids.append(SEP)
        segments.append(SEG_SPECIAL)

    node_pos_of_id: dict[int, int] = {}
    links: set[tuple[int, int]] = set()
    code_of_node: dict[int, int] = {}
    if include_dataflow:
        kept_nodes = [n for n in dfg.nodes if n.token_index in code_pos_of_token]
        kept_nodes = kept_nodes[: limits.max_nodes]
        for node in kept_nodes:
            pos = len(ids)
            node_pos_of_id[node.id] = pos
            ids.append(vocab.id_of(node.name))
            segments.append(SEG_NODE)
            cpos = code_pos_of_token[node.token_index]
            links.add((pos, cpos))
            code_of_node[pos] = cpos
    edges = frozenset(
        (node_pos_of_id[src], node_pos_of_id[dst])
        for src, dst in dfg.edges
        if src in node_pos_of_id and dst in node_pos_of_id
    )

    example = EncodedExample(
        ids=tuple(ids),
        segments=tuple(segments),
        position_ids=(),
        node_edges=edges,
        node_token_links=frozenset(links),
        code_token_of_node=code_of_node,
    )
    return replace(example, position_ids=assign_positions(example, max_positions))


def assign_positions(example: EncodedExample, max_positions: int = 512) -> tuple[int, ...]:
    """Sequential positions for the comment/code block; every node position
    shares the reserved id ``max_positions - 1``."""
    p_node = max_positions - 1
    out: list[int] = []
    nxt = 0
    for seg in example.segments:
        if seg == SEG_NODE:
            out.append(p_node)
        else:
            if nxt >= p_node:
                raise SequenceTooLong(
                    f"sequence needs {nxt + 1} sequential positions, "
                    f"only {p_node} available"
                )
            out.append(nxt)
            nxt += 1
    return tuple(out)


def build_attention_mask(
    example: EncodedExample,
    use_dataflow: bool = True,
    pad_to: int | None = None,
) -> np.ndarray:
    """Boolean allow-matrix: ``mask[i, j]`` is True when query ``i`` may
    attend key ``j``.

    Allowed entries: special-token queries see every key; any pair within
    the special/comment/code block; a node query sees the source of each of
    its incoming data-flow edges; node<->code alignment links both ways; a
    node sees itself. Padding (when ``pad_to`` is given) is blocked as a
    key everywhere and self-attends as a query.
    """
    if not use_dataflow and example.node_positions:
        raise ValueError("use_dataflow=False requires an example with no node positions")
    n = len(example)
    total = n if pad_to is None else pad_to
    if total < n:
        raise ValueError(f"pad_to={pad_to} is smaller than the sequence ({n})")
    segs = example.segments
    is_node = np.array([s == SEG_NODE for s in segs], dtype=bool)
    is_special = np.array([s == SEG_SPECIAL for s in segs], dtype=bool)
    in_text_block = ~is_node  # special | comment | code

    mask = np.zeros((total, total), dtype=bool)
    mask[:n, :n] = in_text_block[:, None] & in_text_block[None, :]
    mask[:n, :n] |= is_special[:, None]  # [CLS]/[SEP] queries see everything
    for src, dst in example.node_edges:
        mask[dst, src] = True  # query = edge destination, key = edge source
    for npos, cpos in example.node_token_links:
        mask[npos, cpos] = True
        mask[cpos, npos] = True
    idx = np.where(is_node)[0]
    mask[idx, idx] = True  # node self-attention
    if pad_to is not None and total > n:
        mask[n:, :] = False
        mask[:, n:] = False
        pads = np.arange(n, total)
        mask[pads, pads] = True
    mask.flags.writeable = False
    return mask


def additive_mask(allow: np.ndarray, dtype=np.float32, penalty: float = MASK_PENALTY) -> np.ndarray:
    """Convert a boolean allow-matrix to the additive form used in scores."""
    out = np.where(allow, 0.0, penalty).astype(dtype)
    out.flags.writeable = False
    return out


def mask_density(allow: np.ndarray) -> float:
    return float(allow.sum()) / float(allow.size)
