"""Shared test utilities: a seeded random-program generator that emits
canonical-style source (so pretty-printing is a fixed point), an independent
entry-by-entry attention-mask oracle, and small synthetic corpora."""

from __future__ import annotations

import numpy as np

from codeflow.frontend import syntax as ast
from codeflow.frontend.lexer import Span
from codeflow.pretrain import CorpusItem

SPAN = Span(0, 0)

IDENTIFIERS = [
    "acc", "base", "count", "delta", "extra", "flag", "gain", "high",
    "index", "join", "keep", "low", "mark", "next_val", "outer", "pivot",
    "quota", "rate", "size", "total", "upper", "value", "width", "shift",
]
FUNCTIONS = ["probe", "emit", "clamp", "mix"]
BIN_OPS = ["+", "-", "*", "/", "%"]
CMP_OPS = ["<", ">", "<=", ">=", "==", "!="]


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def random_expr(rng: np.random.Generator, names: list[str], depth: int = 0) -> ast.AstNode:
    roll = rng.random()
    if depth >= 3 or roll < 0.45:
        kind = int(rng.integers(4))
        if kind == 0 and names:
            return ast.Name(SPAN, _pick(rng, names), -1)
        if kind == 1:
            n = int(rng.integers(100))
            return ast.Literal(SPAN, n, str(n))
        if kind == 2:
            a, b = int(rng.integers(10)), int(rng.integers(10))
            return ast.Literal(SPAN, float(f"{a}.{b}"), f"{a}.{b}")
        word = _pick(rng, ["alpha", "omega", "note"])
        return ast.Literal(SPAN, word, f'"{word}"')
    if roll < 0.85:
        op = _pick(rng, BIN_OPS)
        return ast.BinOp(SPAN, random_expr(rng, names, depth + 1), op, random_expr(rng, names, depth + 1))
    args = tuple(random_expr(rng, names, depth + 1) for _ in range(int(rng.integers(0, 3))))
    return ast.Call(SPAN, _pick(rng, FUNCTIONS), -1, args)


def _condition(rng, names):
    return ast.BinOp(
        SPAN, random_expr(rng, names, depth=2), _pick(rng, CMP_OPS), random_expr(rng, names, depth=2)
    )


def random_stmt(rng: np.random.Generator, names: list[str], depth: int = 0) -> ast.AstNode:
    # Weight assignments heavily so most programs carry data flow.
    roll = rng.random()
    fresh = _pick(rng, IDENTIFIERS)
    if roll < 0.45 or depth >= 2:
        target = fresh if rng.random() < 0.5 or not names else _pick(rng, names)
        stmt = ast.Assign(SPAN, ast.Name(SPAN, target, -1), random_expr(rng, names))
        if target not in names:
            names.append(target)
        return stmt
    if roll < 0.55 and names:
        op = _pick(rng, ["+=", "-=", "*=", "/="])
        return ast.AugAssign(SPAN, ast.Name(SPAN, _pick(rng, names), -1), op, random_expr(rng, names))
    if roll < 0.7:
        body = random_block(rng, names, depth + 1)
        orelse: tuple = ()
        branch = rng.random()
        if branch < 0.3:
            orelse = random_block(rng, list(names), depth + 1)
        elif branch < 0.45:
            orelse = (ast.If(SPAN, _condition(rng, names), random_block(rng, list(names), depth + 1), ()),)
        return ast.If(SPAN, _condition(rng, names), body, orelse)
    if roll < 0.8:
        return ast.While(SPAN, _condition(rng, names), random_block(rng, names, depth + 1))
    if roll < 0.9:
        loop_var = fresh
        if loop_var not in names:
            names.append(loop_var)
        return ast.For(SPAN, ast.Name(SPAN, loop_var, -1), random_expr(rng, names), random_block(rng, names, depth + 1))
    if roll < 0.95:
        return ast.Return(SPAN, random_expr(rng, names) if rng.random() < 0.8 else None)
    return ast.ExprStmt(SPAN, ast.Call(SPAN, _pick(rng, FUNCTIONS), -1, tuple(random_expr(rng, names) for _ in range(int(rng.integers(1, 3))))))


def random_block(rng: np.random.Generator, names: list[str], depth: int) -> tuple:
    return tuple(random_stmt(rng, names, depth) for _ in range(int(rng.integers(1, 4))))


def random_program(rng: np.random.Generator) -> str:
    """Canonical-style MiniLang source with, usually, real data flow."""
    top: list = []
    names: list[str] = []
    if rng.random() < 0.6:
        params = tuple(
            ast.Param(_pick(rng, IDENTIFIERS) + str(i), -1, SPAN) for i in range(int(rng.integers(1, 4)))
        )
        fn_names = [p.name for p in params]
        body = tuple(random_stmt(rng, fn_names, 1) for _ in range(int(rng.integers(1, 5))))
        top.append(ast.FunctionDef(SPAN, "main_fn", -1, params, body))
    for _ in range(int(rng.integers(1, 4))):
        top.append(random_stmt(rng, names, 0))
    return ast.pretty(ast.Module(SPAN, tuple(top)))


# independent mask oracle ------------------------------------------------------


def mask_oracle(example) -> np.ndarray:
    """Entry-wise re-statement of the attention predicate, kept deliberately
    naive (a pure double loop) so it can serve as the comparison oracle."""
    n = len(example)
    segs = example.segments
    edges = set(example.node_edges)
    links = set(example.node_token_links)
    allow = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if segs[i] == "special":
                ok = True
            elif segs[i] != "node" and segs[j] != "node":
                ok = True
            elif segs[i] == "node":
                ok = (j, i) in edges or (i, j) in links or i == j
            else:
                ok = (j, i) in links
            allow[i, j] = ok
    return allow


# synthetic corpora ------------------------------------------------------------

QUERY_WORDS = [
    "merge", "sorted", "records", "running", "window", "median", "batch",
    "payload", "checksum", "rolling", "average", "bucket", "histogram",
    "prefix", "suffix", "overlap", "digest", "stream", "cursor", "ledger",
]


def overfit_corpus(n: int = 64) -> list[CorpusItem]:
    """Small functions with guaranteed data-flow edges, two languages."""
    items = []
    for i in range(n):
        a = IDENTIFIERS[i % len(IDENTIFIERS)]
        b = IDENTIFIERS[(i + 7) % len(IDENTIFIERS)]
        c = IDENTIFIERS[(i + 13) % len(IDENTIFIERS)]
        body_variant = i % 4
        if body_variant == 0:
            code = (
                f"def fn{i}({a}, {b}):\n"
                f"    {c} = {a} + {b}\n"
                f"    {c} = {c} * {i % 9}\n"
                f"    return {c}\n"
            )
        elif body_variant == 1:
            code = (
                f"def fn{i}({a}, {b}):\n"
                f"    {c} = {a} - {b}\n"
                f"    if {c} < 0:\n"
                f"        {c} = {b} - {a}\n"
                f"    return {c}\n"
            )
        elif body_variant == 2:
            code = (
                f"def fn{i}({a}):\n"
                f"    {b} = 0\n"
                f"    while {b} < {a}:\n"
                f"        {b} += {i % 5 + 1}\n"
                f"    return {b}\n"
            )
        else:
            code = (
                f"def fn{i}({a}, {b}):\n"
                f"    {c} = {a} % {b}\n"
                f"    {a} = {c} + {i % 11}\n"
                f"    return {a}\n"
            )
        w1 = QUERY_WORDS[i % len(QUERY_WORDS)]
        w2 = QUERY_WORDS[(i + 5) % len(QUERY_WORDS)]
        lang = "python" if i % 4 != 3 else "java"
        items.append(CorpusItem(code=code, docstring=f"{w1} {w2} routine variant", lang=lang))
    return items


def search_pairs(n: int = 16) -> list[tuple[str, str]]:
    """Query/code pairs whose query words never appear in the code."""
    pairs = []
    for i in range(n):
        a = IDENTIFIERS[(2 * i) % len(IDENTIFIERS)]
        b = IDENTIFIERS[(2 * i + 1) % len(IDENTIFIERS)]
        shape = i % 4
        if shape == 0:
            code = f"def job{i}({a}, {b}):\n    {a} = {a} * {b} + {i}\n    return {a}\n"
        elif shape == 1:
            code = f"def job{i}({a}, {b}):\n    if {a} > {b}:\n        {a} = {b}\n    return {a} + {i}\n"
        elif shape == 2:
            code = f"def job{i}({a}):\n    {b} = {i}\n    while {b} > {a}:\n        {b} -= 1\n    return {b}\n"
        else:
            code = f"def job{i}({a}, {b}):\n    {b} = {a} / {b}\n    {a} = {b} % {i + 2}\n    return {a}\n"
        q = (
            f"{QUERY_WORDS[i % 20]} {QUERY_WORDS[(i + 3) % 20]} "
            f"{QUERY_WORDS[(i + 7) % 20]} {QUERY_WORDS[(i + 12) % 20]}"
        )
        pairs.append((q, code))
    return pairs


def clone_corpus() -> list[tuple[str, str, int]]:
    """Eight labeled pairs: positives are identifier-renamed twins."""
    out = []
    for i in range(4):
        a = IDENTIFIERS[i]
        b = IDENTIFIERS[i + 8]
        code = f"def dup{i}({a}):\n    {a} = {a} * {a} + {i}\n    return {a}\n"
        twin = f"def dup{i}({b}):\n    {b} = {b} * {b} + {i}\n    return {b}\n"
        out.append((code, twin, 1))
    for i in range(4):
        a = IDENTIFIERS[i + 4]
        b = IDENTIFIERS[i + 12]
        left = f"def one{i}({a}):\n    {a} += {i}\n    return {a}\n"
        right = (
            f"def two{i}({a}, {b}):\n    while {a} < {b}:\n        {a} = {a} + {b} % 3\n    return {b}\n"
        )
        out.append((left, right, 0))
    return out


# ---------------------------------------------------------------------------
# Hand-traced data-flow graphs.  Each entry is (source, nodes, edges) where
# nodes = [(name, token_index, role), ...] in node-id order and edges is the
# full <src, dst> set.  Worked out by hand from the reaching-definition
# rules; the tests must not recompute them.

D = "definition"
U = "use"

DFG_TRACES: list[tuple[str, list[tuple[str, int, str]], set[tuple[int, int]]]] = [
    (
        "v = max_value - min_value\n",
        [("v", 0, D), ("max_value", 2, U), ("min_value", 4, U)],
        {(1, 0), (2, 0)},
    ),
    (
        "a = 1\nb = a\n",
        [("a", 0, D), ("b", 4, D), ("a", 6, U)],
        {(0, 2), (2, 1)},
    ),
    (
        "x = 1\nx += 2\ny = x\n",
        [("x", 0, D), ("x", 4, D), ("y", 8, D), ("x", 10, U)],
        {(0, 1), (1, 3), (3, 2)},
    ),
    (
        "x = 1\nif p > 0:\n    x = 2\nelse:\n    x = 3\ny = x\n",
        [("x", 0, D), ("p", 5, U), ("x", 11, D), ("x", 20, D), ("y", 25, D), ("x", 27, U)],
        {(2, 5), (3, 5), (5, 4)},
    ),
    (
        "x = 1\nif p > 0:\n    x = 2\ny = x\n",
        [("x", 0, D), ("p", 5, U), ("x", 11, D), ("y", 16, D), ("x", 18, U)],
        {(0, 4), (2, 4), (4, 3)},
    ),
    (
        "i = 0\nwhile i < 3:\n    i = i + 1\ns = i\n",
        [("i", 0, D), ("i", 5, U), ("i", 11, D), ("i", 13, U), ("s", 18, D), ("i", 20, U)],
        {(0, 1), (2, 1), (0, 3), (2, 3), (3, 2), (0, 5), (2, 5), (5, 4)},
    ),
    (
        "total = 0\nfor x in items:\n    total = total + x\nr = total\n",
        [
            ("total", 0, D),
            ("x", 5, D),
            ("items", 7, U),
            ("total", 11, D),
            ("total", 13, U),
            ("x", 15, U),
            ("r", 18, D),
            ("total", 20, U),
        ],
        {(2, 1), (0, 4), (3, 4), (1, 5), (4, 3), (5, 3), (0, 7), (3, 7), (7, 6)},
    ),
    (
        "def f(a, b):\n    return a + b\n",
        [("a", 3, D), ("b", 5, D), ("a", 11, U), ("b", 13, U)],
        {(0, 2), (1, 3)},
    ),
    (
        "r = probe(x, y + 1)\n",
        [("r", 0, D), ("x", 4, U), ("y", 6, U)],
        {(1, 0), (2, 0)},
    ),
    (
        "y = x + x\n",
        [("y", 0, D), ("x", 2, U), ("x", 4, U)],
        {(1, 0), (2, 0)},
    ),
    (
        "x = 1\nx = x + 1\n",
        [("x", 0, D), ("x", 4, D), ("x", 6, U)],
        {(0, 2), (2, 1)},
    ),
    (
        "if a > 0:\n    r = 1\nelif a < 0:\n    r = 2\nelse:\n    r = 3\ns = r\n",
        [
            ("a", 1, U),
            ("r", 7, D),
            ("a", 13, U),
            ("r", 19, D),
            ("r", 28, D),
            ("s", 33, D),
            ("r", 35, U),
        ],
        {(1, 6), (3, 6), (4, 6), (6, 5)},
    ),
    (
        "x = 1\ndef f(a):\n    y = a + x\n    return y\nz = x\n",
        [
            ("x", 0, D),
            ("a", 7, D),
            ("y", 12, D),
            ("a", 14, U),
            ("x", 16, U),
            ("y", 19, U),
            ("z", 22, D),
            ("x", 24, U),
        ],
        {(1, 3), (3, 2), (4, 2), (2, 5), (0, 7), (7, 6)},
    ),
    (
        "n = 5\nacc = 0\nwhile n > 0:\n    acc = acc + n\n    n = n - 1\nout = acc\n",
        [
            ("n", 0, D),
            ("acc", 4, D),
            ("n", 9, U),
            ("acc", 15, D),
            ("acc", 17, U),
            ("n", 19, U),
            ("n", 21, D),
            ("n", 23, U),
            ("out", 28, D),
            ("acc", 30, U),
        ],
        {
            (0, 2),
            (6, 2),
            (1, 4),
            (3, 4),
            (0, 5),
            (6, 5),
            (4, 3),
            (5, 3),
            (0, 7),
            (6, 7),
            (7, 6),
            (1, 9),
            (3, 9),
            (9, 8),
        },
    ),
    (
        "x = 2\nprobe(x, x)\n",
        [("x", 0, D), ("x", 6, U), ("x", 8, U)],
        {(0, 1), (0, 2)},
    ),
    (
        "probe(1, 'two')\n",
        [],
        set(),
    ),
    (
        "a = 1\nif a > 0:\n    b = a\nelse:\n    b = 2\nc = b\n",
        [
            ("a", 0, D),
            ("a", 5, U),
            ("b", 11, D),
            ("a", 13, U),
            ("b", 20, D),
            ("c", 25, D),
            ("b", 27, U),
        ],
        {(0, 1), (0, 3), (3, 2), (2, 6), (4, 6), (6, 5)},
    ),
    (
        "s = 0\nfor i in xs:\n    s += i\nr = s\n",
        [
            ("s", 0, D),
            ("i", 5, D),
            ("xs", 7, U),
            ("s", 11, D),
            ("i", 13, U),
            ("r", 16, D),
            ("s", 18, U),
        ],
        {(2, 1), (0, 3), (1, 4), (4, 3), (0, 6), (3, 6), (6, 5)},
    ),
    (
        "x = 10\nwhile x > 0:\n    if x > 5:\n        x = x - 5\n    else:\n        x = x - 1\ndone = x\n",
        [
            ("x", 0, D),
            ("x", 5, U),
            ("x", 12, U),
            ("x", 18, D),
            ("x", 20, U),
            ("x", 29, D),
            ("x", 31, U),
            ("done", 37, D),
            ("x", 39, U),
        ],
        {
            (0, 1),
            (3, 1),
            (5, 1),
            (0, 2),
            (3, 2),
            (5, 2),
            (0, 4),
            (3, 4),
            (5, 4),
            (4, 3),
            (0, 6),
            (3, 6),
            (5, 6),
            (6, 5),
            (0, 8),
            (3, 8),
            (5, 8),
            (8, 7),
        },
    ),
    (
        "def first(a):\n    return a\ndef second(b):\n    b = b + 1\n    return b\n",
        [
            ("a", 3, D),
            ("a", 9, U),
            ("b", 15, D),
            ("b", 20, D),
            ("b", 22, U),
            ("b", 27, U),
        ],
        {(0, 1), (2, 4), (4, 3), (3, 5)},
    ),
]
