"""Data-flow graph extraction.

The graph has one node per variable occurrence (in source order) and a
directed edge ``<i, j>`` whenever the value of occurrence ``j`` comes from
occurrence ``i``. Two rules generate edges:

* assignment: ``x = expr`` adds an edge from every variable occurrence in
  ``expr`` to the target occurrence ``x``;
* reaching definitions: every use receives an edge from each definition of
  the same name that can reach it. ``if``/``else`` merges by union; loop
  bodies are walked a second time from the merged environment so in-loop
  definitions reach the loop header, the body (around the back edge) and
  uses after the loop.

Augmented assignment targets act as both a use (they receive edges from the
prior reaching definitions) and the new definition. Function parameters are
definitions with no incoming edges. Call target names and function names
are not variables and never become nodes. A use with no reaching
definition simply has no incoming edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .frontend.syntax import (
    Assign,
    AstNode,
    AugAssign,
    BinOp,
    Call,
    ExprStmt,
    For,
    FunctionDef,
    If,
    Literal,
    Module,
    Name,
    Return,
    While,
)

ROLE_DEF = "definition"
ROLE_USE = "use"


@dataclass(frozen=True)
class VariableNode:
    id: int
    name: str
    token_index: int
    # Extraction metadata; not part of the serialized form, so not compared.
    role: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class DataFlowGraph:
    nodes: tuple[VariableNode, ...]
    edges: frozenset[tuple[int, int]]  # <src, dst>: value of dst comes from src

    def node_by_token(self, token_index: int) -> VariableNode:
        for node in self.nodes:
            if node.token_index == token_index:
                return node
        raise KeyError(token_index)


# Environment: variable name -> set of node ids of reaching definitions.
_Env = dict[str, frozenset[int]]


class _Extractor:
    def __init__(self) -> None:
        self.occurrences: list[tuple[int, str, str]] = []  # (token_index, name, role)
        self.node_id: dict[int, int] = {}  # token_index -> node id (after ordering)
        self.edges: set[tuple[int, int]] = set()

    # -- pass 1: collect occurrences in token order ----------------------

    def collect(self, node: AstNode) -> None:
        if isinstance(node, Module):
            for s in node.body:
                self.collect(s)
        elif isinstance(node, FunctionDef):
            for p in node.params:
                self.occurrences.append((p.token_index, p.name, ROLE_DEF))
            for s in node.body:
                self.collect(s)
        elif isinstance(node, Assign):
            self._collect_expr(node.value)
            self.occurrences.append((node.target.token_index, node.target.id, ROLE_DEF))
        elif isinstance(node, AugAssign):
            self._collect_expr(node.value)
            self.occurrences.append((node.target.token_index, node.target.id, ROLE_DEF))
        elif isinstance(node, If):
            self._collect_expr(node.test)
            for s in node.body:
                self.collect(s)
            for s in node.orelse:
                self.collect(s)
        elif isinstance(node, While):
            self._collect_expr(node.test)
            for s in node.body:
                self.collect(s)
        elif isinstance(node, For):
            self.occurrences.append((node.target.token_index, node.target.id, ROLE_DEF))
            self._collect_expr(node.iter)
            for s in node.body:
                self.collect(s)
        elif isinstance(node, Return):
            if node.value is not None:
                self._collect_expr(node.value)
        elif isinstance(node, ExprStmt):
            self._collect_expr(node.value)
        else:
            raise TypeError(f"unexpected statement node: {node!r}")

    def _collect_expr(self, node: AstNode) -> None:
        if isinstance(node, Name):
            self.occurrences.append((node.token_index, node.id, ROLE_USE))
        elif isinstance(node, BinOp):
            self._collect_expr(node.left)
            self._collect_expr(node.right)
        elif isinstance(node, Call):
            for a in node.args:
                self._collect_expr(a)
        elif isinstance(node, Literal):
            pass
        else:
            raise TypeError(f"unexpected expression node: {node!r}")

    # -- pass 2: reaching-definitions walk, accumulating edges -----------

    def walk_body(self, stmts: tuple, env: _Env) -> _Env:
        for s in stmts:
            env = self.walk_stmt(s, env)
        return env

    def walk_stmt(self, node: AstNode, env: _Env) -> _Env:
        if isinstance(node, Assign):
            sources = self.uses_in(node.value, env)
            return self.define(node.target.token_index, node.target.id, sources, env)
        if isinstance(node, AugAssign):
            # x (op)= e: the single occurrence of x is fed by its own prior
            # reaching definitions as well as everything in e.
            sources = self.uses_in(node.value, env)
            sources |= env.get(node.target.id, frozenset())
            return self.define(node.target.token_index, node.target.id, sources, env)
        if isinstance(node, If):
            self.uses_in(node.test, env)
            env_body = self.walk_body(node.body, dict(env))
            env_else = self.walk_body(node.orelse, dict(env)) if node.orelse else env
            return _merge(env_body, env_else)
        if isinstance(node, While):
            def one_pass(e: _Env) -> _Env:
                self.uses_in(node.test, e)
                return self.walk_body(node.body, dict(e))
            after = one_pass(env)
            after = one_pass(_merge(env, after))
            return _merge(env, after)
        if isinstance(node, For):
            def one_pass(e: _Env) -> _Env:
                sources = self.uses_in(node.iter, e)
                e = self.define(node.target.token_index, node.target.id, sources, e)
                return self.walk_body(node.body, dict(e))
            after = one_pass(env)
            after = one_pass(_merge(env, after))
            return _merge(env, after)
        if isinstance(node, FunctionDef):
            # Fresh scope seeded by the parameters; no closure capture.
            inner: _Env = {}
            for p in node.params:
                inner[p.name] = frozenset({self.node_id[p.token_index]})
            self.walk_body(node.body, inner)
            return env
        if isinstance(node, Return):
            if node.value is not None:
                self.uses_in(node.value, env)
            return env
        if isinstance(node, ExprStmt):
            self.uses_in(node.value, env)
            return env
        raise TypeError(f"unexpected statement node: {node!r}")

    def uses_in(self, node: AstNode, env: _Env) -> frozenset[int]:
        """Resolve every use in an expression against `env`, adding def->use
        edges, and return the set of node ids occurring in the expression."""
        if isinstance(node, Name):
            uid = self.node_id[node.token_index]
            for did in env.get(node.id, frozenset()):
                self.add_edge(did, uid)
            return frozenset({uid})
        if isinstance(node, BinOp):
            return self.uses_in(node.left, env) | self.uses_in(node.right, env)
        if isinstance(node, Call):
            out: frozenset[int] = frozenset()
            for a in node.args:
                out |= self.uses_in(a, env)
            return out
        if isinstance(node, Literal):
            return frozenset()
        raise TypeError(f"unexpected expression node: {node!r}")

    def define(
        self, token_index: int, name: str, sources: frozenset[int], env: _Env
    ) -> _Env:
        did = self.node_id[token_index]
        for sid in sources:
            self.add_edge(sid, did)
        env = dict(env)
        env[name] = frozenset({did})
        return env

    def add_edge(self, src: int, dst: int) -> None:
        if src != dst:  # self-loops are a mask-time concern, never stored
            self.edges.add((src, dst))


def _merge(a: _Env, b: _Env) -> _Env:
    out = dict(a)
    for name, ids in b.items():
        out[name] = out.get(name, frozenset()) | ids
    return out


def build_dfg(ast: Module) -> DataFlowGraph:
    """Extract the data-flow graph of a parsed module."""
    ex = _Extractor()
    ex.collect(ast)
    ordered = sorted(ex.occurrences)
    ex.node_id = {tok: i for i, (tok, _, _) in enumerate(ordered)}
    ex.walk_body(ast.body, {})
    nodes = tuple(
        VariableNode(id=i, name=name, token_index=tok, role=role)
        for i, (tok, name, role) in enumerate(ordered)
    )
    return DataFlowGraph(nodes=nodes, edges=frozenset(ex.edges))


def align_to_tokens(dfg: DataFlowGraph) -> set[tuple[int, int]]:
    """Pairs <node_id, token_index> linking each node to the identifier
    token it was identified from."""
    return {(node.id, node.token_index) for node in dfg.nodes}


def serialize_dfg(dfg: DataFlowGraph) -> str:
    """Emit the canonical JSON form (edges sorted lexicographically)."""
    payload = {
        "nodes": [
            {"id": n.id, "name": n.name, "token": n.token_index} for n in dfg.nodes
        ],
        "edges": [list(e) for e in sorted(dfg.edges)],
    }
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


def deserialize_dfg(text: str) -> DataFlowGraph:
    payload = json.loads(text)
    nodes = tuple(
        VariableNode(id=n["id"], name=n["name"], token_index=n["token"])
        for n in payload["nodes"]
    )
    edges = frozenset((src, dst) for src, dst in payload["edges"])
    return DataFlowGraph(nodes=nodes, edges=edges)


def extract_dfg(source: str) -> DataFlowGraph:
    """tokenize + parse + build_dfg in one call."""
    from .frontend import parse_source

    return build_dfg(parse_source(source))
