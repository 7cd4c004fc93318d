"""Causal DAGs: DOT-subset parsing, role validation, d-separation and
back-door adjustment-set identification."""

from __future__ import annotations

import itertools
import logging
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

log = logging.getLogger(__name__)

INPUT = "input"
OUTPUT = "output"


class DagError(ValueError):
    pass


class DotSyntaxError(DagError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{message} at line {line}, column {column}")


class CycleError(DagError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("cycle detected: " + " -> ".join(cycle))


class DuplicateEdgeError(DagError):
    pass


class UnknownNodeError(DagError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else "unknown node"


class NoAdjustmentSetError(DagError):
    pass


@dataclass(frozen=True)
class RoleViolation:
    edge: tuple[str, str]
    assumption: int
    severity: str
    message: str


@dataclass(frozen=True)
class CausalDag:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    _parents: dict = field(init=False, repr=False, compare=False, hash=False)
    _children: dict = field(init=False, repr=False, compare=False, hash=False)

    def __init__(self, nodes: Iterable[str] = (), edges: Iterable[tuple[str, str]] = ()):
        edges = list(edges)
        nodes = set(nodes)
        seen = set()
        for a, b in edges:
            if a == b:
                raise DagError(f"self-loop on {a!r}")
            if (a, b) in seen:
                raise DuplicateEdgeError(f"duplicate edge {a} -> {b}")
            seen.add((a, b))
            for n in (a, b):
                if n not in nodes:
                    raise UnknownNodeError(f"edge endpoint {n!r} is not a declared node")
        for n in nodes:
            if not isinstance(n, str) or not n:
                raise DagError(f"node names must be non-empty strings, got {n!r}")
        parents = {n: set() for n in nodes}
        children = {n: set() for n in nodes}
        for a, b in seen:
            parents[b].add(a)
            children[a].add(b)
        object.__setattr__(self, "nodes", frozenset(nodes))
        object.__setattr__(self, "edges", frozenset(seen))
        object.__setattr__(self, "_parents", {k: frozenset(v) for k, v in parents.items()})
        object.__setattr__(self, "_children", {k: frozenset(v) for k, v in children.items()})
        cycle = self._find_cycle()
        if cycle:
            raise CycleError(cycle)

    @classmethod
    def from_edges(cls, edges, nodes=()):
        edges = list(edges)
        return cls(set(nodes) | {n for e in edges for n in e}, edges)

    def parents(self, node: str) -> frozenset[str]:
        self._check(node)
        return self._parents[node]

    def children(self, node: str) -> frozenset[str]:
        self._check(node)
        return self._children[node]

    def neighbours(self, node: str) -> frozenset[str]:
        return self.parents(node) | self.children(node)

    def descendants(self, node: str) -> set[str]:
        """Proper descendants; a node is not its own descendant."""
        return self._reach(node, self._children)

    def ancestors(self, node: str) -> set[str]:
        return self._reach(node, self._parents)

    def _reach(self, node, adjacency):
        self._check(node)
        out = set()
        stack = [node]
        while stack:
            for nxt in adjacency[stack.pop()]:
                if nxt not in out:
                    out.add(nxt)
                    stack.append(nxt)
        out.discard(node)
        return out

    def _check(self, *nodes):
        for n in nodes:
            if n not in self.nodes:
                raise UnknownNodeError(f"unknown node {n!r}")

    def _find_cycle(self):
        white, grey, black = 0, 1, 2
        colour = dict.fromkeys(self.nodes, white)
        for root in sorted(self.nodes):
            if colour[root] != white:
                continue
            stack = [(root, iter(sorted(self._children[root])))]
            path = [root]
            colour[root] = grey
            while stack:
                node, it = stack[-1]
                for child in it:
                    if colour[child] == grey:
                        return path[path.index(child):] + [child]
                    if colour[child] == white:
                        colour[child] = grey
                        path.append(child)
                        stack.append((child, iter(sorted(self._children[child]))))
                        break
                else:
                    colour[node] = black
                    path.pop()
                    stack.pop()
        return None

    def topological_order(self) -> list[str]:
        indeg = {n: len(self._parents[n]) for n in self.nodes}
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in sorted(self._children[n]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        return order

    def without_outgoing(self, node: str) -> "CausalDag":
        self._check(node)
        return CausalDag(self.nodes, [e for e in self.edges if e[0] != node])

    def with_edge(self, a: str, b: str) -> "CausalDag":
        return CausalDag(self.nodes | {a, b}, list(self.edges) + [(a, b)])


# --- DOT subset -----------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/|\#[^\n]*)
  | (?P<arrow>->)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<attrs>\[[^\]]*\])
  | (?P<punct>[{};])
    """,
    re.VERBOSE | re.DOTALL,
)


def _tokenize(text):
    pos = 0
    line, line_start = 1, 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DotSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append((kind, m.group(), line, m.start() - line_start + 1))
        chunk = m.group()
        if "\n" in chunk:
            line += chunk.count("\n")
            line_start = m.start() + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(("eof", "", line, pos - line_start + 1))
    return tokens


def parse_dot(text: str) -> CausalDag:
    """Parse ``digraph NAME? { stmt* }`` where each statement is ``node;``
    or a chain ``a -> b -> c;``. Attribute lists are ignored with a warning.
    """
    tokens = _tokenize(text)
    i = 0

    def expect(kind, value=None):
        nonlocal i
        k, v, ln, col = tokens[i]
        if k != kind or (value is not None and v != value):
            want = value or kind
            got = v or "end of input"
            raise DotSyntaxError(f"expected {want!r}, got {got!r}", ln, col)
        i += 1
        return v

    def peek():
        return tokens[i]

    kw = expect("ident")
    if kw != "digraph":
        _, _, ln, col = tokens[0]
        raise DotSyntaxError(f"expected 'digraph', got {kw!r}", ln, col)
    if peek()[0] == "ident":
        i += 1
    expect("punct", "{")
    nodes: list[str] = []
    edges: list[tuple[str, str]] = []
    seen_edges = set()
    while not (peek()[0] == "punct" and peek()[1] == "}"):
        _, _, ln, col = peek()
        chain = [expect("ident")]
        while peek()[0] == "arrow":
            i += 1
            chain.append(expect("ident"))
        if peek()[0] == "attrs":
            log.warning("ignoring attributes %s at line %d", peek()[1], peek()[2])
            i += 1
        if peek()[0] == "punct" and peek()[1] == ";":
            i += 1
        nodes.extend(chain)
        for a, b in zip(chain, chain[1:]):
            if (a, b) in seen_edges:
                raise DuplicateEdgeError(f"duplicate edge {a} -> {b} at line {ln}, column {col}")
            seen_edges.add((a, b))
            edges.append((a, b))
    expect("punct", "}")
    expect("eof")
    return CausalDag(nodes, edges)


def read_dot(path) -> CausalDag:
    with open(path, encoding="utf-8") as fh:
        return parse_dot(fh.read())


def serialize_dot(dag: CausalDag, name: str = "G") -> str:
    lines = [f"digraph {name} {{"]
    lines += [f"  {n};" for n in sorted(dag.nodes)]
    lines += [f"  {a} -> {b};" for a, b in sorted(dag.edges)]
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- roles ----------------------------------------------------------------

def validate_roles(dag: CausalDag, roles: dict[str, str]) -> list[RoleViolation]:
    """Check that outputs never cause inputs (error) and flag input-to-input
    edges (warning)."""
    unknown = sorted(set(roles) - dag.nodes)
    if unknown:
        raise UnknownNodeError(f"roles reference unknown nodes: {', '.join(unknown)}")
    missing = sorted(dag.nodes - set(roles))
    if missing:
        raise DagError(f"roles missing for nodes: {', '.join(missing)}")
    for n, r in roles.items():
        if r not in (INPUT, OUTPUT):
            raise DagError(f"role for {n!r} must be 'input' or 'output', got {r!r}")
    out = []
    for a, b in sorted(dag.edges):
        if roles[a] == OUTPUT and roles[b] == INPUT:
            out.append(RoleViolation((a, b), 1, "error",
                                     f"output {a} -> input {b}: outputs must not cause inputs"))
        elif roles[a] == INPUT and roles[b] == INPUT:
            out.append(RoleViolation((a, b), 2, "warning",
                                     f"input {a} -> input {b}: inputs are expected to be independent"))
    return out


# --- d-separation ---------------------------------------------------------

def _as_set(xs):
    if isinstance(xs, str):
        return {xs}
    return set(xs)


def d_separated(dag: CausalDag, xs, ys, zs=()) -> bool:
    """True iff ``zs`` d-separates every node of ``xs`` from every node of ``ys``.

    Uses the reachable-trail search: a trail is active when every collider on
    it is in ``zs`` or has a descendant in ``zs`` and no other node is in ``zs``.
    """
    xs, ys, zs = _as_set(xs), _as_set(ys), _as_set(zs)
    if not xs or not ys:
        raise DagError("xs and ys must be non-empty")
    dag._check(*xs, *ys, *zs)
    if (xs & ys) or (xs & zs) or (ys & zs):
        raise DagError("xs, ys and zs must be pairwise disjoint")

    # zs together with its ancestors: colliders in here are open
    anc_z = set(zs)
    for z in zs:
        anc_z |= dag.ancestors(z)

    # states: (node, direction) where "up" means reached from a child
    visited = set()
    queue = deque((x, "up") for x in xs)
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in zs and node in ys:
            return False
        if direction == "up" and node not in zs:
            for p in dag._parents[node]:
                queue.append((p, "up"))
            for c in dag._children[node]:
                queue.append((c, "down"))
        elif direction == "down":
            if node not in zs:
                for c in dag._children[node]:
                    queue.append((c, "down"))
            if node in anc_z:
                for p in dag._parents[node]:
                    queue.append((p, "up"))
    return True


def path_blocked(dag: CausalDag, path, zs) -> bool:
    """Whether a single undirected path is blocked by ``zs``."""
    zs = _as_set(zs)
    for a, k, b in zip(path, path[1:], path[2:]):
        into_k_from_a = (a, k) in dag.edges
        into_k_from_b = (b, k) in dag.edges
        if into_k_from_a and into_k_from_b:
            if k not in zs and not (dag.descendants(k) & zs):
                return True
        elif k in zs:
            return True
    return False


# --- back-door ------------------------------------------------------------

def _simple_paths(dag, start, end, first_step):
    out = []

    def walk(path, seen):
        node = path[-1]
        if node == end:
            out.append(list(path))
            return
        nxt = first_step if len(path) == 1 else dag.neighbours(node)
        for n in sorted(nxt):
            if n not in seen:
                seen.add(n)
                path.append(n)
                walk(path, seen)
                path.pop()
                seen.discard(n)

    walk([start], {start})
    return out


def backdoor_paths(dag: CausalDag, treatment: str, outcome: str) -> list[list[str]]:
    """Simple undirected paths from treatment to outcome starting with an
    edge into the treatment, in lexicographic order."""
    dag._check(treatment, outcome)
    if treatment == outcome:
        raise DagError("treatment and outcome must differ")
    return sorted(_simple_paths(dag, treatment, outcome, dag.parents(treatment)))


def satisfies_backdoor(dag: CausalDag, treatment: str, outcome: str, zs) -> bool:
    zs = _as_set(zs)
    dag._check(treatment, outcome, *zs)
    if treatment in zs or outcome in zs:
        raise DagError("adjustment set must exclude treatment and outcome")
    if zs & dag.descendants(treatment):
        return False
    # with the treatment's outgoing edges cut, only back-door paths remain
    return d_separated(dag.without_outgoing(treatment), {treatment}, {outcome}, zs)


def _set_key(s):
    return (len(s), sorted(s))


def enumerate_adjustment_sets(dag: CausalDag, treatment: str, outcome: str,
                              max_nodes: int = 20) -> list[frozenset[str]]:
    """All sufficient adjustment sets, ordered by size then lexicographically."""
    dag._check(treatment, outcome)
    if treatment == outcome:
        raise DagError("treatment and outcome must differ")
    if len(dag.nodes) > max_nodes:
        raise DagError(f"refusing exhaustive enumeration over {len(dag.nodes)} nodes "
                       f"(cap {max_nodes})")
    universe = sorted(dag.nodes - {treatment, outcome} - dag.descendants(treatment))
    cut = dag.without_outgoing(treatment)
    found = []
    for k in range(len(universe) + 1):
        for combo in itertools.combinations(universe, k):
            if d_separated(cut, {treatment}, {outcome}, combo):
                found.append(frozenset(combo))
    return sorted(found, key=_set_key)


def minimal_adjustment_set(dag: CausalDag, treatment: str, outcome: str,
                           max_nodes: int = 20) -> frozenset[str]:
    sets = enumerate_adjustment_sets(dag, treatment, outcome, max_nodes=max_nodes)
    if not sets:
        raise NoAdjustmentSetError(
            f"no sufficient adjustment set for the effect of {treatment} on {outcome}")
    return sets[0]


def format_set(s) -> str:
    return "{" + ", ".join(sorted(s)) + "}"
