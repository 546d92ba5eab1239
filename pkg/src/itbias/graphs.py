"""Time-varying causal DAGs with conditioning sets.

The graph value is immutable: nodes, directed edges, and a "boxed"
(conditioned) subset.  On top of it sit a line-oriented text grammar,
a reachability-based d-separation decision procedure, simple-path
enumeration with open/blocked annotation, and a bias-structure
classifier that sorts open non-causal paths into confounding-shaped
and collider-opened witnesses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from itertools import pairwise
from typing import Iterable, Union

LABEL_RE = re.compile(r"[A-Za-z][A-Za-z0-9+]*")
_SPLIT_RE = re.compile(r"^([A-Za-z]+)([0-9+][A-Za-z0-9+]*)?$")
_EDGE_RE = re.compile(r"^([A-Za-z][A-Za-z0-9+]*)\s*->\s*([A-Za-z][A-Za-z0-9+]*)$")
_BOX_RE = re.compile(r"^\[\s*([A-Za-z][A-Za-z0-9+]*)\s*\]$")

PATH_ENUMERATION_CAP = 10_000


class DagError(Exception):
    """Base class for graph-layer failures."""


class DagSyntaxError(DagError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CycleError(DagError):
    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        labels = " -> ".join(v.label for v in self.cycle)
        super().__init__(f"cycle detected: {labels}")


class UnknownNodeError(DagError):
    pass


class PathLimitError(DagError):
    pass


@dataclass(frozen=True)
class VariableId:
    """A node symbol split into a name and a time-tag suffix.

    ``"D0+"`` parses to ``("D", "0+")`` and renders back as the name
    immediately followed by the tag.
    """

    name: str
    time_tag: str = ""

    @classmethod
    def parse(cls, label: str) -> "VariableId":
        if not LABEL_RE.fullmatch(label):
            raise ValueError(f"invalid node label {label!r}")
        m = _SPLIT_RE.match(label)
        if m is None:
            raise ValueError(f"invalid node label {label!r}")
        return cls(m.group(1), m.group(2) or "")

    @property
    def label(self) -> str:
        return self.name + self.time_tag

    def __str__(self) -> str:
        return self.label


NodeLike = Union[VariableId, str]


def _as_node(v: NodeLike) -> VariableId:
    return v if isinstance(v, VariableId) else VariableId.parse(v)


def _as_nodeset(vs: Iterable[NodeLike]) -> frozenset[VariableId]:
    return frozenset(_as_node(v) for v in vs)


class Dag:
    """Immutable directed acyclic graph with a conditioned node subset.

    Nodes and edge endpoints may be given as ``VariableId`` or plain
    labels.  Construction validates edge membership, ``conditioned``
    membership, and acyclicity (reporting one concrete cycle).
    """

    __slots__ = ("nodes", "edges", "conditioned", "_parents", "_children")

    def __init__(
        self,
        nodes: Iterable[NodeLike] = (),
        edges: Iterable[tuple[NodeLike, NodeLike]] = (),
        conditioned: Iterable[NodeLike] = (),
    ):
        edge_set = frozenset((_as_node(a), _as_node(b)) for a, b in edges)
        node_set = _as_nodeset(nodes)
        boxed = _as_nodeset(conditioned)
        for a, b in edge_set:
            for v in (a, b):
                if v not in node_set:
                    raise UnknownNodeError(f"unknown node in edge: {v}")
        unknown = boxed - node_set
        if unknown:
            names = ", ".join(sorted(v.label for v in unknown))
            raise UnknownNodeError(f"conditioned nodes not in graph: {names}")
        object.__setattr__(self, "nodes", node_set)
        object.__setattr__(self, "edges", edge_set)
        object.__setattr__(self, "conditioned", boxed)
        parents: dict[VariableId, set[VariableId]] = {v: set() for v in node_set}
        children: dict[VariableId, set[VariableId]] = {v: set() for v in node_set}
        for a, b in edge_set:
            children[a].add(b)
            parents[b].add(a)
        object.__setattr__(self, "_parents", parents)
        object.__setattr__(self, "_children", children)
        self._check_acyclic()

    def __setattr__(self, *_):
        raise AttributeError("Dag is immutable")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dag)
            and self.nodes == other.nodes
            and self.edges == other.edges
            and self.conditioned == other.conditioned
        )

    def __hash__(self) -> int:
        return hash((self.nodes, self.edges, self.conditioned))

    def __repr__(self) -> str:
        return (
            f"Dag(nodes={sorted(v.label for v in self.nodes)}, "
            f"edges={sorted((a.label, b.label) for a, b in self.edges)}, "
            f"conditioned={sorted(v.label for v in self.conditioned)})"
        )

    def parents(self, v: NodeLike) -> frozenset[VariableId]:
        return frozenset(self._parents[self._require(v)])

    def children(self, v: NodeLike) -> frozenset[VariableId]:
        return frozenset(self._children[self._require(v)])

    def ancestors(self, vs: Iterable[NodeLike]) -> frozenset[VariableId]:
        """Strict ancestors of the given set (the set itself excluded)."""
        seen: set[VariableId] = set()
        stack = [p for v in vs for p in self._parents[self._require(v)]]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            stack.extend(self._parents[u])
        return frozenset(seen)

    def descendants(self, v: NodeLike) -> frozenset[VariableId]:
        """Strict descendants of one node."""
        seen: set[VariableId] = set()
        stack = list(self._children[self._require(v)])
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            stack.extend(self._children[u])
        return frozenset(seen)

    def collider_openers(self, zs: Iterable[NodeLike]) -> frozenset[VariableId]:
        """Nodes that, as colliders, are opened by conditioning on ``zs``.

        A collider conducts when it or any descendant is conditioned,
        i.e. when the collider is the conditioning set or an ancestor
        of it.
        """
        z = _as_nodeset(zs)
        return z | self.ancestors(z)

    def _require(self, v: NodeLike) -> VariableId:
        node = _as_node(v)
        if node not in self.nodes:
            raise UnknownNodeError(f"unknown node: {node}")
        return node

    def _check_acyclic(self) -> None:
        indeg = {v: len(self._parents[v]) for v in self.nodes}
        queue = [v for v, d in indeg.items() if d == 0]
        done = 0
        while queue:
            v = queue.pop()
            done += 1
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if done == len(self.nodes):
            return
        # Walk inside the residual subgraph until a node repeats.
        residual = {v for v, d in indeg.items() if d > 0}
        v = min(residual, key=lambda n: n.label)
        trail: list[VariableId] = []
        index: dict[VariableId, int] = {}
        while v not in index:
            index[v] = len(trail)
            trail.append(v)
            v = min(
                (c for c in self._children[v] if c in residual),
                key=lambda n: n.label,
            )
        raise CycleError(trail[index[v]:] + [v])


class PathStatus(Enum):
    OPEN = "open"
    BLOCKED = "blocked"


class PathKind(Enum):
    """Connection mechanism of a path.

    CAUSAL: every edge points toward the terminal node.  CONFOUNDING:
    non-causal and collider-free, so it conducts on its own (shared
    cause or reverse direction).  COLLIDER_OPENED: passes through
    colliders and therefore conducts only when conditioning opens
    them.  MIXED is reserved for paths exhibiting both non-causal
    mechanisms at once; no such path exists under this formalization
    (a fork that reaches both endpoints excludes colliders), but the
    classifier counts it toward both witness kinds if produced.
    """

    CAUSAL = "causal"
    CONFOUNDING = "confounding-path"
    COLLIDER_OPENED = "collider-opened"
    MIXED = "mixed"


class BiasKind(Enum):
    NONE = "none"
    CONFOUNDING = "confounding"
    SELECTION = "selection"
    COMPOSITE = "composite"

    @property
    def display(self) -> str:
        return {"none": "None"}.get(self.value, self.value.capitalize())


NON_COLLIDER_CONDITIONED = "non-collider conditioned"
COLLIDER_UNCONDITIONED = "collider unconditioned"


@dataclass(frozen=True)
class AnnotatedPath:
    """A simple path with blocking status and mechanism classification."""

    nodes: tuple[VariableId, ...]
    arrows: tuple[str, ...]
    status: PathStatus
    blockers: tuple[tuple[VariableId, str], ...]
    classification: PathKind

    @property
    def is_open(self) -> bool:
        return self.status is PathStatus.OPEN

    def describe(self) -> str:
        parts = [self.nodes[0].label]
        for arrow, node in zip(self.arrows, self.nodes[1:]):
            parts.append(arrow)
            parts.append(node.label)
        return " ".join(parts)

    def labels(self) -> tuple[str, ...]:
        return tuple(v.label for v in self.nodes)


@dataclass(frozen=True)
class BiasStructure:
    kind: BiasKind
    witness_paths: tuple[AnnotatedPath, ...]


def parse_dag(text: str) -> Dag:
    """Parse the line-oriented DAG grammar.

    Comment lines start with ``#``; ``A -> B`` adds an edge (declaring
    both endpoints), ``[A]`` boxes A as conditioned, and a bare label
    declares an isolated node.  A bare declaration of an existing node
    is a duplicate-node error.
    """
    nodes: set[VariableId] = set()
    declared: set[VariableId] = set()
    edges: list[tuple[VariableId, VariableId]] = []
    boxed: set[VariableId] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _EDGE_RE.match(line)
        if m:
            a, b = VariableId.parse(m.group(1)), VariableId.parse(m.group(2))
            nodes.update((a, b))
            edges.append((a, b))
            continue
        m = _BOX_RE.match(line)
        if m:
            v = VariableId.parse(m.group(1))
            nodes.add(v)
            boxed.add(v)
            continue
        if LABEL_RE.fullmatch(line):
            v = VariableId.parse(line)
            if v in declared or v in nodes:
                raise DagSyntaxError(
                    f"duplicate node declaration {v.label!r}",
                    lineno,
                    raw.index(line) + 1,
                )
            declared.add(v)
            nodes.add(v)
            continue
        head = LABEL_RE.match(line)
        column = raw.index(line) + (head.end() if head else 0) + 1
        raise DagSyntaxError(f"cannot parse {line!r}", lineno, column)
    return Dag(nodes=nodes, edges=edges, conditioned=boxed)


def render_dag(dag: Dag) -> str:
    """Emit text that ``parse_dag`` maps back to an equal graph."""
    lines = [f"[{v.label}]" for v in sorted(dag.conditioned, key=lambda n: n.label)]
    for a, b in sorted(dag.edges, key=lambda e: (e[0].label, e[1].label)):
        lines.append(f"{a.label} -> {b.label}")
    linked = {v for e in dag.edges for v in e} | dag.conditioned
    lines.extend(
        v.label for v in sorted(dag.nodes - linked, key=lambda n: n.label)
    )
    return "\n".join(lines) + ("\n" if lines else "")


def to_dot(dag: Dag) -> str:
    """Deterministic DOT export; conditioned nodes get a box shape."""
    lines = ["digraph G {"]
    for v in sorted(dag.nodes, key=lambda n: n.label):
        attr = " [shape=box]" if v in dag.conditioned else ""
        lines.append(f'  "{v.label}"{attr};')
    for a, b in sorted(dag.edges, key=lambda e: (e[0].label, e[1].label)):
        lines.append(f'  "{a.label}" -> "{b.label}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def is_d_separated(
    dag: Dag,
    xs: Iterable[NodeLike],
    ys: Iterable[NodeLike],
    zs: Iterable[NodeLike] = (),
) -> bool:
    """Decide whether ``zs`` blocks every path between ``xs`` and ``ys``.

    A non-collider blocks when conditioned; a collider blocks unless it
    or a descendant is conditioned.  Blocking applies to interior nodes
    only, so membership of an endpoint in ``zs`` is irrelevant.  The
    decision walks directed edge states (reachability, no path
    enumeration) and runs in time linear in the edge count.
    """
    x_set = frozenset(dag._require(v) for v in xs)
    y_set = frozenset(dag._require(v) for v in ys)
    z_set = frozenset(dag._require(v) for v in zs)
    if x_set & y_set:
        raise ValueError("source and target sets must be disjoint")
    if not x_set or not y_set:
        return True
    openers = dag.collider_openers(z_set)

    # State (v, entered_incoming): the trail reached v along an edge
    # pointing into v (True) or out of v (False).
    stack: list[tuple[VariableId, bool]] = []
    for x in x_set:
        stack.extend((c, True) for c in dag._children[x])
        stack.extend((p, False) for p in dag._parents[x])
    seen: set[tuple[VariableId, bool]] = set()
    while stack:
        state = stack.pop()
        if state in seen:
            continue
        seen.add(state)
        v, entered_incoming = state
        if v in y_set:
            return False
        if entered_incoming:
            if v not in z_set:  # chain -> v ->
                stack.extend((c, True) for c in dag._children[v])
            if v in openers:  # collider -> v <-
                stack.extend((p, False) for p in dag._parents[v])
        else:
            if v not in z_set:  # fork <- v -> and chain <- v <-
                stack.extend((c, True) for c in dag._children[v])
                stack.extend((p, False) for p in dag._parents[v])
    return True


def annotate_path(
    dag: Dag,
    nodes: Iterable[NodeLike],
    zs: Iterable[NodeLike] = (),
) -> AnnotatedPath:
    """Annotate one node sequence with status, blockers, and mechanism."""
    path = [dag._require(v) for v in nodes]
    if len(path) < 2:
        raise ValueError("a path needs at least two nodes")
    if len(set(path)) != len(path):
        raise ValueError("path nodes must be distinct")
    z_set = frozenset(dag._require(v) for v in zs)
    openers = dag.collider_openers(z_set)
    arrows: list[str] = []
    for a, b in pairwise(path):
        if (a, b) in dag.edges:
            arrows.append("->")
        elif (b, a) in dag.edges:
            arrows.append("<-")
        else:
            raise UnknownNodeError(f"no edge between {a} and {b}")
    blockers: list[tuple[VariableId, str]] = []
    n_colliders = 0
    for i in range(1, len(path) - 1):
        is_collider = arrows[i - 1] == "->" and arrows[i] == "<-"
        if is_collider:
            n_colliders += 1
            if path[i] not in openers:
                blockers.append((path[i], COLLIDER_UNCONDITIONED))
        elif path[i] in z_set:
            blockers.append((path[i], NON_COLLIDER_CONDITIONED))
    status = PathStatus.OPEN if not blockers else PathStatus.BLOCKED
    if all(a == "->" for a in arrows):
        kind = PathKind.CAUSAL
    elif n_colliders == 0:
        kind = PathKind.CONFOUNDING
    else:
        kind = PathKind.COLLIDER_OPENED
    return AnnotatedPath(tuple(path), tuple(arrows), status, tuple(blockers), kind)


def open_paths(
    dag: Dag,
    x: NodeLike,
    y: NodeLike,
    zs: Iterable[NodeLike] = (),
) -> list[AnnotatedPath]:
    """Enumerate every simple path between ``x`` and ``y``, annotated.

    Ordering is shortest-first, then lexicographic by node labels.
    Enumeration aborts with ``PathLimitError`` beyond
    ``PATH_ENUMERATION_CAP`` paths.
    """
    src = dag._require(x)
    dst = dag._require(y)
    if src == dst:
        raise ValueError("path endpoints must differ")
    z_set = frozenset(dag._require(v) for v in zs)
    neighbors = {
        v: sorted(dag._parents[v] | dag._children[v], key=lambda n: n.label)
        for v in dag.nodes
    }
    found: list[tuple[VariableId, ...]] = []
    trail: list[VariableId] = [src]
    on_trail = {src}

    def walk(v: VariableId) -> None:
        for nxt in neighbors[v]:
            if nxt == dst:
                if len(found) >= PATH_ENUMERATION_CAP:
                    raise PathLimitError(
                        f"more than {PATH_ENUMERATION_CAP} simple paths "
                        f"between {src} and {dst}"
                    )
                found.append(tuple(trail) + (dst,))
            elif nxt not in on_trail:
                trail.append(nxt)
                on_trail.add(nxt)
                walk(nxt)
                trail.pop()
                on_trail.remove(nxt)

    walk(src)
    annotated = [annotate_path(dag, p, z_set) for p in found]
    annotated.sort(key=lambda p: (len(p.nodes), p.labels()))
    return annotated


def classify_bias(
    dag: Dag,
    exposures: Iterable[NodeLike],
    outcome: NodeLike,
    zs: Iterable[NodeLike] | None = None,
) -> BiasStructure:
    """Classify the open non-causal paths from ``exposures`` to ``outcome``.

    Confounding: some open non-causal path conducts without any
    conditioned collider.  Selection: some open non-causal path
    conducts only because conditioning opened its colliders.
    Composite when both witness kinds exist, None when no non-causal
    open path exists.  ``zs`` defaults to ``dag.conditioned``.
    ``witness_paths`` carries one minimal witness per kind present.
    """
    z_set = dag.conditioned if zs is None else frozenset(
        dag._require(v) for v in zs
    )
    exp_set = sorted(
        {dag._require(v) for v in exposures}, key=lambda n: n.label
    )
    out = dag._require(outcome)
    if out in exp_set:
        raise ValueError("outcome cannot be an exposure node")

    def better(old, new):
        if old is None:
            return new
        return min(old, new, key=lambda p: (len(p.nodes), p.labels()))

    conf_witness = None
    sel_witness = None
    for e in exp_set:
        for path in open_paths(dag, e, out, z_set):
            if not path.is_open or path.classification is PathKind.CAUSAL:
                continue
            if path.classification in (PathKind.CONFOUNDING, PathKind.MIXED):
                conf_witness = better(conf_witness, path)
            if path.classification in (PathKind.COLLIDER_OPENED, PathKind.MIXED):
                sel_witness = better(sel_witness, path)
    if conf_witness and sel_witness:
        kind = BiasKind.COMPOSITE
    elif conf_witness:
        kind = BiasKind.CONFOUNDING
    elif sel_witness:
        kind = BiasKind.SELECTION
    else:
        kind = BiasKind.NONE
    witnesses = tuple(p for p in (conf_witness, sel_witness) if p is not None)
    return BiasStructure(kind, witnesses)
