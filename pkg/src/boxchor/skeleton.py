"""Skeletons: partially ordered fragments of protocol executions.

A skeleton is a finite, prefix-closed set of strand-instance nodes with a
strict partial order extending strand succession.  This module provides
the occurrence cuts and their solvedness, the two realizedness checks
(adversary derivability, and the cut-based cross-check), the delivery
guarantee, and embedding/isomorphism tests used for minimality.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional

from . import penetrator
from .semantics import DirectedTerm, StrandInstance
from .terms import (Box, Message, Role, contains, found_outside,
                    render_message, subboxes, value_names)


@dataclass(frozen=True)
class NodeId:
    instance: StrandInstance
    index: int  # 1-based position on the strand

    def __post_init__(self) -> None:
        if not 1 <= self.index <= len(self.instance):
            raise ValueError(f"node index {self.index} out of range")

    @property
    def directed(self) -> DirectedTerm:
        return self.instance.trace[self.index - 1]

    @property
    def msg(self) -> Message:
        return self.directed.message

    @property
    def positive(self) -> bool:
        return self.directed.positive

    @property
    def role(self) -> Role:
        return self.instance.role

    def sort_key(self):
        return (*self.instance.sort_key(), self.index)

    def __str__(self) -> str:
        return f"{self.instance}[{self.index}]"


class StepRejected(Exception):
    """Raised when an order extension would create a cycle."""


class Skeleton:
    """Immutable node set plus strict partial order.

    Only cross-strand generator edges are stored; strand succession is
    implicit and always part of the order.  The transitive closure is
    computed once on demand.
    """

    __slots__ = ("nodes", "cross", "_closure", "_instances", "_key")

    def __init__(self, nodes: Iterable[NodeId],
                 cross: Iterable[tuple[NodeId, NodeId]] = ()):
        self.nodes: frozenset[NodeId] = frozenset(nodes)
        self.cross: frozenset[tuple[NodeId, NodeId]] = frozenset(cross)
        for m, n in self.cross:
            if m not in self.nodes or n not in self.nodes:
                raise ValueError("order edge endpoint outside skeleton")
        for n in self.nodes:
            if n.index > 1 and NodeId(n.instance, n.index - 1) not in self.nodes:
                raise ValueError(f"prefix closure violated at {n}")
        self._closure: Optional[frozenset[tuple[NodeId, NodeId]]] = None
        self._instances: Optional[tuple[StrandInstance, ...]] = None
        self._key = None

    # -- basic views ---------------------------------------------------------

    @property
    def instances(self) -> tuple[StrandInstance, ...]:
        if self._instances is None:
            self._instances = tuple(sorted({n.instance for n in self.nodes},
                                           key=lambda s: s.sort_key()))
        return self._instances

    def prefix_len(self, inst: StrandInstance) -> int:
        return max((n.index for n in self.nodes if n.instance == inst), default=0)

    def sorted_nodes(self) -> list[NodeId]:
        return sorted(self.nodes, key=lambda n: n.sort_key())

    def transmissions(self) -> list[NodeId]:
        return [n for n in self.sorted_nodes() if n.positive]

    def receptions(self) -> list[NodeId]:
        return [n for n in self.sorted_nodes() if not n.positive]

    def succ_edges(self) -> list[tuple[NodeId, NodeId]]:
        out = []
        for n in self.nodes:
            if n.index > 1:
                out.append((NodeId(n.instance, n.index - 1), n))
        return out

    # -- order ----------------------------------------------------------------

    @property
    def closure(self) -> frozenset[tuple[NodeId, NodeId]]:
        """Strict causal precedence: transitive closure of succession + cross."""
        if self._closure is None:
            adj: dict[NodeId, set[NodeId]] = {n: set() for n in self.nodes}
            for m, n in self.succ_edges():
                adj[m].add(n)
            for m, n in self.cross:
                adj[m].add(n)
            pairs: set[tuple[NodeId, NodeId]] = set()
            for start in self.nodes:
                seen: set[NodeId] = set()
                stack = list(adj[start])
                while stack:
                    x = stack.pop()
                    if x in seen:
                        continue
                    seen.add(x)
                    stack.extend(adj[x])
                for x in seen:
                    pairs.add((start, x))
            if any((n, n) in pairs for n in self.nodes):
                raise StepRejected("order contains a cycle")
            self._closure = frozenset(pairs)
        return self._closure

    def precedes(self, m: NodeId, n: NodeId) -> bool:
        return (m, n) in self.closure

    def preceq(self, m: NodeId, n: NodeId) -> bool:
        return m == n or (m, n) in self.closure

    def reduced_edges(self) -> list[tuple[NodeId, NodeId]]:
        """Transitive reduction of the order (for display)."""
        cl = self.closure
        out = []
        for m, n in cl:
            if not any((m, x) in cl and (x, n) in cl for x in self.nodes):
                out.append((m, n))
        return sorted(out, key=lambda e: (e[0].sort_key(), e[1].sort_key()))

    def __eq__(self, other) -> bool:
        return (isinstance(other, Skeleton) and self.nodes == other.nodes
                and self.closure == other.closure)

    def __hash__(self) -> int:
        return hash(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def __str__(self) -> str:
        parts = []
        for inst in self.instances:
            ln = self.prefix_len(inst)
            trace = " => ".join(str(inst.trace[i]) for i in range(ln))
            parts.append(f"{inst}: {trace}")
        return "; ".join(parts)


def new_skeleton(inst: StrandInstance, length: int) -> Skeleton:
    """Single-strand skeleton holding the first `length` nodes of inst."""
    if not 1 <= length <= len(inst):
        raise ValueError(f"length {length} out of range for {inst}")
    return Skeleton([NodeId(inst, i) for i in range(1, length + 1)])


def union_up(a: Skeleton, m: NodeId, n: NodeId, m_before_n: bool) -> Skeleton:
    """a plus m's strand prefix, with the order strengthened m<n or n<m.

    Raises StepRejected when the resulting order would be cyclic.
    """
    if n not in a.nodes:
        raise ValueError(f"{n} not in skeleton")
    nodes = set(a.nodes)
    nodes.update(NodeId(m.instance, i) for i in range(1, m.index + 1))
    edge = (m, n) if m_before_n else (n, m)
    out = Skeleton(nodes, set(a.cross) | {edge})
    out.closure  # force cycle detection now
    return out


# ---------------------------------------------------------------------------
# Cuts and solvedness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cut:
    target: Box
    boxset: frozenset[Box]
    members: frozenset[NodeId]
    minimal: frozenset[NodeId]


def cut(target, boxset: Iterable[Box], a: Skeleton) -> Cut:
    """Upward-closed node set where target escapes boxset; empty = undefined."""
    bset = frozenset(boxset)
    base = {n for n in a.nodes if found_outside(target, bset, n.msg)}
    members = {n for n in a.nodes if any(b == n or a.precedes(b, n) for b in base)}
    minimal = {n for n in members
               if not any(m != n and a.precedes(m, n) for m in members)}
    return Cut(target, bset, frozenset(members), frozenset(minimal))


def canonical_b(c: Box, n: NodeId, a: Skeleton,
                compromised: frozenset[Role]) -> frozenset[Box]:
    """Boxes strictly enclosing c in messages strictly before n, with honest
    destinations; the canonical escape context for the test at n."""
    out: set[Box] = set()
    for m in a.nodes:
        if not a.precedes(m, n):
            continue
        for b in subboxes(m.msg):
            if b.dst not in compromised and contains(b, c, strict=True):
                out.add(b)
    return frozenset(out)


def cut_solved(target, boxset: Iterable[Box], a: Skeleton,
               compromised: frozenset[Role]) -> bool:
    """A cut is solved when each minimal escape is a transmission, or the
    escape is attributable to a compromised role; vacuous on empty cuts."""
    k = cut(target, boxset, a)
    if not k.members:
        return True
    if isinstance(target, Box) and target.src in compromised:
        return True
    if any(b.dst in compromised for b in k.boxset):
        return True
    return all(m.positive for m in k.minimal)


# ---------------------------------------------------------------------------
# Realizedness and delivery guarantee
# ---------------------------------------------------------------------------

def feeds(a: Skeleton, n: NodeId) -> frozenset[Message]:
    """Messages of transmissions strictly before n."""
    return frozenset(m.msg for m in a.nodes if m.positive and a.precedes(m, n))


def is_realized(a: Skeleton, compromised: frozenset[Role]) -> bool:
    """Every reception is derivable by the adversary from strictly earlier
    transmissions; the skeleton could actually occur."""
    return all(penetrator.derivable(feeds(a, n), n.msg, compromised)
               for n in a.receptions())


def is_realized_cutcheck(a: Skeleton, compromised: frozenset[Role]) -> bool:
    """Realizedness via solved cuts over the finite candidate family:
    box targets of the skeleton against the empty set, each canonical
    escape context, and each singleton box."""
    boxes = sorted({b for n in a.nodes for b in subboxes(n.msg)},
                   key=render_message_key)
    receptions = a.receptions()
    for t in boxes:
        candidates: list[frozenset[Box]] = [frozenset()]
        candidates.extend(canonical_b(t, n, a, compromised) for n in receptions)
        candidates.extend(frozenset({b}) for b in boxes)
        for bset in candidates:
            if not cut_solved(t, bset, a, compromised):
                return False
    return True


def render_message_key(t) -> str:
    return str(t)


def is_dg(a: Skeleton, compromised: frozenset[Role]) -> bool:
    """Every boxed transmission to an honest role is received somewhere else."""
    for n in a.transmissions():
        if len(n.msg.items) != 1:
            continue
        top = n.msg.items[0]
        if not isinstance(top, Box) or top.dst in compromised:
            continue
        if not any(not m.positive and m.instance != n.instance and m.msg == n.msg
                   for m in a.nodes):
            return False
    return True


# ---------------------------------------------------------------------------
# Embeddings and isomorphism
# ---------------------------------------------------------------------------

def _blank(m: Message) -> str:
    names = sorted(value_names(m))
    blanked = {name: "□" for name in names}
    from .terms import apply_subst
    return render_message(apply_subst(blanked, m))


def _inst_shape(a: Skeleton, inst: StrandInstance, full: bool = False) -> tuple:
    ln = a.prefix_len(inst)
    upto = len(inst.trace) if full else ln
    return (inst.role.name, ln,
            tuple((dt.positive, _blank(dt.message)) for dt in inst.trace[:upto]))


def _embedding_maps(a0: Skeleton, a1: Skeleton, exact: bool):
    """Yield (instance map, value renaming) candidates from a0 into a1."""
    insts0 = sorted(a0.instances, key=lambda s: (-a0.prefix_len(s), *s.sort_key()))
    insts1 = list(a1.instances)

    def extend_match(subst: dict[str, str], i0, i1) -> Optional[dict[str, str]]:
        from .terms import match_message
        ln0 = a0.prefix_len(i0)
        ln1 = a1.prefix_len(i1)
        if i0.role != i1.role:
            return None
        if (ln0 != ln1) if exact else (ln0 > ln1):
            return None
        out = dict(subst)
        for k in range(ln0):
            d0, d1 = i0.trace[k], i1.trace[k]
            if d0.positive != d1.positive:
                return None
            res = match_message(d0.message, d1.message, out)
            if res is None:
                return None
            out = res
        return out

    def rec(k: int, used: frozenset[int], mapping: dict, subst: dict[str, str]):
        if k == len(insts0):
            yield dict(mapping), dict(subst)
            return
        i0 = insts0[k]
        for j, i1 in enumerate(insts1):
            if j in used:
                continue
            ext = extend_match(subst, i0, i1)
            if ext is None:
                continue
            mapping[i0] = i1
            yield from rec(k + 1, used | {j}, mapping, ext)
            del mapping[i0]

    yield from rec(0, frozenset(), {}, {})


def _order_preserved(a0: Skeleton, a1: Skeleton, inst_map: dict) -> bool:
    for m, n in a0.closure:
        hm = NodeId(inst_map[m.instance], m.index)
        hn = NodeId(inst_map[n.instance], n.index)
        if not a1.precedes(hm, hn):
            return False
    return True


def embeds(a0: Skeleton, a1: Skeleton) -> bool:
    """Injective node map preserving role, polarity, succession, order, and
    messages up to one value renaming applied to a0."""
    if len(a0) > len(a1):
        return False
    for inst_map, _subst in _embedding_maps(a0, a1, exact=False):
        if _order_preserved(a0, a1, inst_map):
            return True
    return False


def isomorphic(a0: Skeleton, a1: Skeleton) -> bool:
    """Structural equality up to instance identity and value renaming."""
    if len(a0) != len(a1) or len(a0.closure) != len(a1.closure):
        return False
    shapes0 = sorted(_inst_shape(a0, i) for i in a0.instances)
    shapes1 = sorted(_inst_shape(a1, i) for i in a1.instances)
    if shapes0 != shapes1:
        return False
    for inst_map, subst in _embedding_maps(a0, a1, exact=True):
        bound = [v for v in subst.values()]
        if len(set(bound)) != len(bound):
            continue  # renaming must be injective both ways
        if _order_preserved(a0, a1, inst_map):
            return True
    return False


# ---------------------------------------------------------------------------
# Canonical forms
# ---------------------------------------------------------------------------

def canonical_key(a: Skeleton, include_hidden: bool = False) -> tuple:
    """Isomorphism-invariant key: minimal rendering over the orderings of
    interchangeable instances, with values renamed by first appearance.

    With include_hidden the not-yet-present tails of partially added
    strands enter the key as well; search frontiers need this, since
    states agreeing on visible nodes may still extend differently.
    """
    groups: dict[tuple, list[StrandInstance]] = {}
    for inst in a.instances:
        groups.setdefault(_inst_shape(a, inst, include_hidden), []).append(inst)
    group_keys = sorted(groups)
    best: Optional[tuple] = None
    for perm in _group_orderings(groups, group_keys):
        key = _key_for_order(a, perm, include_hidden)
        if best is None or key < best:
            best = key
    assert best is not None
    return best


def _group_orderings(groups, group_keys):
    per_group = [list(itertools.permutations(groups[k])) for k in group_keys]
    for combo in itertools.product(*per_group):
        yield [inst for block in combo for inst in block]


def _key_for_order(a: Skeleton, insts: list[StrandInstance],
                   include_hidden: bool) -> tuple:
    from .terms import apply_subst
    rename: dict[str, str] = {}

    def canon_msg(m: Message) -> str:
        for name in _names_in_order(m):
            if name not in rename:
                rename[name] = f"v{len(rename)}"
        return render_message(apply_subst(rename, m))

    labels = []
    pos = {}
    for idx, inst in enumerate(insts):
        pos[inst] = idx
        ln = a.prefix_len(inst)
        upto = len(inst.trace) if include_hidden else ln
        labels.append((inst.role.name, ln,
                       tuple(f"{inst.trace[k].sign}{canon_msg(inst.trace[k].message)}"
                             for k in range(upto))))
    edges = sorted(((pos[m.instance], m.index), (pos[n.instance], n.index))
                   for m, n in a.closure)
    return (tuple(labels), tuple(edges))


def _names_in_order(m: Message) -> list[str]:
    out: list[str] = []

    def walk(x):
        from .terms import Value
        if isinstance(x, Message):
            for i in x.items:
                walk(i)
        elif isinstance(x, Value):
            out.append(x.name)
        elif isinstance(x, Box):
            walk(x.body)

    walk(m)
    return out


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def to_dot(a: Skeleton, title: str = "skeleton") -> str:
    """Graphviz rendering: one cluster per strand, bold succession edges,
    dashed transitive-reduction order edges."""
    lines = [f'digraph "{title}" {{', "  rankdir=TB;", "  node [shape=box];"]
    ids: dict[NodeId, str] = {}
    for i, inst in enumerate(a.instances):
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f'    label="{inst}";')
        for k in range(1, a.prefix_len(inst) + 1):
            n = NodeId(inst, k)
            ids[n] = f"n{i}_{k}"
            lines.append(f'    {ids[n]} [label="{n.directed}"];')
        lines.append("  }")
    for m, n in sorted(a.succ_edges(), key=lambda e: (e[0].sort_key(), e[1].sort_key())):
        lines.append(f"  {ids[m]} -> {ids[n]} [style=bold];")
    cross_reduced = [e for e in a.reduced_edges() if e not in set(a.succ_edges())]
    for m, n in cross_reduced:
        lines.append(f"  {ids[m]} -> {ids[n]} [style=dashed];")
    lines.append("}")
    return "\n".join(lines)


def to_json_dict(a: Skeleton) -> dict:
    insts = list(a.instances)
    order_nodes = [NodeId(inst, k) for inst in insts
                   for k in range(1, a.prefix_len(inst) + 1)]
    index = {n: i for i, n in enumerate(order_nodes)}
    return {
        "nodes": [{
            "strand": insts.index(n.instance),
            "role": n.role.name,
            "index": n.index,
            "dir": n.directed.sign,
            "msg": render_message(n.msg),
        } for n in order_nodes],
        "order": sorted([index[m], index[n]] for m, n in a.reduced_edges()),
    }
