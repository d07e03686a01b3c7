"""Shape search: the two-rule transition system and a brute-force oracle.

Rule 1 adds (or merely orders) a transmission that explains why a box
escaped an escape context at a reception; rule 2 adds (or orders) a
reception delivering a pending transmission addressed to an honest role.
Exhaustive exploration of all rule applications from a start skeleton,
with duplicate states pruned up to isomorphism, yields the terminal
skeletons; reduced to the node-wise minimal ones these are the minimal
delivery-guaranteed executions.

A partially added strand is identified by its visible prefix only.  A
step that prolongs such a strand re-matches the prefix against every
template of the space and picks the instance parameters then, so two
templates sharing a prefix (or parameters that have not surfaced yet)
never force an early commitment.  Unconstrained parameters of newly
surfacing nodes range over the values already visible in the skeleton
plus one canonical fresh value each; parameters that stay hidden are
placeholder-fresh until a later extension surfaces them.

The oracle enumerates realized, delivery-guaranteed extensions of the
start directly from the derivability semantics (no escape-test
machinery) and keeps the embedding-minimal ones; it exists to
cross-check the search.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from . import penetrator
from .semantics import StrandInstance, StrandSpace, StrandTemplate, instantiate
from .skeleton import (NodeId, Skeleton, StepRejected, canonical_b,
                       canonical_key, feeds, is_dg, is_realized, to_json_dict,
                       union_up)
from .terms import (Box, Message, Role, found_outside, freeze_subst,
                    match_message, match_term, render_message, subboxes,
                    value_names)


@dataclass(frozen=True)
class Bounds:
    max_nodes: int = 16
    max_instances: int = 2  # per (template, substitution)
    max_fresh: int = 8

    def __post_init__(self) -> None:
        if self.max_nodes < 1 or self.max_instances < 1 or self.max_fresh < 0:
            raise ValueError("bounds must be positive")


@dataclass(frozen=True)
class Step:
    kind: str  # "A1-new" | "A1-order" | "A2-new" | "A2-order"
    n: NodeId
    m_instance: StrandInstance
    m_index: int
    test_box: Optional[Box] = None
    boxset: frozenset[Box] = frozenset()
    replaces: Optional[StrandInstance] = None  # strand being prolonged

    @property
    def m(self) -> NodeId:
        return NodeId(self.m_instance, self.m_index)

    @property
    def m_before_n(self) -> bool:
        return self.kind.startswith("A1")

    def sort_key(self):
        return (self.kind, self.n.sort_key(),
                str(self.test_box) if self.test_box else "",
                tuple(sorted(str(b) for b in self.boxset)),
                self.m_instance.sort_key(), self.m_index)

    def __str__(self) -> str:
        what = (f"explain {self.test_box} at {self.n}"
                if self.kind.startswith("A1") else f"deliver {self.n}")
        how = f"{self.m_instance}[{self.m_index}]"
        if self.replaces is not None:
            how += f" (prolonging {self.replaces})"
        return f"{self.kind}: {what} by {how}"


_FRESH_RE = re.compile(r"#f(\d+)\Z")


def _visible_fresh(a: Skeleton) -> set[str]:
    out = set()
    for n in a.nodes:
        out |= {v for v in value_names(n.msg) if _FRESH_RE.match(v)}
    return out


def _next_fresh(a: Skeleton) -> int:
    best = 0
    for inst in a.instances:
        for _, v in inst.subst:
            m = _FRESH_RE.match(v)
            if m:
                best = max(best, int(m.group(1)))
    for v in _visible_fresh(a):
        best = max(best, int(_FRESH_RE.match(v).group(1)))
    return best + 1


def _skeleton_values(a: Skeleton) -> list[str]:
    out: set[str] = set()
    for n in a.nodes:
        out |= value_names(n.msg)
    return sorted(v for v in out if not _FRESH_RE.match(v)) + \
        sorted(v for v in out if _FRESH_RE.match(v))


def _instance_count(a: Skeleton, template: StrandTemplate,
                    subst: tuple[tuple[str, str], ...],
                    ignoring: Optional[StrandInstance] = None) -> int:
    return sum(1 for inst in a.instances
               if inst is not ignoring
               and inst.template == template and inst.subst == subst)


# ---------------------------------------------------------------------------
# Candidate strands: prolong a present strand or begin a fresh one
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _StrandOption:
    """A template able to realize a present strand's visible prefix (or a
    fresh strand when replaces is None), with the prefix-forced bindings."""
    replaces: Optional[StrandInstance]
    template: StrandTemplate
    base: tuple[tuple[str, str], ...]
    visible: int  # matched prefix length


def _strand_options(a: Skeleton, space: StrandSpace,
                    compromised: frozenset[Role]) -> list[_StrandOption]:
    out = [_StrandOption(None, t, (), 0) for t in space.regular(compromised)]
    for inst in a.instances:
        ln = a.prefix_len(inst)
        for template in space.regular(compromised):
            if template.role != inst.role or len(template) <= ln:
                continue
            base: dict[str, str] = {}
            ok = True
            for i in range(ln):
                tdt, dt = template.trace[i], inst.trace[i]
                if tdt.positive != dt.positive:
                    ok = False
                    break
                got = match_message(tdt.message, dt.message, base)
                if got is None:
                    ok = False
                    break
                base = got
            if ok:
                out.append(_StrandOption(inst, template,
                                         tuple(sorted(base.items())), ln))
    return out


def _completions(opt: _StrandOption, extra: dict[str, str], upto: int,
                 pool: list[str], fresh_start: int) -> Iterator[dict[str, str]]:
    """Total parameter assignments for opt.template consistent with the
    prefix bindings, extra match bindings, and the surfacing segment.

    Parameters first appearing in nodes visible+1..upto and still free
    range over the pool plus a fresh value; parameters that remain hidden
    beyond upto are placeholder-fresh.
    """
    bound = dict(opt.base)
    bound.update(extra)
    surfacing: list[str] = []
    seen: set[str] = set()
    for i in range(opt.visible, upto):
        for name in sorted(value_names(opt.template.trace[i].message)):
            if name not in seen:
                seen.add(name)
                if name not in bound:
                    surfacing.append(name)
    hidden = [p for p in opt.template.params
              if p not in bound and p not in seen]
    fresh_token = object()
    for combo in itertools.product([fresh_token] + pool, repeat=len(surfacing)):
        out = dict(bound)
        k = fresh_start
        for p, v in zip(surfacing, combo):
            if v is fresh_token:
                out[p] = f"#f{k}"
                k += 1
            else:
                out[p] = v
        for p in hidden:
            out[p] = f"#f{k}"
            k += 1
        yield out


def _materialize(a: Skeleton, opt: _StrandOption, subst: dict[str, str],
                 bounds: Bounds) -> tuple[Optional[StrandInstance], bool]:
    """Instance for the option under subst; None + True when capped."""
    frozen = freeze_subst(subst)
    tag = _instance_count(a, opt.template, frozen, ignoring=opt.replaces)
    if tag >= bounds.max_instances:
        return None, True
    return StrandInstance(opt.template, frozen, tag), False


def _cycle_with(a: Skeleton, opt: _StrandOption, n: NodeId) -> bool:
    """Would ordering the option's new node before n create a cycle?  The
    new node's causal past is n's strand-prefix of the prolonged strand."""
    if opt.replaces is None:
        return False
    for i in range(1, opt.visible + 1):
        if n == NodeId(opt.replaces, i) or a.preceq(n, NodeId(opt.replaces, i)):
            return True
    return False


# ---------------------------------------------------------------------------
# Rule A1: explaining box escapes
# ---------------------------------------------------------------------------

def a1_steps(a: Skeleton, space: StrandSpace, compromised: frozenset[Role],
             bounds: Bounds = Bounds()) -> list[Step]:
    """All applicable escape-explanation steps, canonically ordered."""
    return _a1_steps_ex(a, space, compromised, bounds)[0]


def _a1_steps_ex(a: Skeleton, space: StrandSpace, compromised: frozenset[Role],
                 bounds: Bounds) -> tuple[list[Step], bool]:
    steps: list[Step] = []
    suppressed = False
    pool = _skeleton_values(a)
    fresh_start = _next_fresh(a)
    options = _strand_options(a, space, compromised)

    for n in a.receptions():
        tests = sorted({b for b in subboxes(n.msg) if b.src not in compromised},
                       key=str)
        for c in tests:
            bset = canonical_b(c, n, a, compromised)
            if not found_outside(c, bset, n.msg):
                continue
            # Every strict predecessor of n must still hide c inside bset.
            if any(found_outside(c, bset, mp.msg)
                   for mp in a.nodes if a.precedes(mp, n)):
                continue

            # Existing transmissions: only the ordering changes.
            for m in a.transmissions():
                if not found_outside(c, bset, m.msg):
                    continue
                if any(found_outside(c, bset, m.instance.trace[i].message)
                       for i in range(m.index - 1)):
                    continue
                if a.preceq(n, m):
                    continue
                steps.append(Step("A1-order", n, m.instance, m.index, c, bset))

            # Prolonged or fresh strands ending in a new transmission.
            for opt in options:
                for k in range(opt.visible + 1, len(opt.template) + 1):
                    dt = opt.template.trace[k - 1]
                    if not dt.positive:
                        continue
                    for pat in sorted(set(subboxes(dt.message)), key=str):
                        extra = match_term(pat, c, dict(opt.base))
                        if extra is None:
                            continue
                        for subst in _completions(opt, extra, k, pool, fresh_start):
                            inst, capped = _materialize(a, opt, subst, bounds)
                            if capped:
                                suppressed = True
                                continue
                            trace = inst.trace
                            if not found_outside(c, bset, trace[k - 1].message):
                                continue
                            if any(found_outside(c, bset, trace[i].message)
                                   for i in range(k - 1)):
                                continue
                            if _cycle_with(a, opt, n):
                                continue
                            steps.append(Step("A1-new", n, inst, k, c, bset,
                                              replaces=opt.replaces))
    return _dedupe(steps), suppressed


# ---------------------------------------------------------------------------
# Rule A2: delivering pending transmissions
# ---------------------------------------------------------------------------

def a2_steps(a: Skeleton, space: StrandSpace, compromised: frozenset[Role],
             bounds: Bounds = Bounds()) -> list[Step]:
    """All applicable delivery steps, canonically ordered."""
    return _a2_steps_ex(a, space, compromised, bounds)[0]


def _a2_steps_ex(a: Skeleton, space: StrandSpace, compromised: frozenset[Role],
                 bounds: Bounds) -> tuple[list[Step], bool]:
    steps: list[Step] = []
    suppressed = False
    pool = _skeleton_values(a)
    fresh_start = _next_fresh(a)
    options = _strand_options(a, space, compromised)

    for n in a.transmissions():
        if len(n.msg.items) != 1:
            continue
        top = n.msg.items[0]
        if not isinstance(top, Box) or top.dst in compromised:
            continue
        if any(not m.positive and m.msg == n.msg and a.precedes(n, m)
               for m in a.nodes):
            continue
        # Existing unordered receptions of the same message elsewhere.
        for m in a.receptions():
            if m.instance == n.instance or m.msg != n.msg:
                continue
            if a.preceq(m, n):
                continue  # ordering n before m would close a cycle
            steps.append(Step("A2-order", n, m.instance, m.index))
        # Prolonged or fresh strands ending in a matching reception.
        for opt in options:
            if opt.replaces is not None and opt.replaces == n.instance:
                continue  # delivery must happen on another strand
            for k in range(opt.visible + 1, len(opt.template) + 1):
                dt = opt.template.trace[k - 1]
                if dt.positive:
                    continue
                extra = match_message(dt.message, n.msg, dict(opt.base))
                if extra is None:
                    continue
                for subst in _completions(opt, extra, k, pool, fresh_start):
                    inst, capped = _materialize(a, opt, subst, bounds)
                    if capped:
                        suppressed = True
                        continue
                    if inst.trace[k - 1].message != n.msg:
                        continue
                    steps.append(Step("A2-new", n, inst, k,
                                      replaces=opt.replaces))
    return _dedupe(steps), suppressed


def _dedupe(steps: list[Step]) -> list[Step]:
    return sorted(set(steps), key=lambda s: s.sort_key())


def applicable_steps(a: Skeleton, space: StrandSpace,
                     compromised: frozenset[Role],
                     bounds: Bounds = Bounds()) -> list[Step]:
    return _applicable_ex(a, space, compromised, bounds)[0]


def _applicable_ex(a: Skeleton, space: StrandSpace,
                   compromised: frozenset[Role],
                   bounds: Bounds) -> tuple[list[Step], bool]:
    s1, x1 = _a1_steps_ex(a, space, compromised, bounds)
    s2, x2 = _a2_steps_ex(a, space, compromised, bounds)
    return s1 + s2, x1 or x2


def apply_step(a: Skeleton, step: Step) -> Skeleton:
    """One rule application; strictly grows the node set or the order."""
    base = a
    n = step.n
    if step.replaces is not None:
        remap = {step.replaces: step.m_instance}

        def move(x: NodeId) -> NodeId:
            return NodeId(remap.get(x.instance, x.instance), x.index)

        base = Skeleton({move(x) for x in a.nodes},
                        {(move(x), move(y)) for x, y in a.cross})
        if n.instance == step.replaces:
            n = move(n)
    before = (len(a.nodes), len(a.closure))
    out = union_up(base, step.m, n, step.m_before_n)
    after = (len(out.nodes), len(out.closure))
    if after == before:
        raise StepRejected(f"step {step} does not grow the skeleton")
    return out


# ---------------------------------------------------------------------------
# Exhaustive search
# ---------------------------------------------------------------------------

@dataclass
class SearchResult:
    shapes: tuple[Skeleton, ...]
    steps: int
    exhausted: bool
    max_depth: int = 0
    trail: tuple[tuple[Skeleton, Step, Skeleton], ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "shapes": [to_json_dict(s) for s in self.shapes],
            "steps": self.steps,
            "exhausted": self.exhausted,
        }


class _IsoSet:
    """Skeletons deduplicated up to isomorphism, keyed canonically."""

    def __init__(self) -> None:
        self.buckets: dict[tuple, list[Skeleton]] = {}

    def add(self, a: Skeleton) -> bool:
        from .skeleton import isomorphic
        key = canonical_key(a)
        bucket = self.buckets.setdefault(key, [])
        for other in bucket:
            if isomorphic(a, other):
                return False
        bucket.append(a)
        return True

    def __contains__(self, a: Skeleton) -> bool:
        from .skeleton import isomorphic
        bucket = self.buckets.get(canonical_key(a), [])
        return any(isomorphic(a, other) for other in bucket)

    def items(self) -> list[Skeleton]:
        return [a for key in sorted(self.buckets) for a in self.buckets[key]]


def _violates_bounds(a: Skeleton, bounds: Bounds) -> bool:
    if len(a.nodes) > bounds.max_nodes:
        return True
    if len(_visible_fresh(a)) > bounds.max_fresh:
        return True
    return False


def shapes(a0: Skeleton, space: StrandSpace, compromised: frozenset[Role],
           bounds: Bounds = Bounds(), record: bool = False) -> SearchResult:
    """Depth-first exhaustive exploration of all rule applications.

    Terminal skeletons are collected up to isomorphism and reduced to the
    node-wise minimal ones; bound hits set the exhausted flag and the
    affected branches are abandoned.
    """
    visited = _IsoSet()
    visited.add(a0)
    terminals = _IsoSet()
    trail: list[tuple[Skeleton, Step, Skeleton]] = []
    applied = 0
    exhausted = False
    max_depth = 0

    stack: list[tuple[Skeleton, int]] = [(a0, 0)]
    while stack:
        a, depth = stack.pop()
        max_depth = max(max_depth, depth)
        steps, suppressed = _applicable_ex(a, space, compromised, bounds)
        if suppressed:
            exhausted = True
        if not steps:
            terminals.add(a)
            continue
        for step in reversed(steps):
            try:
                nxt = apply_step(a, step)
            except StepRejected:
                continue
            applied += 1
            if _violates_bounds(nxt, bounds):
                exhausted = True
                continue
            if record:
                trail.append((a, step, nxt))
            if visited.add(nxt):
                stack.append((nxt, depth + 1))
    minimal = _minimize_anchored(terminals.items(), a0.instances)
    return SearchResult(tuple(minimal), applied, exhausted,
                        max_depth, tuple(trail))


def _minimize_anchored(candidates: list[Skeleton],
                       anchors: tuple[StrandInstance, ...]) -> list[Skeleton]:
    """Drop candidates into which a strictly lesser candidate embeds while
    fixing the start strands; what survives is node-wise minimal."""
    out = []
    for a in candidates:
        dominated = any(other is not a and _embeds_anchored(other, a, anchors)
                        and not _embeds_anchored(a, other, anchors)
                        for other in candidates)
        if not dominated:
            out.append(a)
    return out


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def _analyze_set(msgs: frozenset[Message], compromised: frozenset[Role]):
    return penetrator.analyze(msgs, compromised).analyzed


def _needed_boxes(target: Message, know: penetrator.Knowledge) -> set[Box]:
    """Boxes the adversary is missing to produce target, transitively
    through rebuildable compromised-source boxes."""
    out: set[Box] = set()

    def walk(t) -> None:
        if not isinstance(t, Box) or penetrator._buildable(t, know):
            return
        out.add(t)
        if t.src in know.compromised:
            for i in t.body.items:
                walk(i)

    for t in target.items:
        walk(t)
    return out


def _dg_deficits(a: Skeleton, compromised: frozenset[Role]) -> list[NodeId]:
    """Boxed transmissions to honest roles lacking a reception of the same
    message causally after them on another strand.

    Delivery is required to follow the send causally here, matching the
    effect of the delivery rule; the weaker existence-only reading admits
    skeletons the transition system rightly refuses to stop at.
    """
    out = []
    for n in a.transmissions():
        if len(n.msg.items) != 1:
            continue
        top = n.msg.items[0]
        if not isinstance(top, Box) or top.dst in compromised:
            continue
        if not any(not m.positive and m.instance != n.instance
                   and m.msg == n.msg and a.precedes(n, m)
                   for m in a.nodes):
            out.append(n)
    return out


def _oracle_apply(a: Skeleton, opt: _StrandOption, inst: StrandInstance,
                  k: int, n: NodeId, m_first: bool) -> Skeleton:
    base = a
    if opt.replaces is not None:
        remap = {opt.replaces: inst}

        def move(x: NodeId) -> NodeId:
            return NodeId(remap.get(x.instance, x.instance), x.index)

        base = Skeleton({move(x) for x in a.nodes},
                        {(move(x), move(y)) for x, y in a.cross})
        if n.instance == opt.replaces:
            n = NodeId(inst, n.index)
    return union_up(base, NodeId(inst, k), n, m_first)


def _grow_candidates(a: Skeleton, space: StrandSpace,
                     compromised: frozenset[Role], bounds: Bounds
                     ) -> tuple[list[Skeleton], bool]:
    """Immediate extensions toward realizedness then delivery, smallest
    deficiency first: new order edges, strand prolongations, new strands."""
    out: list[Skeleton] = []
    suppressed = False
    pool = _skeleton_values(a)
    fresh_start = _next_fresh(a)
    options = _strand_options(a, space, compromised)

    unfed = [n for n in a.receptions()
             if not penetrator.derivable(feeds(a, n), n.msg, compromised)]
    if unfed:
        minimal = [n for n in unfed
                   if not any(m != n and a.precedes(m, n) for m in unfed)]
        n = min(minimal, key=lambda x: x.sort_key())
        have = feeds(a, n)
        know = penetrator.Knowledge(_analyze_set(have, compromised), compromised)
        needed = _needed_boxes(n.msg, know)

        def supplies(m: Message) -> bool:
            return bool(_analyze_set(frozenset({m}), compromised) & needed)

        for m in a.transmissions():
            if m == n or a.preceq(m, n) or a.preceq(n, m):
                continue
            if not supplies(m.msg):
                continue
            if len(a.nodes) > bounds.max_nodes:
                suppressed = True
                continue
            out.append(union_up(a, m, n, True))
        for opt in options:
            for k in range(opt.visible + 1, len(opt.template) + 1):
                dt = opt.template.trace[k - 1]
                if not dt.positive:
                    continue
                bases = []
                for b in sorted(needed, key=str):
                    for pat in sorted(set(subboxes(dt.message)), key=str):
                        got = match_term(pat, b, dict(opt.base))
                        if got is not None:
                            bases.append(got)
                for extra in bases:
                    for subst in _completions(opt, extra, k, pool, fresh_start):
                        inst, capped = _materialize(a, opt, subst, bounds)
                        if capped:
                            suppressed = True
                            continue
                        if not supplies(inst.trace[k - 1].message):
                            continue
                        if _cycle_with(a, opt, n):
                            continue
                        if len(a.nodes) + (k - opt.visible) > bounds.max_nodes:
                            suppressed = True
                            continue
                        out.append(_oracle_apply(a, opt, inst, k, n, True))
        return out, suppressed

    for n in _dg_deficits(a, compromised)[:1]:
        for m in a.receptions():
            if m.instance == n.instance or m.msg != n.msg or a.preceq(m, n):
                continue
            out.append(union_up(a, m, n, False))
        for opt in options:
            if opt.replaces is not None and opt.replaces == n.instance:
                continue
            for k in range(opt.visible + 1, len(opt.template) + 1):
                dt = opt.template.trace[k - 1]
                if dt.positive:
                    continue
                extra = match_message(dt.message, n.msg, dict(opt.base))
                if extra is None:
                    continue
                for subst in _completions(opt, extra, k, pool, fresh_start):
                    inst, capped = _materialize(a, opt, subst, bounds)
                    if capped:
                        suppressed = True
                        continue
                    if inst.trace[k - 1].message != n.msg:
                        continue
                    if len(a.nodes) + (k - opt.visible) > bounds.max_nodes:
                        suppressed = True
                        continue
                    try:
                        out.append(_oracle_apply(a, opt, inst, k, n, False))
                    except StepRejected:
                        pass
    return out, suppressed


def _embeds_anchored(b: Skeleton, a: Skeleton,
                     anchors: tuple[StrandInstance, ...]) -> bool:
    """Embedding of b into a that is the identity on the anchor strands."""
    from .skeleton import _embedding_maps, _order_preserved

    anchor_values: set[str] = set()
    for inst in anchors:
        for dt in inst.trace:
            anchor_values |= value_names(dt.message)
    for inst_map, subst in _embedding_maps(b, a, exact=False):
        if any(inst_map.get(x) != x for x in anchors):
            continue
        if any(subst.get(v, v) != v for v in anchor_values):
            continue
        if _order_preserved(b, a, inst_map):
            return True
    return False


def brute_force_min_dg_realized(a0: Skeleton, space: StrandSpace,
                                compromised: frozenset[Role],
                                bounds: Bounds = Bounds()) -> SearchResult:
    """Enumerate realized, delivery-guaranteed extensions of a0 within the
    bounds, keeping the embedding-minimal ones up to isomorphism.

    Growth is demand-driven but exhaustive: every way of feeding the
    first unmet reception (order edges from any transmission supplying a
    missing box, prolonging a present strand, or any matching fresh
    instance over the visible values plus fresh ones) and every way of
    delivering the first undelivered transmission is explored.
    """
    visited: set[tuple] = set()
    found = _IsoSet()
    exhausted = False
    steps = 0
    anchors = a0.instances

    stack = [a0]
    while stack:
        a = stack.pop()
        key = canonical_key(a)
        if key in visited:
            continue
        visited.add(key)
        if is_realized(a, compromised) and not _dg_deficits(a, compromised):
            found.add(a)
            continue  # proper supersets can never be embedding-minimal
        nxt, suppressed = _grow_candidates(a, space, compromised, bounds)
        if suppressed:
            exhausted = True
        steps += len(nxt)
        stack.extend(nxt)

    candidates = [a for a in found.items() if _embeds_anchored(a0, a, anchors)]
    result = _IsoSet()
    for a in _minimize_anchored(candidates, anchors):
        result.add(a)
    return SearchResult(tuple(result.items()), steps, exhausted)
