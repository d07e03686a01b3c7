"""Compilation of choreographies into role-tagged strand templates.

Each interaction branch prefixes the sender's strands with a transmission
of the boxed payload and the receiver's strands with the matching
reception; roles not involved pass through unchanged.  Branch sums union
the per-branch strand sets.  Sentinel end markers used during compilation
are stripped from the result, so a role with no interactions contributes
no templates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

from . import choreo
from .terms import (Box, Label, Message, Role, Subst, Value, apply_subst,
                    contains, found_only_within, freeze_subst, subboxes,
                    value_names)


@dataclass(frozen=True, order=True)
class DirectedTerm:
    positive: bool  # True = transmission, False = reception
    message: Message

    @property
    def sign(self) -> str:
        return "+" if self.positive else "-"

    def __str__(self) -> str:
        return f"{self.sign}{self.message}"


def send(m: Message) -> DirectedTerm:
    return DirectedTerm(True, m)


def recv(m: Message) -> DirectedTerm:
    return DirectedTerm(False, m)


@dataclass(frozen=True)
class StrandTemplate:
    """One role's local behaviour along one branch path.

    The id is the dot-joined sequence of branch labels the role touches,
    which is unique per role for well-formed choreographies.
    """

    id: str
    role: Role
    trace: tuple[DirectedTerm, ...]

    def __post_init__(self) -> None:
        if not self.trace:
            raise ValueError("strand template trace must be nonempty")

    def __len__(self) -> int:
        return len(self.trace)

    @property
    def params(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for dt in self.trace:
            for name in sorted(value_names(dt.message)):
                seen.setdefault(name)
        return tuple(seen)

    def __str__(self) -> str:
        nodes = " => ".join(str(dt) for dt in self.trace)
        return f"{self.role} id={self.id} : {nodes}"


@dataclass(frozen=True)
class StrandSpace:
    templates: tuple[StrandTemplate, ...]
    labels: frozenset[str] = frozenset()
    values: frozenset[str] = frozenset()

    def by_role(self, role: Role) -> tuple[StrandTemplate, ...]:
        return tuple(t for t in self.templates if t.role == role)

    @property
    def roles(self) -> tuple[Role, ...]:
        return tuple(sorted({t.role for t in self.templates}))

    def regular(self, compromised: frozenset[Role]) -> tuple[StrandTemplate, ...]:
        return tuple(t for t in self.templates if t.role not in compromised)

    def template(self, template_id: str, role: Optional[Role] = None) -> StrandTemplate:
        for t in self.templates:
            if t.id == template_id and (role is None or t.role == role):
                return t
        raise KeyError(template_id)

    @property
    def total_nodes(self) -> int:
        return sum(len(t) for t in self.templates)


def make_space(templates: Iterable[StrandTemplate]) -> StrandSpace:
    """Ad-hoc strand space from raw templates (tests, worked examples)."""
    templates = tuple(sorted(templates, key=lambda t: (t.role, t.id)))
    values: set[str] = set()
    labels: set[str] = set()
    for t in templates:
        for dt in t.trace:
            values |= value_names(dt.message)
            labels |= {x.name for x in _labels_in(dt.message)}
    return StrandSpace(templates, frozenset(labels), frozenset(values))


def _labels_in(m: Message) -> Iterable[Label]:
    for item in m.items:
        if isinstance(item, Label):
            yield item
        elif isinstance(item, Box):
            yield from _labels_in(item.body)


@dataclass(frozen=True)
class StrandInstance:
    """A template under a parameter substitution, tagged to allow copies."""

    template: StrandTemplate
    subst: tuple[tuple[str, str], ...] = ()
    tag: int = 0

    @property
    def role(self) -> Role:
        return self.template.role

    @property
    def trace(self) -> tuple[DirectedTerm, ...]:
        return _instance_trace(self.template, self.subst)

    def __len__(self) -> int:
        return len(self.template)

    def sort_key(self):
        return (self.role.name, self.template.id, self.subst, self.tag)

    def __str__(self) -> str:
        sigma = ",".join(f"{k}->{v}" for k, v in self.subst)
        suffix = f"{{{sigma}}}" if sigma else ""
        tag = f"#{self.tag}" if self.tag else ""
        return f"{self.role}.{self.template.id}{suffix}{tag}"


@lru_cache(maxsize=None)
def _instance_trace(template: StrandTemplate,
                    subst: tuple[tuple[str, str], ...]) -> tuple[DirectedTerm, ...]:
    mapping = dict(subst)
    return tuple(DirectedTerm(dt.positive, apply_subst(mapping, dt.message))
                 for dt in template.trace)


def instantiate(template: StrandTemplate, subst: Subst, tag: int = 0) -> StrandInstance:
    return StrandInstance(template, freeze_subst(subst), tag)


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

# During compilation a strand is (role, trace-as-list); the sentinel is a
# role-private end marker so that strands of distinct roles never merge.
_SENTINEL = "•"


def _sentinel(role: Role) -> DirectedTerm:
    return send(Message((Value(f"{_SENTINEL}{role.name}"),)))


def extend(strands: frozenset[tuple[Role, tuple[DirectedTerm, ...]]],
           message: Message, sender: Role, receiver: Role
           ) -> frozenset[tuple[Role, tuple[DirectedTerm, ...]]]:
    """Prefix sender strands with +message and receiver strands with -message."""
    out = set()
    for role, trace in strands:
        if role == sender:
            out.add((role, (send(message),) + trace))
        elif role == receiver:
            out.add((role, (recv(message),) + trace))
        else:
            out.add((role, trace))
    return frozenset(out)


def _compile(c: choreo.Choreography, roles: tuple[Role, ...]
             ) -> frozenset[tuple[Role, tuple[DirectedTerm, ...]]]:
    if isinstance(c, choreo.Inact):
        return frozenset((r, (_sentinel(r),)) for r in roles)
    out: set[tuple[Role, tuple[DirectedTerm, ...]]] = set()
    for b in c.branches:
        wrapped = Message((Box(c.sender, c.receiver,
                               Message((b.label,) + b.payload.items)),))
        out |= extend(_compile(b.cont, roles), wrapped, c.sender, c.receiver)
    return frozenset(out)


def compile_spec(spec: choreo.Spec) -> StrandSpace:
    """Strand space of a well-formed choreography; rejects ill-formed input."""
    violations = choreo.well_formed(spec)
    if violations:
        raise ValueError("ill-formed choreography: " +
                         "; ".join(str(v) for v in violations))
    templates = []
    for role, trace in _compile(spec.body, spec.roles):
        assert trace and trace[-1] == _sentinel(role)
        body = trace[:-1]
        if not body:
            continue
        path = ".".join(_op_of(dt) for dt in body)
        templates.append(StrandTemplate(path, role, body))
    templates.sort(key=lambda t: (t.role, t.id))
    return StrandSpace(tuple(templates), spec.labels, spec.values)


def _op_of(dt: DirectedTerm) -> str:
    top = dt.message.items[0]
    assert isinstance(top, Box) and top.body.items, "compiled node is a boxed, labelled interaction"
    op = top.body.items[0]
    assert isinstance(op, Label)
    return op.name


# ---------------------------------------------------------------------------
# Origination consistency
# ---------------------------------------------------------------------------

def origination_violations(space: StrandSpace) -> list[str]:
    """Check boxes originate with their source and open at their destination.

    A box originates on a strand when a transmission contains it with no
    earlier occurrence on that strand; such a node must belong to the
    box's source role.  When a strand held a box's payload item only
    inside the box and later exposes it outside, that strand must belong
    to the box's destination role.
    """
    problems: list[str] = []
    all_boxes = {b for t in space.templates for dt in t.trace
                 for b in subboxes(dt.message)}
    for t in space.templates:
        for b in all_boxes:
            first = None
            for i, dt in enumerate(t.trace):
                if any(x == b for x in subboxes(dt.message)):
                    first = i
                    break
            if first is None:
                continue
            if t.trace[first].positive and t.role != b.src:
                problems.append(
                    f"{t.role} id={t.id}: box {b} originates at node {first + 1} "
                    f"but belongs to {b.src}")
            # Content escaping the box: held only inside earlier, outside later.
            for item in b.body.items:
                held_inside = False
                for i, dt in enumerate(t.trace):
                    if not contains(dt.message, item):
                        continue
                    if found_only_within(item, {b}, dt.message):
                        held_inside = True
                        continue
                    if held_inside and t.role != b.dst:
                        problems.append(
                            f"{t.role} id={t.id}: node {i + 1} exposes {item} "
                            f"from {b} but only {b.dst} may open it")
                    break
    return sorted(set(problems))
