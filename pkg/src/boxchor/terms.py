"""Message algebra: values, labels, boxes, occurrence predicates and matching.

A message is a flat tuple of terms; a term is an atomic value, an atomic
label, or a box ``[t1,...,tk]{Src>Dst}`` that only its source role can
create and only its destination role can open.  Everything here is
immutable and compared syntactically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Union


@dataclass(frozen=True, order=True)
class Role:
    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("role name must be nonempty")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class Value:
    """Substitutable basic value, drawn from a finite declared pool."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class Label:
    """Branch label; never in the domain or range of a substitution."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Box:
    src: Role
    dst: Role
    body: "Message"

    def __str__(self) -> str:
        inner = ",".join(str(t) for t in self.body.items)
        return f"[{inner}]{{{self.src}>{self.dst}}}"


Term = Union[Value, Label, Box]


@dataclass(frozen=True)
class Message:
    """Flat, ordered sequence of terms (never directly nests a Message)."""

    items: tuple[Term, ...] = ()

    def __str__(self) -> str:
        return render_message(self)


def msg(*items: Term) -> Message:
    return Message(tuple(items))


def box(src: Role, dst: Role, *items: Term) -> Box:
    return Box(src, dst, Message(tuple(items)))


# A substitution maps value names to value names (identity elsewhere).
Subst = Mapping[str, str]

EMPTY_SUBST: dict[str, str] = {}


def freeze_subst(subst: Subst) -> tuple[tuple[str, str], ...]:
    """Hashable canonical form of a substitution (identity pairs dropped)."""
    return tuple(sorted((k, v) for k, v in subst.items() if k != v))


# ---------------------------------------------------------------------------
# Occurrence predicates
# ---------------------------------------------------------------------------

def _iter_terms(outer: Union[Term, Message]) -> Iterator[Term]:
    """All term occurrences within outer, outer itself included if a Term."""
    if isinstance(outer, Message):
        for item in outer.items:
            yield from _iter_terms(item)
    else:
        yield outer
        if isinstance(outer, Box):
            for item in outer.body.items:
                yield from _iter_terms(item)


def contains(outer: Union[Term, Message], inner: Term, strict: bool = False) -> bool:
    """Subterm occurrence; reflexive at term level unless strict.

    A term cannot strictly contain an equal copy of itself (terms are
    finite), so the strict variant only excludes the top position.
    """
    if strict and outer == inner:
        return False
    return any(t == inner for t in _iter_terms(outer))


def _occurrences(outer: Union[Term, Message], target: Term,
                 ancestors: tuple[Box, ...] = ()) -> Iterator[tuple[Box, ...]]:
    """Yield the enclosing-box stack of every occurrence of target."""
    if isinstance(outer, Message):
        for item in outer.items:
            yield from _occurrences(item, target, ancestors)
        return
    if outer == target:
        yield ancestors
    if isinstance(outer, Box):
        inner = ancestors + (outer,)
        for item in outer.body.items:
            yield from _occurrences(item, target, inner)


def found_only_within(target: Term, boxes: frozenset[Box] | set[Box],
                      where: Union[Term, Message]) -> bool:
    """True iff every occurrence of target in where sits under a box in boxes.

    Vacuously true when target does not occur at all.
    """
    return all(any(b in boxes for b in stack)
               for stack in _occurrences(where, target))


def found_outside(target: Term, boxes: frozenset[Box] | set[Box],
                  where: Union[Term, Message]) -> bool:
    return not found_only_within(target, boxes, where)


def subboxes(x: Union[Term, Message]) -> Iterator[Box]:
    """All box occurrences in x, outermost first, with duplicates."""
    for t in _iter_terms(x):
        if isinstance(t, Box):
            yield t


def value_names(x: Union[Term, Message]) -> set[str]:
    return {t.name for t in _iter_terms(x) if isinstance(t, Value)}


# ---------------------------------------------------------------------------
# Substitution application and first-order matching
# ---------------------------------------------------------------------------

def apply_subst(subst: Subst, x):
    """Homomorphic renaming of Value atoms; labels, roles, shape unchanged."""
    if isinstance(x, Message):
        return Message(tuple(apply_subst(subst, t) for t in x.items))
    if isinstance(x, Value):
        return Value(subst.get(x.name, x.name))
    if isinstance(x, Box):
        return Box(x.src, x.dst, apply_subst(subst, x.body))
    return x


def compose_subst(first: Subst, second: Subst) -> dict[str, str]:
    """Composite substitution: apply first, then second."""
    out = {k: second.get(v, v) for k, v in first.items()}
    for k, v in second.items():
        out.setdefault(k, v)
    return out


def match_term(pattern: Term, ground: Term,
               subst: Optional[Subst] = None) -> Optional[dict[str, str]]:
    """Least extension of subst sending pattern onto ground.

    Pattern Value atoms act as variables; labels and box roles are rigid.
    Returns None when no consistent extension exists.
    """
    out = dict(subst) if subst else {}
    if _match(pattern, ground, out):
        return out
    return None


def match_message(pattern: Message, ground: Message,
                  subst: Optional[Subst] = None) -> Optional[dict[str, str]]:
    out = dict(subst) if subst else {}
    if len(pattern.items) != len(ground.items):
        return None
    for p, g in zip(pattern.items, ground.items):
        if not _match(p, g, out):
            return None
    return out


def _match(pattern: Term, ground: Term, subst: dict[str, str]) -> bool:
    if isinstance(pattern, Value):
        if not isinstance(ground, Value):
            return False
        bound = subst.get(pattern.name)
        if bound is None:
            subst[pattern.name] = ground.name
            return True
        return bound == ground.name
    if isinstance(pattern, Label):
        return pattern == ground
    if isinstance(pattern, Box):
        if not isinstance(ground, Box):
            return False
        if pattern.src != ground.src or pattern.dst != ground.dst:
            return False
        if len(pattern.body.items) != len(ground.body.items):
            return False
        return all(_match(p, g, subst)
                   for p, g in zip(pattern.body.items, ground.body.items))
    raise TypeError(f"unexpected pattern {pattern!r}")


# ---------------------------------------------------------------------------
# Canonical text rendering and its inverse
# ---------------------------------------------------------------------------

def render_term(t: Term) -> str:
    return str(t)


def render_message(m: Message) -> str:
    if len(m.items) == 1:
        return str(m.items[0])
    return "(" + ",".join(str(t) for t in m.items) + ")"


_TOKEN = re.compile(r"\s*([\[\](){},>]|[A-Za-z0-9_#'.!]+)")


class TermSyntaxError(ValueError):
    pass


class _TermParser:
    """Parser for the canonical rendering; labels given explicitly."""

    def __init__(self, text: str, labels: frozenset[str] = frozenset()):
        self.text = text
        self.labels = labels
        self.pos = 0

    def peek(self) -> Optional[str]:
        m = _TOKEN.match(self.text, self.pos)
        return m.group(1) if m else None

    def next(self) -> str:
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            raise TermSyntaxError(f"unexpected end of input in {self.text!r}")
        self.pos = m.end()
        return m.group(1)

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise TermSyntaxError(f"expected {tok!r}, got {got!r} in {self.text!r}")

    def parse_term(self) -> Term:
        tok = self.next()
        if tok == "[":
            items: list[Term] = []
            if self.peek() != "]":
                items.append(self.parse_term())
                while self.peek() == ",":
                    self.next()
                    items.append(self.parse_term())
            self.expect("]")
            self.expect("{")
            src = self.next()
            self.expect(">")
            dst = self.next()
            self.expect("}")
            return Box(Role(src), Role(dst), Message(tuple(items)))
        if not re.fullmatch(r"[A-Za-z0-9_#'.!]+", tok):
            raise TermSyntaxError(f"bad atom {tok!r} in {self.text!r}")
        return Label(tok) if tok in self.labels else Value(tok)

    def parse_message(self) -> Message:
        if self.peek() == "(":
            self.next()
            items: list[Term] = []
            if self.peek() != ")":
                items.append(self.parse_term())
                while self.peek() == ",":
                    self.next()
                    items.append(self.parse_term())
            self.expect(")")
            return Message(tuple(items))
        return Message((self.parse_term(),))

    def finish(self) -> None:
        if self.peek() is not None:
            raise TermSyntaxError(f"trailing input at {self.text[self.pos:]!r}")


def parse_term(text: str, labels: frozenset[str] = frozenset()) -> Term:
    p = _TermParser(text, labels)
    t = p.parse_term()
    p.finish()
    return t


def parse_message(text: str, labels: frozenset[str] = frozenset()) -> Message:
    p = _TermParser(text, labels)
    m = p.parse_message()
    p.finish()
    return m
