"""Adversary message derivability for a set of compromised roles.

The adversary can compose and separate tuples, emit any atom in clear,
box payloads under a compromised source role, and open boxes addressed
to a compromised destination role.  Derivability is decided in two
phases: saturate the analysis closure of the available messages, then
check the target bottom-up through the construction rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

from .terms import Box, Label, Message, Role, Term, Value


@dataclass(frozen=True)
class Knowledge:
    analyzed: frozenset[Term]
    compromised: frozenset[Role]

    def knows(self, t: Term) -> bool:
        return t in self.analyzed


def analyze(avail: Iterable[Message], compromised: Iterable[Role]) -> Knowledge:
    """Least term set covering avail, closed under separation and opening."""
    comp = frozenset(compromised)
    todo: list[Term] = []
    for m in avail:
        todo.extend(m.items)
    seen: set[Term] = set()
    while todo:
        t = todo.pop()
        if t in seen:
            continue
        seen.add(t)
        if isinstance(t, Box) and t.dst in comp:
            todo.extend(t.body.items)
    return Knowledge(frozenset(seen), comp)


def _buildable(t: Term, know: Knowledge) -> bool:
    if isinstance(t, (Value, Label)):
        # Atoms are public: the adversary may utter any value or label in clear.
        return True
    if t in know.analyzed:
        return True
    if isinstance(t, Box) and t.src in know.compromised:
        return all(_buildable(i, know) for i in t.body.items)
    return False


def derivable(avail: Iterable[Message], target: Union[Message, Term],
              compromised: Iterable[Role]) -> bool:
    """Can the adversary produce target from avail, given compromised roles?"""
    know = analyze(avail, compromised)
    if isinstance(target, Message):
        return all(_buildable(t, know) for t in target.items)
    return _buildable(target, know)


@dataclass
class _Expl:
    lines: list[str] = field(default_factory=list)

    def add(self, depth: int, text: str) -> None:
        self.lines.append("  " * depth + text)


def explain(avail: Iterable[Message], target: Union[Message, Term],
            compromised: Iterable[Role]) -> tuple[bool, str]:
    """Derivability verdict plus a human-readable derivation trace.

    On failure the trace pinpoints the first underivable subterm.
    """
    know = analyze(avail, compromised)
    out = _Expl()
    items = target.items if isinstance(target, Message) else (target,)
    ok = True
    for t in items:
        ok = _explain_term(t, know, out, 0) and ok
    return ok, "\n".join(out.lines)


def _explain_term(t: Term, know: Knowledge, out: _Expl, depth: int) -> bool:
    if isinstance(t, (Value, Label)):
        out.add(depth, f"{t}: atom, emitted in clear")
        return True
    assert isinstance(t, Box)
    if t in know.analyzed:
        out.add(depth, f"{t}: obtained from available messages")
        return True
    if t.src in know.compromised:
        out.add(depth, f"{t}: boxed by compromised {t.src}, needs payload:")
        ok = True
        for i in t.body.items:
            ok = _explain_term(i, know, out, depth + 1) and ok
        return ok
    out.add(depth, f"{t}: UNDERIVABLE (source {t.src} honest, box never seen)")
    return False
