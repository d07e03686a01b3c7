"""Choreography source language: parser and static well-formedness checks.

File grammar::

    file    := ("roles" idlist ";")+ ("knows" ID ":" idlist ";")* "choreography" "{" chor "}"
    chor    := "0" | "(" chor ")" | branch ("+" branch)*
    branch  := ID "->" ID ":" ID "(" msglist? ")" ("." chor)?
    msglist := msg ("," msg)*
    msg     := ID | "box" "(" ID ">" ID ";" msglist? ")"
    idlist  := ID ("," ID)*

All branches of one ``+``-sum share sender and receiver; a ``+`` whose
branch has different endpoints closes the current sum and attaches to the
nearest enclosing sum with matching endpoints.  An omitted ``. chor``
continuation means the inactive choreography.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Optional, Union

from .terms import Box, Label, Message, Role, Term, Value


@dataclass(frozen=True)
class Inact:
    pass


@dataclass(frozen=True)
class Branch:
    label: Label
    payload: Message
    cont: "Choreography"
    line: int = 0
    col: int = 0


@dataclass(frozen=True)
class Sum:
    sender: Role
    receiver: Role
    branches: tuple[Branch, ...]
    line: int = 0
    col: int = 0


Choreography = Union[Inact, Sum]


@dataclass(frozen=True)
class Spec:
    """Parsed source file: declared roles, initial knowledge, body."""

    roles: tuple[Role, ...]
    initial_knowledge: tuple[tuple[Role, tuple[Value, ...]], ...]
    body: Choreography

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(b.label.name for s in iter_sums(self.body) for b in s.branches)

    @property
    def values(self) -> frozenset[str]:
        return frozenset(v.name for _, vs in self.initial_knowledge for v in vs)

    def knowledge_of(self, role: Role) -> frozenset[Term]:
        for r, vs in self.initial_knowledge:
            if r == role:
                return frozenset(vs)
        return frozenset()


def iter_sums(c: Choreography) -> Iterator[Sum]:
    if isinstance(c, Sum):
        yield c
        for b in c.branches:
            yield from iter_sums(b.cont)


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        where = f" at {self.line}:{self.col}" if self.line else ""
        return f"[{self.rule}]{where} {self.message}"


class ChoreoSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Tokenizer and parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"->|[A-Za-z_][A-Za-z0-9_']*|[0-9]+|[{}();:,.+>]|\S")
_COMMENT_RE = re.compile(r"//[^\n]*|#[^\n]*")


@dataclass(frozen=True)
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    for lineno, line in enumerate(src.splitlines(), start=1):
        line = _COMMENT_RE.sub("", line)
        for m in _TOKEN_RE.finditer(line):
            toks.append(_Tok(m.group(0), lineno, m.start() + 1))
    return toks


_ID_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0
        self.roles: set[str] = set()
        self.values: set[str] = set()

    def _here(self) -> tuple[int, int]:
        if self.i < len(self.toks):
            t = self.toks[self.i]
            return t.line, t.col
        if self.toks:
            t = self.toks[-1]
            return t.line, t.col + len(t.text)
        return 1, 1

    def fail(self, message: str):
        line, col = self._here()
        raise ChoreoSyntaxError(message, line, col)

    def peek(self) -> Optional[str]:
        return self.toks[self.i].text if self.i < len(self.toks) else None

    def next(self) -> _Tok:
        if self.i >= len(self.toks):
            self.fail("unexpected end of input")
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        if self.peek() != text:
            self.fail(f"expected {text!r}, got {self.peek()!r}")
        return self.next()

    def ident(self, what: str = "identifier") -> _Tok:
        tok = self.next()
        if not _ID_RE.match(tok.text):
            raise ChoreoSyntaxError(f"expected {what}, got {tok.text!r}", tok.line, tok.col)
        return tok

    def idlist(self) -> list[_Tok]:
        out = [self.ident()]
        while self.peek() == ",":
            self.next()
            out.append(self.ident())
        return out

    def role(self) -> Role:
        tok = self.ident("role name")
        if tok.text not in self.roles:
            raise ChoreoSyntaxError(f"undeclared role {tok.text!r}", tok.line, tok.col)
        return Role(tok.text)

    # -- top level ----------------------------------------------------------

    def parse_file(self) -> Spec:
        if self.peek() != "roles":
            self.fail("expected 'roles' declaration")
        while self.peek() == "roles":
            self.next()
            for tok in self.idlist():
                self.roles.add(tok.text)
            self.expect(";")
        knowledge: list[tuple[Role, tuple[Value, ...]]] = []
        seen_roles: set[Role] = set()
        while self.peek() == "knows":
            self.next()
            role = self.role()
            self.expect(":")
            vals = tuple(Value(t.text) for t in self.idlist())
            self.expect(";")
            if role in seen_roles:
                self.fail(f"duplicate 'knows' section for {role}")
            seen_roles.add(role)
            self.values.update(v.name for v in vals)
            knowledge.append((role, vals))
        self.expect("choreography")
        self.expect("{")
        body = self.parse_chor()
        self.expect("}")
        if self.peek() is not None:
            self.fail(f"trailing input {self.peek()!r}")
        return Spec(tuple(sorted(Role(r) for r in self.roles)), tuple(knowledge), body)

    # -- choreography -------------------------------------------------------

    def parse_chor(self) -> Choreography:
        if self.peek() == "0":
            self.next()
            return Inact()
        if self.peek() == "(":
            self.next()
            c = self.parse_chor()
            self.expect(")")
            return c
        return self.parse_sum()

    def parse_sum(self) -> Sum:
        line, col = self._here()
        sender, receiver, first = self.parse_branch()
        branches = [first]
        while self.peek() == "+":
            mark = self.i
            self.next()
            s2, r2, b2 = self.parse_branch()
            if (s2, r2) != (sender, receiver):
                # This branch belongs to an enclosing sum with these endpoints.
                self.i = mark
                break
            branches.append(b2)
        return Sum(sender, receiver, tuple(branches), line, col)

    def parse_branch(self) -> tuple[Role, Role, Branch]:
        sender = self.role()
        self.expect("->")
        receiver = self.role()
        if sender == receiver:
            self.fail(f"self-communication {sender} -> {receiver} is not allowed")
        self.expect(":")
        op = self.ident("branch label")
        self.expect("(")
        payload = Message(tuple(self.msglist())) if self.peek() != ")" else Message()
        self.expect(")")
        cont: Choreography = Inact()
        if self.peek() == ".":
            self.next()
            cont = self.parse_chor()
        return sender, receiver, Branch(Label(op.text), payload, cont, op.line, op.col)

    def msglist(self) -> list[Term]:
        out = [self.msg()]
        while self.peek() == ",":
            self.next()
            out.append(self.msg())
        return out

    def msg(self) -> Term:
        if self.peek() == "box":
            self.next()
            self.expect("(")
            src = self.role()
            self.expect(">")
            dst = self.role()
            self.expect(";")
            items = self.msglist() if self.peek() != ")" else []
            self.expect(")")
            return Box(src, dst, Message(tuple(items)))
        tok = self.ident("value name")
        if tok.text not in self.values:
            raise ChoreoSyntaxError(f"undeclared value {tok.text!r}", tok.line, tok.col)
        return Value(tok.text)


def parse(text: str) -> Spec:
    """Parse a choreography source file; raises ChoreoSyntaxError."""
    parser = _Parser(_tokenize(text))
    spec = parser.parse_file()
    # A leftover '+' at top level means some sum mixed endpoints.
    return spec


# ---------------------------------------------------------------------------
# Well-formedness
# ---------------------------------------------------------------------------

Env = dict[Role, frozenset[Term]]


def top(c: Choreography, all_roles: tuple[Role, ...]) -> frozenset[Role]:
    """Roles that may speak first: the sender of a sum, anyone for inact."""
    if isinstance(c, Inact):
        return frozenset(all_roles)
    return frozenset({c.sender})


def knows(env: Env, role: Role, what: Union[Message, Term]) -> bool:
    """Derivability of a message from a role's knowledge.

    Closure rules: opening a known box addressed to the role exposes its
    payload; a box from the role is known whenever its payload is.
    """
    analyzed = _saturate(env.get(role, frozenset()), role)
    items = what.items if isinstance(what, Message) else (what,)
    return all(_knowable(t, analyzed, role) for t in items)


def _saturate(base: frozenset[Term], role: Role) -> frozenset[Term]:
    todo = list(base)
    seen: set[Term] = set()
    while todo:
        t = todo.pop()
        if t in seen:
            continue
        seen.add(t)
        if isinstance(t, Box) and t.dst == role:
            todo.extend(t.body.items)
    return frozenset(seen)


def _knowable(t: Term, analyzed: frozenset[Term], role: Role) -> bool:
    if t in analyzed:
        return True
    if isinstance(t, Box) and t.src == role:
        return all(_knowable(i, analyzed, role) for i in t.body.items)
    return False


def well_formed(spec: Spec) -> list[Violation]:
    """Empty list when the choreography is well-formed."""
    violations: list[Violation] = []

    seen_labels: dict[str, tuple[int, int]] = {}
    for s in iter_sums(spec.body):
        for b in s.branches:
            if b.label.name in seen_labels:
                violations.append(Violation(
                    "distinct labels",
                    f"label {b.label.name!r} used more than once",
                    b.line, b.col))
            else:
                seen_labels[b.label.name] = (b.line, b.col)
            if b.label.name in spec.values:
                violations.append(Violation(
                    "distinct labels",
                    f"label {b.label.name!r} collides with a declared value",
                    b.line, b.col))

    env: Env = {r: spec.knowledge_of(r) for r in spec.roles}
    _check(spec.body, env, spec.roles, violations)
    return violations


def _check(c: Choreography, env: Env, all_roles: tuple[Role, ...],
           violations: list[Violation]) -> None:
    if isinstance(c, Inact):
        return
    for b in c.branches:
        for t in b.payload.items:
            if not knows(env, c.sender, t):
                violations.append(Violation(
                    "sender knowledge",
                    f"{c.sender} cannot produce {t} in branch {b.label.name!r}",
                    b.line, b.col))
        if c.receiver not in top(b.cont, all_roles):
            violations.append(Violation(
                "continuation head",
                f"{c.receiver} is not the next sender after branch {b.label.name!r}",
                b.line, b.col))
        env2 = dict(env)
        env2[c.receiver] = env.get(c.receiver, frozenset()) | frozenset(b.payload.items)
        _check(b.cont, env2, all_roles, violations)
