"""Command-line front door.

Subcommands: ``check`` (well-formedness report), ``strands`` (compiled
template listing), ``shapes`` (execution search, the default), ``oracle``
(brute-force enumeration).  Exit codes: 0 success, 1 ill-formed input,
2 bound exhausted, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import choreo, penetrator, search, semantics, skeleton
from .terms import Role, render_message

SUBCOMMANDS = ("check", "strands", "shapes", "oracle")

EXIT_OK = 0
EXIT_ILL_FORMED = 1
EXIT_EXHAUSTED = 2
EXIT_INTERNAL = 3


@dataclass(frozen=True)
class RunConfig:
    path: str
    command: str
    compromised: frozenset[Role]
    start: str | None
    fmt: str
    bounds: search.Bounds
    explain: str | None = None


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="boxchor",
        description="Analyze box-annotated choreographies for minimal "
                    "delivery-guaranteed executions under compromised roles.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, doc in (("check", "report well-formedness"),
                      ("strands", "list compiled strand templates"),
                      ("shapes", "search minimal executions"),
                      ("oracle", "brute-force minimal executions")):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("input", help="choreography source file")
        sp.add_argument("--compromised", action="append", default=[],
                        metavar="ROLE[,ROLE...]",
                        help="roles played by compromised principals")
        sp.add_argument("--start", metavar="ROLE:INDEX|ROLE:PATH",
                        help="start strand (index as printed by 'strands', "
                             "or dotted branch-label path)")
        sp.add_argument("--format", dest="fmt", default="text",
                        choices=("text", "dot", "json"))
        sp.add_argument("--max-nodes", type=int,
                        default=int(os.environ.get("BOXCHOR_MAX_NODES", "16")))
        sp.add_argument("--max-instances", type=int, default=2)
        sp.add_argument("--max-fresh", type=int, default=8)
        sp.add_argument("--explain", metavar="SHAPE:NODE",
                        help="print the derivability trace for a reception "
                             "in a result shape")
    return p


def parse_args(argv: list[str]) -> RunConfig:
    if argv and argv[0] not in SUBCOMMANDS and not argv[0].startswith("-"):
        argv = ["shapes"] + argv
    ns = _build_parser().parse_args(argv)
    compromised = frozenset(Role(r.strip())
                            for chunk in ns.compromised
                            for r in chunk.split(",") if r.strip())
    bounds = search.Bounds(ns.max_nodes, ns.max_instances, ns.max_fresh)
    return RunConfig(ns.input, ns.command, compromised, ns.start, ns.fmt,
                     bounds, ns.explain)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load(cfg: RunConfig) -> choreo.Spec:
    try:
        with open(cfg.path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise CliError(f"cannot read {cfg.path}: {e}", EXIT_ILL_FORMED)
    try:
        spec = choreo.parse(text)
    except choreo.ChoreoSyntaxError as e:
        raise CliError(f"{cfg.path}:{e}", EXIT_ILL_FORMED)
    declared = {r.name for r in spec.roles}
    for role in cfg.compromised:
        if role.name not in declared:
            raise CliError(f"unknown compromised role {role.name!r}",
                           EXIT_ILL_FORMED)
    return spec


def _compiled(cfg: RunConfig, spec: choreo.Spec) -> semantics.StrandSpace:
    violations = choreo.well_formed(spec)
    if violations:
        raise CliError("ill-formed choreography:\n" +
                       "\n".join(f"  {v}" for v in violations),
                       EXIT_ILL_FORMED)
    return semantics.compile_spec(spec)


def _template_listing(space: semantics.StrandSpace) -> list[str]:
    lines = []
    for role in space.roles:
        for i, t in enumerate(space.by_role(role), start=1):
            nodes = " ⇒ ".join(f"{dt.sign}{render_message(dt.message)}"
                                    for dt in t.trace)
            lines.append(f"{role}[{i}] id={t.id} : {nodes}")
    return lines


def _pick_start(cfg: RunConfig, space: semantics.StrandSpace) -> skeleton.Skeleton:
    if not cfg.start:
        raise CliError("--start ROLE:INDEX (or ROLE:PATH) is required "
                       "for this command", EXIT_ILL_FORMED)
    role_name, _, which = cfg.start.partition(":")
    if not which:
        raise CliError(f"bad --start {cfg.start!r}", EXIT_ILL_FORMED)
    role = Role(role_name)
    if role in cfg.compromised:
        raise CliError(f"start role {role} must not be compromised",
                       EXIT_ILL_FORMED)
    templates = space.by_role(role)
    if not templates:
        raise CliError(f"role {role} has no strands", EXIT_ILL_FORMED)
    if which.isdigit():
        idx = int(which)
        if not 1 <= idx <= len(templates):
            raise CliError(f"start index {idx} out of range for {role}",
                           EXIT_ILL_FORMED)
        template = templates[idx - 1]
    else:
        matches = [t for t in templates if t.id == which]
        if not matches:
            raise CliError(f"no strand of {role} with id {which!r}",
                           EXIT_ILL_FORMED)
        template = matches[0]
    inst = semantics.instantiate(template, {}, 0)
    return skeleton.new_skeleton(inst, len(template))


def _emit_result(cfg: RunConfig, result: search.SearchResult, out) -> None:
    if cfg.fmt == "json":
        json.dump(result.to_json_dict(), out, indent=2, sort_keys=True)
        out.write("\n")
        return
    if cfg.fmt == "dot":
        for i, a in enumerate(result.shapes, start=1):
            out.write(skeleton.to_dot(a, f"shape{i}"))
            out.write("\n")
        return
    out.write(f"{len(result.shapes)} shape(s), {result.steps} step(s) applied"
              f"{', bounds exhausted' if result.exhausted else ''}\n")
    for i, a in enumerate(result.shapes, start=1):
        out.write(f"shape {i}:\n")
        for inst in a.instances:
            ln = a.prefix_len(inst)
            nodes = " ⇒ ".join(str(inst.trace[k]) for k in range(ln))
            out.write(f"  {inst}: {nodes}\n")
        for m, n in a.reduced_edges():
            if m.instance != n.instance:
                out.write(f"  {m} < {n}\n")


def _explain_node(cfg: RunConfig, result: search.SearchResult, out) -> None:
    shape_s, _, node_s = cfg.explain.partition(":")
    try:
        shape_i, node_i = int(shape_s), int(node_s)
    except ValueError:
        raise CliError(f"bad --explain {cfg.explain!r} (want SHAPE:NODE)",
                       EXIT_ILL_FORMED)
    if not 1 <= shape_i <= len(result.shapes):
        raise CliError(f"shape {shape_i} out of range", EXIT_ILL_FORMED)
    a = result.shapes[shape_i - 1]
    nodes = a.sorted_nodes()
    if not 1 <= node_i <= len(nodes):
        raise CliError(f"node {node_i} out of range", EXIT_ILL_FORMED)
    n = nodes[node_i - 1]
    if n.positive:
        out.write(f"{n} is a transmission; nothing to derive\n")
        return
    ok, trace = penetrator.explain(skeleton.feeds(a, n), n.msg, cfg.compromised)
    out.write(f"{n} {'derivable' if ok else 'NOT derivable'}:\n{trace}\n")


def run(argv: list[str], out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        cfg = parse_args(argv)
    except SystemExit as e:
        return EXIT_ILL_FORMED if e.code else EXIT_OK
    try:
        spec = _load(cfg)
        if cfg.command == "check":
            violations = choreo.well_formed(spec)
            if violations:
                for v in violations:
                    err.write(f"{cfg.path}: {v}\n")
                return EXIT_ILL_FORMED
            space = semantics.compile_spec(spec)
            out.write(f"ok: {len(spec.roles)} roles, "
                      f"{len(space.templates)} strand templates\n")
            return EXIT_OK

        space = _compiled(cfg, spec)
        if cfg.command == "strands":
            for line in _template_listing(space):
                out.write(line + "\n")
            return EXIT_OK

        start = _pick_start(cfg, space)
        if cfg.command == "shapes":
            result = search.shapes(start, space, cfg.compromised, cfg.bounds)
        else:
            result = search.brute_force_min_dg_realized(
                start, space, cfg.compromised, cfg.bounds)
        _emit_result(cfg, result, out)
        if cfg.explain:
            _explain_node(cfg, result, out)
        return EXIT_EXHAUSTED if result.exhausted else EXIT_OK
    except CliError as e:
        err.write(f"boxchor: {e}\n")
        return e.code
    except Exception as e:  # invariant violation
        err.write(f"boxchor: internal error: {e!r}\n")
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run(sys.argv[1:]))
