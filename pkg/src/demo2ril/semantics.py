"""Task vocabulary: definition language and condition evaluator.

A task definition has typed roles and three literal conjunctions (pre,
run, post) over four predicates: contact, supported, contained, and
grasped.  Conditions are evaluated against the set of situation atoms
active at an instant under a closed-world reading: a positive literal
enumerates bindings from the active atoms, a negated literal succeeds
exactly when no active atom matches it, and a universally quantified
negation succeeds when no active atom matches for any value of the
quantified variables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from .errors import RangeRestrictionViolation, RuleSyntaxError

PREDICATES = {
    "contact": ("Contact", 2),
    "supported": ("Support", 2),
    "contained": ("Containment", 2),
    "grasped": ("Grasp", 1),
}

ROLE_KINDS = ("locatum", "relatum", "tool")

Atom = tuple[str, tuple[str, ...]]
Binding = dict[str, str]
AllowedFn = Callable[[str, str], bool]


@dataclass(frozen=True)
class Literal:
    pred: str
    args: tuple[str, ...]
    negated: bool = False
    forall: tuple[str, ...] = ()

    def __str__(self) -> str:
        body = f"{self.pred}({', '.join(self.args)})"
        if self.negated:
            body = "not " + body
        if self.forall:
            body = f"forall {', '.join(self.forall)}: " + body
        return body


@dataclass(frozen=True)
class Role:
    kind: str
    var: str


@dataclass(frozen=True)
class TaskDefinition:
    name: str
    roles: tuple[Role, ...]
    pre: tuple[Literal, ...]
    run: tuple[Literal, ...]
    post: tuple[Literal, ...]

    @property
    def role_vars(self) -> tuple[str, ...]:
        return tuple(r.var for r in self.roles)

    def tool_vars(self) -> tuple[str, ...]:
        return tuple(r.var for r in self.roles if r.kind == "tool")

    def stages(self) -> tuple[tuple[Literal, ...], ...]:
        return (self.pre, self.run, self.post)


# --------------------------------------------------------------------------
# parsing

_TASK_RE = re.compile(r"^task\s+([A-Za-z]\w*)\s*\{$")
_STAGE_RE = re.compile(r"^(roles|pre|run|post)\s*:\s*(.*)$")
_LITERAL_RE = re.compile(
    r"^(?:forall\s+([A-Za-z]\w*(?:\s*,\s*[A-Za-z]\w*)*)\s*:\s*)?"
    r"(not\s+)?([a-z_]+)\s*\(\s*([^()]*?)\s*\)$")


def _split_top_level(text: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    parts = []
    depth = 0
    cur = []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise RuleSyntaxError(f"unbalanced parentheses in {text!r}")
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise RuleSyntaxError(f"unbalanced parentheses in {text!r}")
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return parts


def _parse_literal(text: str) -> Literal:
    m = _LITERAL_RE.match(text)
    if not m:
        raise RuleSyntaxError(f"cannot parse literal {text!r}")
    forall_part, not_part, pred, args_part = m.groups()
    if pred not in PREDICATES:
        raise RuleSyntaxError(f"unknown predicate {pred!r} in {text!r}")
    args = tuple(a.strip() for a in args_part.split(",")) if args_part.strip() else ()
    arity = PREDICATES[pred][1]
    if len(args) != arity:
        raise RuleSyntaxError(
            f"{pred} expects {arity} argument(s), got {len(args)} in {text!r}")
    for a in args:
        if not re.match(r"^[A-Za-z]\w*$", a):
            raise RuleSyntaxError(f"bad variable name {a!r} in {text!r}")
    forall_vars: tuple[str, ...] = ()
    if forall_part:
        forall_vars = tuple(v.strip() for v in forall_part.split(","))
        if not not_part:
            raise RuleSyntaxError(
                f"universal quantification requires negation: {text!r}")
        for v in forall_vars:
            if v not in args:
                raise RuleSyntaxError(
                    f"quantified variable {v!r} unused in {text!r}")
    return Literal(pred, args, negated=bool(not_part), forall=forall_vars)


def _parse_condition(text: str) -> tuple[Literal, ...]:
    text = text.strip()
    if text == "true":
        return ()
    return tuple(_parse_literal(part) for part in _split_top_level(text))


def _parse_roles(text: str) -> tuple[Role, ...]:
    roles = []
    for part in _split_top_level(text):
        pieces = part.split()
        if len(pieces) != 2:
            raise RuleSyntaxError(f"cannot parse role {part!r}")
        kind, var = pieces
        if kind not in ROLE_KINDS:
            raise RuleSyntaxError(f"unknown role kind {kind!r}")
        roles.append(Role(kind, var))
    if not roles:
        raise RuleSyntaxError("task declares no roles")
    seen = set()
    for r in roles:
        if r.var in seen:
            raise RuleSyntaxError(f"duplicate role variable {r.var!r}")
        seen.add(r.var)
    return tuple(roles)


def _check_well_formed(task: TaskDefinition) -> None:
    role_vars = set(task.role_vars)
    bound = set(task.tool_vars())
    positive_vars: set[str] = set()
    for stage_name, literals in zip(("pre", "run", "post"), task.stages()):
        for lit in literals:
            quantified = set(lit.forall)
            if quantified & role_vars:
                raise RuleSyntaxError(
                    f"{task.name}.{stage_name}: quantified variable shadows "
                    f"a role in {lit}")
            free = [a for a in lit.args if a not in quantified]
            for a in free:
                if a not in role_vars:
                    raise RuleSyntaxError(
                        f"{task.name}.{stage_name}: unknown variable {a!r} in {lit}")
            if lit.negated:
                unbound = [a for a in free if a not in bound]
                if unbound:
                    raise RangeRestrictionViolation(
                        f"{task.name}.{stage_name}: {lit} tests unbound "
                        f"variable(s) {unbound}")
            else:
                bound.update(free)
                positive_vars.update(free)
    uncovered = [
        r.var for r in task.roles
        if r.kind != "tool" and r.var not in positive_vars
    ]
    if uncovered:
        raise RangeRestrictionViolation(
            f"{task.name}: role variable(s) {uncovered} never appear in a "
            f"positive literal")


def parse_tasks(text: str) -> dict[str, TaskDefinition]:
    """Parse a task vocabulary file into an ordered name -> definition map."""
    tasks: dict[str, TaskDefinition] = {}
    name = None
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _TASK_RE.match(line)
        if m:
            if name is not None:
                raise RuleSyntaxError(f"line {lineno}: nested task block")
            name = m.group(1)
            if name in tasks:
                raise RuleSyntaxError(f"line {lineno}: duplicate task {name!r}")
            fields = {}
            continue
        if line == "}":
            if name is None:
                raise RuleSyntaxError(f"line {lineno}: stray closing brace")
            missing = {"roles", "pre", "run", "post"} - set(fields)
            if missing:
                raise RuleSyntaxError(f"task {name}: missing {sorted(missing)}")
            task = TaskDefinition(
                name=name,
                roles=_parse_roles(fields["roles"]),
                pre=_parse_condition(fields["pre"]),
                run=_parse_condition(fields["run"]),
                post=_parse_condition(fields["post"]),
            )
            _check_well_formed(task)
            tasks[name] = task
            name = None
            continue
        m = _STAGE_RE.match(line)
        if m and name is not None:
            key, value = m.groups()
            if key in fields:
                raise RuleSyntaxError(f"task {name}: duplicate {key!r}")
            fields[key] = value
            continue
        raise RuleSyntaxError(f"line {lineno}: cannot parse {raw!r}")
    if name is not None:
        raise RuleSyntaxError(f"task {name}: unterminated block")
    if not tasks:
        raise RuleSyntaxError("no task definitions found")
    return tasks


def format_condition(literals: tuple[Literal, ...]) -> str:
    return ", ".join(str(lit) for lit in literals) if literals else "true"


def format_tasks(tasks: dict[str, TaskDefinition]) -> str:
    """Render definitions back to vocabulary syntax.

    Inverse of parse_tasks up to comments and whitespace: parsing the
    rendered text reproduces the same definitions.
    """
    blocks = []
    for task in tasks.values():
        roles = ", ".join(f"{r.kind} {r.var}" for r in task.roles)
        lines = [f"task {task.name} {{", f"  roles: {roles}"]
        for stage, lits in zip(("pre", "run", "post"), task.stages()):
            lines.append(f"  {stage}: {format_condition(lits)}")
        lines.append("}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def load_tasks(path: str | Path) -> dict[str, TaskDefinition]:
    return parse_tasks(Path(path).read_text())


def default_tasks() -> dict[str, TaskDefinition]:
    text = resources.files("demo2ril").joinpath("data/tasks.tsk").read_text()
    return parse_tasks(text)


# --------------------------------------------------------------------------
# evaluation

def _unify(pattern: tuple[str, ...], values: tuple[str, ...],
           binding: Binding, wildcard: set[str],
           allowed: AllowedFn | None) -> Binding | None:
    """Match literal arguments against atom participants.

    Returns the extended binding, or None.  Wildcard variables match
    anything without being recorded; fresh variables must pass the
    allowed filter and stay injective with existing bindings.
    """
    out = dict(binding)
    for var, val in zip(pattern, values):
        if var in wildcard:
            continue
        if var in out:
            if out[var] != val:
                return None
        else:
            if allowed is not None and not allowed(var, val):
                return None
            if val in out.values():
                return None
            out[var] = val
    return out


def _atom_patterns(lit: Literal, atom: Atom) -> list[tuple[str, ...]]:
    """Participant orderings of atom that the literal may match."""
    kind, parts = atom
    want_kind = PREDICATES[lit.pred][0]
    if kind != want_kind:
        return []
    if lit.pred == "contact":
        if parts[0] == parts[1]:
            return [parts]
        return [parts, (parts[1], parts[0])]
    if lit.pred == "grasped":
        return [(parts[0],)]
    return [parts]


def match_positive(lit: Literal, atoms: Iterable[Atom], binding: Binding,
                   allowed: AllowedFn | None) -> list[Binding]:
    """All extensions of binding under which some active atom matches lit."""
    found: dict[tuple, Binding] = {}
    for atom in atoms:
        for values in _atom_patterns(lit, atom):
            ext = _unify(lit.args, values, binding, set(), allowed)
            if ext is not None:
                found[tuple(sorted(ext.items()))] = ext
    return [found[k] for k in sorted(found)]


def negative_holds(lit: Literal, atoms: Iterable[Atom], binding: Binding) -> bool:
    """True when no active atom matches the (fully bound) negated literal."""
    wildcard = set(lit.forall)
    for atom in atoms:
        for values in _atom_patterns(lit, atom):
            if _unify(lit.args, values, binding, wildcard, None) is not None:
                return False
    return True


def extend_bindings(literals: Iterable[Literal], atoms: Iterable[Atom],
                    bindings: list[Binding],
                    allowed: AllowedFn | None = None) -> list[Binding]:
    """Evaluate a literal conjunction over active atoms.

    Folds left to right starting from the given partial bindings and
    returns every consistent extension, sorted canonically.  An empty
    result means the condition fails for all of them.
    """
    atoms = list(atoms)
    current = list(bindings)
    for lit in literals:
        if lit.negated:
            current = [b for b in current if negative_holds(lit, atoms, b)]
        else:
            nxt: dict[tuple, Binding] = {}
            for b in current:
                for ext in match_positive(lit, atoms, b, allowed):
                    nxt[tuple(sorted(ext.items()))] = ext
            current = [nxt[k] for k in sorted(nxt)]
        if not current:
            return []
    dedup = {tuple(sorted(b.items())): b for b in current}
    return [dedup[k] for k in sorted(dedup)]
