"""Robot instruction language: typed instructions, emitter, parser.

The textual form is a line-oriented program with a fixed header.  All
numbers are emitted with six decimals, which makes emit(parse(text))
byte-identical to text for any emitted program.

    RIL 1 Z-UP SI
    MOVEL x y z qw qx qy qz speed
    MOVEC dx dy dz maxtravel flimit
    SPIRAL ax ay az radius pitch flimit
    PUSHF dx dy dz force maxtravel
    GRIP OPEN | GRIP CLOSE [width]
    HALT

Poses are TCP poses in the world frame, z up, SI units throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ProgramSyntaxError

HEADER = "RIL 1 Z-UP SI"


def _fmt(v: float) -> str:
    if not math.isfinite(v):
        raise ProgramSyntaxError(f"non-finite value {v!r} in instruction")
    return f"{float(v):.6f}"


@dataclass(frozen=True)
class MoveL:
    """Straight-line TCP move to an absolute pose."""

    pos: tuple[float, float, float]
    quat: tuple[float, float, float, float]  # (w, x, y, z)
    speed: float

    op = "MOVEL"

    def to_line(self) -> str:
        vals = (*self.pos, *self.quat, self.speed)
        return "MOVEL " + " ".join(_fmt(v) for v in vals)


@dataclass(frozen=True)
class MoveC:
    """Guarded move along a direction until contact or travel is spent."""

    direction: tuple[float, float, float]
    max_travel: float
    force_limit: float

    op = "MOVEC"

    def to_line(self) -> str:
        vals = (*self.direction, self.max_travel, self.force_limit)
        return "MOVEC " + " ".join(_fmt(v) for v in vals)


@dataclass(frozen=True)
class Spiral:
    """Spiral search about an axis to localize a mating feature."""

    axis: tuple[float, float, float]
    radius: float
    pitch: float
    force_limit: float

    op = "SPIRAL"

    def to_line(self) -> str:
        vals = (*self.axis, self.radius, self.pitch, self.force_limit)
        return "SPIRAL " + " ".join(_fmt(v) for v in vals)


@dataclass(frozen=True)
class PushF:
    """Force-limited push along a direction up to a travel budget."""

    direction: tuple[float, float, float]
    force: float
    max_travel: float

    op = "PUSHF"

    def to_line(self) -> str:
        vals = (*self.direction, self.force, self.max_travel)
        return "PUSHF " + " ".join(_fmt(v) for v in vals)


@dataclass(frozen=True)
class Grip:
    mode: str  # OPEN or CLOSE
    width: float | None = None

    op = "GRIP"

    def __post_init__(self):
        if self.mode not in ("OPEN", "CLOSE"):
            raise ProgramSyntaxError(f"bad grip mode {self.mode!r}")
        if self.mode == "OPEN" and self.width is not None:
            raise ProgramSyntaxError("GRIP OPEN takes no width")

    def to_line(self) -> str:
        if self.width is None:
            return f"GRIP {self.mode}"
        return f"GRIP {self.mode} {_fmt(self.width)}"


@dataclass(frozen=True)
class Halt:
    op = "HALT"

    def to_line(self) -> str:
        return "HALT"


Instruction = MoveL | MoveC | Spiral | PushF | Grip | Halt


def emit_program(instructions: list[Instruction]) -> str:
    """Render a program; a single trailing HALT is always present."""
    body = [i for i in instructions if not isinstance(i, Halt)]
    lines = [HEADER]
    lines += [i.to_line() for i in body]
    lines.append(Halt().to_line())
    return "\n".join(lines) + "\n"


def _floats(tokens: list[str], n: int, lineno: int, op: str) -> list[float]:
    if len(tokens) != n:
        raise ProgramSyntaxError(
            f"line {lineno}: {op} expects {n} numbers, got {len(tokens)}")
    out = []
    for t in tokens:
        try:
            out.append(float(t))
        except ValueError:
            raise ProgramSyntaxError(f"line {lineno}: bad number {t!r}") from None
    return out


def parse_program(text: str) -> list[Instruction]:
    lines = text.splitlines()
    meaningful = [(i + 1, ln.strip()) for i, ln in enumerate(lines)]
    meaningful = [(no, ln) for no, ln in meaningful
                  if ln and not ln.startswith("#")]
    if not meaningful or meaningful[0][1] != HEADER:
        raise ProgramSyntaxError(f"missing or bad header, expected {HEADER!r}")
    instructions: list[Instruction] = []
    halted = False
    for lineno, line in meaningful[1:]:
        if halted:
            raise ProgramSyntaxError(f"line {lineno}: instruction after HALT")
        tokens = line.split()
        op, args = tokens[0], tokens[1:]
        if op == "MOVEL":
            v = _floats(args, 8, lineno, op)
            instructions.append(MoveL(tuple(v[0:3]), tuple(v[3:7]), v[7]))
        elif op == "MOVEC":
            v = _floats(args, 5, lineno, op)
            instructions.append(MoveC(tuple(v[0:3]), v[3], v[4]))
        elif op == "SPIRAL":
            v = _floats(args, 6, lineno, op)
            instructions.append(Spiral(tuple(v[0:3]), v[3], v[4], v[5]))
        elif op == "PUSHF":
            v = _floats(args, 5, lineno, op)
            instructions.append(PushF(tuple(v[0:3]), v[3], v[4]))
        elif op == "GRIP":
            if not args or args[0] not in ("OPEN", "CLOSE"):
                raise ProgramSyntaxError(f"line {lineno}: bad GRIP form")
            mode = args[0]
            if mode == "OPEN":
                if len(args) != 1:
                    raise ProgramSyntaxError(f"line {lineno}: GRIP OPEN takes no args")
                instructions.append(Grip("OPEN"))
            else:
                if len(args) == 1:
                    instructions.append(Grip("CLOSE"))
                else:
                    w = _floats(args[1:], 1, lineno, op)
                    instructions.append(Grip("CLOSE", w[0]))
        elif op == "HALT":
            if args:
                raise ProgramSyntaxError(f"line {lineno}: HALT takes no args")
            instructions.append(Halt())
            halted = True
        else:
            raise ProgramSyntaxError(f"line {lineno}: unknown opcode {op!r}")
    if not halted:
        raise ProgramSyntaxError("program does not end with HALT")
    return instructions
