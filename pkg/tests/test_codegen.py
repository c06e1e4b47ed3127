"""Instruction language emit/parse round trips and syntax policing."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from demo2ril.codegen import (HEADER, Grip, Halt, MoveC, MoveL, PushF, Spiral,
                              emit_program, parse_program)
from demo2ril.errors import ProgramSyntaxError

finite = st.floats(allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite)
quat = st.tuples(finite, finite, finite, finite)

instruction = st.one_of(
    st.builds(MoveL, vec3, quat, finite),
    st.builds(MoveC, vec3, finite, finite),
    st.builds(Spiral, vec3, finite, finite, finite),
    st.builds(PushF, vec3, finite, finite),
    st.just(Grip("OPEN")),
    st.builds(lambda w: Grip("CLOSE", w), finite),
    st.just(Grip("CLOSE")),
)


@given(st.lists(instruction, max_size=12))
def test_emit_parse_emit_is_byte_identical(instructions):
    text = emit_program(instructions)
    again = emit_program(parse_program(text))
    assert again == text


def test_emitted_shape():
    text = emit_program([MoveL((0.1, -0.2, 0.3), (1.0, 0.0, 0.0, 0.0), 0.25)])
    lines = text.splitlines()
    assert lines[0] == HEADER
    assert lines[1] == "MOVEL 0.100000 -0.200000 0.300000 " \
        "1.000000 0.000000 0.000000 0.000000 0.250000"
    assert lines[-1] == "HALT"
    assert text.endswith("\n")


def test_negative_underflow_keeps_sign():
    text = emit_program([MoveC((-1e-9, 0.0, 1.0), 0.1, 15.0)])
    assert "MOVEC -0.000000 0.000000 1.000000" in text
    assert emit_program(parse_program(text)) == text


def test_interior_halts_are_normalized_away():
    text = emit_program([Halt(), Grip("OPEN"), Halt(), Halt()])
    assert text.splitlines() == [HEADER, "GRIP OPEN", "HALT"]


def test_comments_and_blank_lines_are_skipped():
    text = f"# preamble\n\n{HEADER}\n# note\n  GRIP OPEN\n\nHALT\n"
    assert [i.op for i in parse_program(text)] == ["GRIP", "HALT"]


def test_parse_values():
    (m, g, _h) = parse_program(
        f"{HEADER}\nMOVEL 1 2 3 1 0 0 0 0.25\nGRIP CLOSE 0.034\nHALT\n")
    assert m.pos == (1.0, 2.0, 3.0)
    assert m.quat == (1.0, 0.0, 0.0, 0.0)
    assert m.speed == 0.25
    assert g.mode == "CLOSE"
    assert g.width == 0.034


@pytest.mark.parametrize("text", [
    "MOVEL 0 0 0 1 0 0 0 0.1\nHALT\n",           # no header
    "RIL 2 Z-UP SI\nHALT\n",                      # wrong header
    f"{HEADER}\n",                                # missing HALT
    f"{HEADER}\nMOVEL 1 2 3\nHALT\n",             # arity
    f"{HEADER}\nMOVEC 0 0 1 x 15\nHALT\n",        # bad number
    f"{HEADER}\nJUMP 3\nHALT\n",                  # unknown opcode
    f"{HEADER}\nGRIP\nHALT\n",                    # grip without mode
    f"{HEADER}\nGRIP MAYBE\nHALT\n",              # bad grip mode
    f"{HEADER}\nGRIP OPEN 0.04\nHALT\n",          # open takes no width
    f"{HEADER}\nGRIP CLOSE 1 2\nHALT\n",          # too many widths
    f"{HEADER}\nHALT 0\n",                        # halt takes no args
    f"{HEADER}\nHALT\nGRIP OPEN\nHALT\n",         # code after halt
])
def test_rejects_malformed(text):
    with pytest.raises(ProgramSyntaxError):
        parse_program(text)


def test_rejects_non_finite_emit():
    with pytest.raises(ProgramSyntaxError):
        emit_program([PushF((0.0, 0.0, -1.0), math.nan, 0.1)])
    with pytest.raises(ProgramSyntaxError):
        emit_program([MoveL((math.inf, 0, 0), (1, 0, 0, 0), 0.1)])


def test_grip_constructor_validation():
    with pytest.raises(ProgramSyntaxError):
        Grip("SQUEEZE")
    with pytest.raises(ProgramSyntaxError):
        Grip("OPEN", width=0.02)
