"""Reading segmented actions as task instances.

The fixture episode is a hand-built grasp-and-lift: contact with the
hand from t=0.4, a grasp from t=0.5, and the box leaving the table at
t=1.0.  Expected readings were derived on paper from the rule file.
"""

import random

import pytest

from demo2ril.interpreter import Interpreter, active_atoms, interpret_episode
from demo2ril.model import Action, Situation
from demo2ril.semantics import default_tasks

from oracles import (DT, HAND, HORIZON, action_probe_sets, brute_bindings,
                     random_actions, random_episode)


def sit(kind, parts, t0, t1):
    return Situation(kind, tuple(parts), t0, t1)


@pytest.fixture
def lift_interp():
    situations = [
        sit("Contact", ("box", "table"), 0.0, 1.0),
        sit("Support", ("box", "table"), 0.0, 1.0),
        sit("Contact", ("box", "hand"), 0.4, 2.0),
        sit("Grasp", ("box", "hand"), 0.5, 2.0),
    ]
    return Interpreter(situations, "hand", 0.0, 2.0, DT)


LIFT_ACTIONS = [Action(0.0, 0.4), Action(0.4, 0.5),
                Action(0.5, 1.0), Action(1.0, 2.0)]


def test_active_atoms_tolerance_and_exclusion():
    s = [sit("Support", ("box", "table"), 0.5, 1.0),
         sit("Contact", ("box", "hand"), 0.5, 1.0)]
    assert active_atoms(s, 0.4961, DT) == {
        ("Support", ("box", "table")), ("Contact", ("box", "hand"))}
    assert active_atoms(s, 0.4939, DT) == frozenset()
    assert active_atoms(s, 1.0061, DT) == frozenset()
    assert active_atoms(s, 0.7, DT, exclude="hand") == {
        ("Support", ("box", "table"))}


def test_run_probe_midpoint_fallback(lift_interp):
    assert lift_interp._run_times(Action(0.5, 0.51)) == [pytest.approx(0.5)]
    assert lift_interp._run_times(Action(0.5, 0.52)) == [pytest.approx(0.51)]


def test_hand_only_changes_are_idle(lift_interp):
    # reaching and settling the grip change nothing but hand relations
    assert lift_interp.is_idle(LIFT_ACTIONS[0])
    assert lift_interp.is_idle(LIFT_ACTIONS[1])
    assert not lift_interp.is_idle(LIFT_ACTIONS[2])
    assert not lift_interp.is_idle(LIFT_ACTIONS[3])


def test_lift_readings(lift_interp):
    steps3 = lift_interp.read_action(LIFT_ACTIONS[2])
    assert [s.task for s in steps3] == ["Grasping", "Lifting", "Retracting"]
    steps4 = lift_interp.read_action(LIFT_ACTIONS[3])
    assert [s.task for s in steps4] == ["PickingUp", "Retracting"]
    lifting = steps3[1]
    assert lifting.binding("L") == "box"
    assert lifting.binding("R") == "table"
    with pytest.raises(KeyError):
        lifting.binding("H")
    # tool roles always name the agent, other roles never do
    for step in steps3 + steps4:
        for var, val in step.bindings:
            assert (val == "hand") == (var == "H")


def test_lift_candidates_and_truncation(lift_interp):
    res = lift_interp.interpret(LIFT_ACTIONS)
    assert not res.rejected
    assert res.n_product == 6
    assert res.n_candidates == 6
    assert not res.truncated
    assert [s.task for s in res.candidates[0]] == ["Grasping", "PickingUp"]
    assert [s.task for s in res.candidates[-1]] == ["Retracting", "Retracting"]

    cut = lift_interp.interpret(LIFT_ACTIONS, limit=4)
    assert cut.truncated
    assert cut.n_product == 6
    assert cut.n_candidates == 4
    assert [tuple(s.task for s in c) for c in cut.candidates] == [
        ("Grasping", "PickingUp"), ("Grasping", "Retracting"),
        ("Lifting", "PickingUp"), ("Lifting", "Retracting")]


def test_unexplained_change_rejects_episode():
    # support appearing with no agent involvement matches no rule
    situations = [
        sit("Contact", ("a", "b"), 0.0, 2.0),
        sit("Support", ("a", "b"), 1.0, 2.0),
    ]
    interp = Interpreter(situations, "hand", 0.0, 2.0, DT)
    action = Action(0.0, 2.0)
    assert not interp.is_idle(action)
    assert interp.read_action(action) == []
    res = interp.interpret([action])
    assert res.rejected
    assert res.candidates == []
    assert res.n_candidates == 0


def test_static_episode_yields_one_empty_candidate():
    situations = [sit("Contact", ("a", "b"), 0.0, 2.0)]
    interp = Interpreter(situations, "hand", 0.0, 2.0, DT)
    res = interp.interpret([Action(0.0, 2.0)])
    assert not res.rejected
    assert res.candidates == [()]


def test_closing_and_placing_are_both_read():
    # dropping a lid into a box ends contained + supported + released:
    # the rules cannot tell Placing from Closing and must keep both
    situations = [
        sit("Contact", ("lid", "hand"), 0.0, 1.0),
        sit("Grasp", ("lid", "hand"), 0.0, 1.0),
        sit("Contact", ("lid", "box"), 1.0, 2.0),
        sit("Containment", ("lid", "box"), 1.0, 2.0),
        sit("Support", ("lid", "box"), 1.0, 2.0),
    ]
    interp = Interpreter(situations, "hand", 0.0, 2.0, DT)
    steps = interp.read_action(Action(1.0, 2.0))
    assert [s.task for s in steps] == ["Closing", "Placing"]
    for step in steps:
        assert step.binding("L") == "lid"
        assert step.binding("R") == "box"


def test_interpret_episode_matches_manual_wiring(lift_interp):
    class Seg:
        situations = lift_interp.situations
        t0, t_end, dt = 0.0, 2.0, DT
        actions = LIFT_ACTIONS

    res = interpret_episode(Seg, "hand")
    assert res.n_candidates == 6


@pytest.mark.parametrize("seed", range(40))
def test_satisfies_matches_exhaustive_reference(seed):
    rng = random.Random(1000 + seed)
    situations, objects = random_episode(
        rng, n_objects=rng.choice([2, 3]),
        n_situations=rng.randrange(3, 9))
    actions = random_actions(rng, rng.randrange(1, 4))
    interp = Interpreter(situations, HAND, 0.0, HORIZON, DT)
    tasks = default_tasks()
    for action in actions:
        probes = action_probe_sets(situations, 0.0, HORIZON, DT, action)
        for task in tasks.values():
            fast = {frozenset(b.items())
                    for b in interp.satisfies(task, action)}
            slow = brute_bindings(task, probes, objects)
            assert fast == slow, (task.name, action)
