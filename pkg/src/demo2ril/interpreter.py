"""Closed-world interpretation of segmented actions as task instances.

Each candidate action is tested against every task definition: the pre
condition one sample before the action starts, the run condition at
every sample strictly inside it, and the post condition one sample after
it ends (clamped to the episode span).  Actions whose surroundings do
not change are idle and carry no meaning; every remaining action must
support at least one reading, otherwise the whole demonstration is
rejected as uninterpretable.  The cross product of per-action readings,
in deterministic order, is the candidate explanation list.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Action, Situation
from .segmentation import SegmentationResult
from .semantics import (Atom, Binding, TaskDefinition, default_tasks,
                        extend_bindings)

DEFAULT_CANDIDATE_LIMIT = 256


@dataclass(frozen=True)
class Step:
    """One action read as one task instance with role bindings."""

    action: Action
    task: str
    bindings: tuple[tuple[str, str], ...]

    def binding(self, var: str) -> str:
        for k, v in self.bindings:
            if k == var:
                return v
        raise KeyError(var)


@dataclass
class ActionReading:
    action: Action
    idle: bool
    steps: list[Step] = field(default_factory=list)


@dataclass
class InterpretationResult:
    readings: list[ActionReading]
    candidates: list[tuple[Step, ...]]
    n_product: int
    truncated: bool
    rejected: bool

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)


def active_atoms(situations: list[Situation], t: float, dt: float,
                 exclude: str | None = None) -> frozenset[Atom]:
    """Situation atoms active at time t, optionally dropping every atom
    that involves one object."""
    tol = dt / 2.0
    out = set()
    for s in situations:
        if s.t_start - tol <= t <= s.t_end + tol:
            if exclude is not None and exclude in s.participants:
                continue
            out.add((s.kind, s.participants))
    return frozenset(out)


class Interpreter:
    def __init__(self, situations: list[Situation], hand: str,
                 t0: float, t_end: float, dt: float,
                 tasks: dict[str, TaskDefinition] | None = None):
        self.situations = situations
        self.hand = hand
        self.t0 = t0
        self.t_end = t_end
        self.dt = dt
        self.tasks = tasks or default_tasks()

    @classmethod
    def from_segmentation(cls, seg: SegmentationResult, hand: str,
                          tasks: dict[str, TaskDefinition] | None = None
                          ) -> "Interpreter":
        return cls(seg.situations, hand, seg.t0, seg.t_end, seg.dt, tasks)

    # -- time helpers ------------------------------------------------------

    def _index(self, t: float) -> int:
        return int(round((t - self.t0) / self.dt))

    def _time(self, k: int) -> float:
        return self.t0 + k * self.dt

    def _atoms(self, t: float, exclude: str | None = None) -> frozenset[Atom]:
        return active_atoms(self.situations, t, self.dt, exclude)

    def _run_times(self, action: Action) -> list[float]:
        """Representative instants for the run condition.

        The active atom set is piecewise constant between situation
        edges, so one probe per stretch is exact.  Actions too short to
        have interior samples are probed at their midpoint sample.
        """
        k_start = self._index(action.t_start)
        k_end = self._index(action.t_end)
        first, last = k_start + 1, k_end - 1
        if first > last:
            return [self._time((k_start + k_end) // 2)]
        crit = {first}
        for s in self.situations:
            for edge in (self._index(s.t_start), self._index(s.t_end) + 1):
                if first < edge <= last:
                    crit.add(edge)
        return [self._time(k) for k in sorted(crit)]

    # -- core evaluation ---------------------------------------------------

    def _allowed(self, task: TaskDefinition):
        tool_vars = set(task.tool_vars())

        def allowed(var: str, val: str) -> bool:
            if var in tool_vars:
                return val == self.hand
            return val != self.hand

        return allowed

    def satisfies(self, task: TaskDefinition, action: Action) -> list[Binding]:
        """All role bindings under which the action reads as the task."""
        allowed = self._allowed(task)
        t_pre = max(self.t0, action.t_start - self.dt)
        t_post = min(self.t_end, action.t_end + self.dt)
        bindings = [{v: self.hand for v in task.tool_vars()}]
        bindings = extend_bindings(task.pre, self._atoms(t_pre), bindings, allowed)
        if not bindings:
            return []
        prev_atoms: frozenset[Atom] | None = None
        for t in self._run_times(action):
            atoms = self._atoms(t)
            if atoms == prev_atoms:
                continue
            prev_atoms = atoms
            bindings = extend_bindings(task.run, atoms, bindings, allowed)
            if not bindings:
                return []
        bindings = extend_bindings(task.post, self._atoms(t_post), bindings, allowed)
        return [b for b in bindings if len(b) == len(task.roles)]

    def is_idle(self, action: Action) -> bool:
        """True when nothing changes around the action once the agent's
        own situations are disregarded."""
        t_pre = max(self.t0, action.t_start - self.dt)
        t_post = min(self.t_end, action.t_end + self.dt)
        if self._atoms(t_pre, exclude=self.hand) != self._atoms(t_post, exclude=self.hand):
            return False
        tol = self.dt / 2.0
        for s in self.situations:
            for edge in (s.t_start, s.t_end):
                if action.t_start + tol < edge < action.t_end - tol:
                    return False
        return True

    def read_action(self, action: Action) -> list[Step]:
        steps = []
        for name in sorted(self.tasks):
            task = self.tasks[name]
            for b in self.satisfies(task, action):
                steps.append(Step(action, name, tuple(sorted(b.items()))))
        return steps

    # -- episode level -----------------------------------------------------

    def interpret(self, actions: list[Action],
                  limit: int = DEFAULT_CANDIDATE_LIMIT) -> InterpretationResult:
        readings: list[ActionReading] = []
        for action in actions:
            if self.is_idle(action):
                readings.append(ActionReading(action, idle=True))
            else:
                readings.append(ActionReading(action, idle=False,
                                              steps=self.read_action(action)))
        meaningful = [r for r in readings if not r.idle]
        rejected = any(not r.steps for r in meaningful)
        if rejected:
            return InterpretationResult(readings, [], 0, False, True)

        n_product = 1
        for r in meaningful:
            n_product *= len(r.steps)

        candidates: list[tuple[Step, ...]] = []

        def expand(i: int, prefix: list[Step]) -> None:
            if len(candidates) >= limit:
                return
            if i == len(meaningful):
                candidates.append(tuple(prefix))
                return
            for step in meaningful[i].steps:
                if len(candidates) >= limit:
                    return
                prefix.append(step)
                expand(i + 1, prefix)
                prefix.pop()

        expand(0, [])
        return InterpretationResult(
            readings=readings,
            candidates=candidates,
            n_product=n_product,
            truncated=n_product > limit,
            rejected=False,
        )


def interpret_episode(seg: SegmentationResult, hand: str,
                      tasks: dict[str, TaskDefinition] | None = None,
                      limit: int = DEFAULT_CANDIDATE_LIMIT) -> InterpretationResult:
    """Segmentation result to candidate task sequences in one call."""
    interp = Interpreter.from_segmentation(seg, hand, tasks)
    return interp.interpret(seg.actions, limit=limit)
