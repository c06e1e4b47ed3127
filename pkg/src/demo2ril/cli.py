"""Command line front end.

Subcommands cover single pipeline stages (segment, interpret, plan,
emit, simulate, pose), the full pipeline on one recorded episode, demo
generation, and batch evaluation over a grid of scenarios.

Exit codes: 0 on success, 2 when an episode is rejected as having no
consistent task reading, 3 when no plan both executes and passes its
checkpoints, 4 on bad usage or configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import report
from .codegen import emit_program, parse_program
from .errors import ConfigError, Demo2RilError
from .interpreter import DEFAULT_CANDIDATE_LIMIT, interpret_episode
from .model import EpisodicMemory
from .plan import execution_world, refine_candidate
from .pose import estimate_pose, load_xyz
from .scenario import SCENARIOS, VARIANTS, build, inject_glitch, variant_model
from .segmentation import SegmentationParams, segment
from .semantics import default_tasks
from .sim import run_program, simulate_plan

REJECTED, FAILED, USAGE = 2, 3, 4

_CONFIG_KEYS = {
    "contact_eps": float,
    "support_vel_eps": float,
    "support_margin_ratio": float,
    "grasp_hold_time": float,
    "grasp_rel_eps": float,
    "hysteresis": int,
    "candidate_limit": int,
}


def parse_config(path: str | None, overrides: list[str]) -> dict:
    """key=value settings from an optional file, then from flags.

    Later settings win, so command line overrides beat the file.
    """
    cfg: dict = {}
    pairs: list[tuple[str, str]] = []
    if path:
        for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value")
            k, v = line.split("=", 1)
            pairs.append((k.strip(), v.strip()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        k, v = item.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    for k, v in pairs:
        if k not in _CONFIG_KEYS:
            raise ConfigError(f"unknown setting {k!r}")
        try:
            cfg[k] = _CONFIG_KEYS[k](v)
        except ValueError as e:
            raise ConfigError(f"setting {k}={v!r}: {e}") from None
    return cfg


def _seg_params(cfg: dict) -> SegmentationParams:
    fields = {k: v for k, v in cfg.items() if k != "candidate_limit"}
    return replace(SegmentationParams(), **fields)


# ---------------------------------------------------------------------------
# pipeline


def run_pipeline(memory: EpisodicMemory, outdir: Path | None = None,
                 cfg: dict | None = None, figures: bool = True,
                 label: dict | None = None) -> dict:
    """Segment, interpret, refine, and simulate one episode.

    Returns a summary dict; when outdir is given, also writes the
    situation listing, timeline figure, candidate records, emitted
    programs, execution trace, and checkpoint verdicts there.
    """
    cfg = cfg or {}
    tasks = default_tasks()
    seg = segment(memory, _seg_params(cfg))
    hand = memory.world.agent_id()
    limit = cfg.get("candidate_limit", DEFAULT_CANDIDATE_LIMIT)
    res = interpret_episode(seg, hand, tasks, limit)

    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        report.write_situations(seg, outdir / "situations.json")
        if figures:
            report.render_timeline(seg, outdir / "timeline.png")

    out = {
        "rejected": res.rejected,
        "n_actions": len(seg.actions),
        "n_candidates": res.n_candidates,
        "truncated": res.truncated,
        "n_plan": 0,
        "n_task": 0,
        "candidates": [],
    }
    if res.rejected:
        if outdir is not None:
            report.write_candidates([], outdir / "candidates.json")
        return out

    best_trace = None
    records = []
    for i, cand in enumerate(res.candidates):
        rec: dict = {
            "index": i,
            "steps": [{"task": s.task, "bindings": dict(s.bindings)}
                      for s in cand],
        }
        try:
            plan = refine_candidate(cand, memory)
        except Demo2RilError as e:
            rec["refined"] = False
            rec["error"] = f"{type(e).__name__}: {e}"
            records.append(rec)
            continue
        out["n_plan"] += 1
        rec["refined"] = True
        rec["designators"] = plan.designators()
        sim = simulate_plan(plan, tasks)
        rec["status"] = sim.status
        rec["task_success"] = sim.task_success()
        rec["checkpoints"] = [
            {"task": c.task, "ok": c.ok, "unmet": c.unmet}
            for c in sim.checkpoints]
        if sim.task_success():
            out["n_task"] += 1
            if best_trace is None:
                best_trace = sim.trace
        if outdir is not None:
            progs = outdir / "programs"
            progs.mkdir(exist_ok=True)
            text = emit_program(plan.program)
            (progs / f"cand_{i:02d}.ril").write_text(text)
        records.append(rec)
    out["candidates"] = records
    if outdir is not None:
        report.write_candidates(records, outdir / "candidates.json")
        if best_trace is not None:
            report.write_trace(best_trace, outdir / "trace.jsonl")
    if label:
        out.update(label)
    return out


def _metrics_row(summary: dict, scenario: str, variant: str,
                 seed: int) -> dict:
    return {
        "scenario": scenario, "variant": variant, "seed": seed,
        "n_actions": summary["n_actions"],
        "n_candidates": summary["n_candidates"],
        "n_plan": summary["n_plan"], "n_task": summary["n_task"],
        "exec": "N/A",
    }


# ---------------------------------------------------------------------------
# subcommands


def _load_memory(path: str) -> EpisodicMemory:
    return EpisodicMemory.load(Path(path))


def cmd_scenario(args) -> int:
    bundle = build(args.name, args.variant, args.seed)
    if args.glitch is not None:
        bundle = inject_glitch(bundle, args.glitch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle.memory.save(out)
    (out / "ground_truth.json").write_text(
        json.dumps(bundle.ground_truth, indent=2) + "\n")
    print(f"wrote demo to {out}")
    return 0


def cmd_segment(args) -> int:
    cfg = parse_config(args.config, args.set)
    memory = _load_memory(args.demo)
    seg = segment(memory, _seg_params(cfg))
    for s in sorted(seg.situations,
                    key=lambda s: (s.t_start, s.kind, s.participants)):
        print(f"{s.kind}({', '.join(s.participants)}) "
              f"[{s.t_start:.2f}, {s.t_end:.2f}]")
    print("boundaries: " + ", ".join(f"{t:.2f}" for t in seg.boundaries))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_situations(seg, out / "situations.json")
        report.render_timeline(seg, out / "timeline.png")
    return 0


def cmd_interpret(args) -> int:
    cfg = parse_config(args.config, args.set)
    memory = _load_memory(args.demo)
    seg = segment(memory, _seg_params(cfg))
    res = interpret_episode(seg, memory.world.agent_id(), default_tasks(),
                            cfg.get("candidate_limit",
                                    DEFAULT_CANDIDATE_LIMIT))
    if res.rejected:
        print("rejected: an action admits no task reading")
        return REJECTED
    for r in res.readings:
        span = f"[{r.action.t_start:.2f}, {r.action.t_end:.2f}]"
        if r.idle:
            print(f"{span} idle")
        else:
            names = "; ".join(
                f"{s.task}({', '.join(f'{v}={o}' for v, o in s.bindings)})"
                for s in r.steps)
            print(f"{span} {names}")
    print(f"candidates: {res.n_candidates}"
          + (" (truncated)" if res.truncated else ""))
    return 0


def cmd_plan(args) -> int:
    cfg = parse_config(args.config, args.set)
    memory = _load_memory(args.demo)
    summary = run_pipeline(memory, Path(args.out) if args.out else None,
                           cfg, figures=not args.no_figures)
    if summary["rejected"]:
        print("rejected: an action admits no task reading")
        return REJECTED
    print(f"candidates={summary['n_candidates']} refined={summary['n_plan']} "
          f"verified={summary['n_task']}")
    for rec in summary["candidates"]:
        chain = " -> ".join(s["task"] for s in rec["steps"])
        if not rec.get("refined"):
            print(f"  [{rec['index']}] {chain}: {rec['error']}")
        else:
            mark = "verified" if rec.get("task_success") else rec["status"]
            print(f"  [{rec['index']}] {chain}: {mark}")
    if summary["n_plan"] == 0 or summary["n_task"] == 0:
        return FAILED
    return 0


def cmd_emit(args) -> int:
    cfg = parse_config(args.config, args.set)
    memory = _load_memory(args.demo)
    tasks = default_tasks()
    seg = segment(memory, _seg_params(cfg))
    res = interpret_episode(seg, memory.world.agent_id(), tasks,
                            cfg.get("candidate_limit",
                                    DEFAULT_CANDIDATE_LIMIT))
    if res.rejected:
        print("rejected: an action admits no task reading", file=sys.stderr)
        return REJECTED
    if not 0 <= args.candidate < len(res.candidates):
        print(f"candidate {args.candidate} out of range "
              f"(have {len(res.candidates)})", file=sys.stderr)
        return USAGE
    try:
        plan = refine_candidate(res.candidates[args.candidate], memory)
    except Demo2RilError as e:
        print(f"refinement failed: {e}", file=sys.stderr)
        return FAILED
    text = emit_program(plan.program)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    memory = _load_memory(args.demo)
    world = execution_world(memory)
    instructions = parse_program(Path(args.program).read_text())
    result = run_program(world, instructions)
    print(f"status: {result.status}"
          + (f" ({result.failure})" if result.failure else ""))
    if args.out:
        report.write_trace(result.trace, Path(args.out))
    return 0 if result.ok else FAILED


def cmd_pose(args) -> int:
    cloud = load_xyz(args.cloud)
    model = variant_model(args.variant)
    est = estimate_pose(cloud, model)
    payload = {
        "position": [round(float(v), 6) for v in est.transform.pos],
        "quaternion": [round(float(v), 6) for v in est.transform.quat],
        "rms": round(est.rms, 6),
        "inlier_fraction": round(est.inlier_fraction, 4),
        "implausible": est.implausible,
    }
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_pipeline(args) -> int:
    cfg = parse_config(args.config, args.set)
    memory = _load_memory(args.demo)
    out = Path(args.out)
    summary = run_pipeline(memory, out, cfg, figures=not args.no_figures)
    row = _metrics_row(summary, Path(args.demo).name, "-", 0)
    (out / "summary.txt").write_text(
        report.summarize([row], ["demo"] if summary["rejected"] else []))
    if summary["rejected"]:
        print("rejected: an action admits no task reading")
        return REJECTED
    print(f"candidates={summary['n_candidates']} refined={summary['n_plan']} "
          f"verified={summary['n_task']}  ->  {out}")
    return 0 if summary["n_task"] >= 1 else FAILED


def cmd_batch(args) -> int:
    cfg = parse_config(args.config, args.set)
    scenarios = args.scenarios.split(",") if args.scenarios else \
        sorted(SCENARIOS)
    variants = args.variants.split(",") if args.variants else \
        sorted(VARIANTS)
    for s in scenarios:
        if s not in SCENARIOS:
            print(f"unknown scenario {s!r}", file=sys.stderr)
            return USAGE
    for v in variants:
        if v not in VARIANTS:
            print(f"unknown variant {v!r}", file=sys.stderr)
            return USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    rejected = []
    for name in scenarios:
        for variant in variants:
            for seed in range(args.seeds):
                demo_id = f"{name}_{variant}_{seed:02d}"
                bundle = build(name, variant, seed)
                summary = run_pipeline(
                    bundle.memory, out / demo_id, cfg,
                    figures=not args.no_figures)
                if summary["rejected"]:
                    rejected.append(demo_id)
                else:
                    rows.append(_metrics_row(summary, name, variant, seed))
                print(f"{demo_id}: "
                      + ("rejected" if summary["rejected"] else
                         f"candidates={summary['n_candidates']} "
                         f"refined={summary['n_plan']} "
                         f"verified={summary['n_task']}"))
    report.write_metrics_csv(rows, out / "metrics.csv")
    if not args.no_figures:
        report.render_metrics(rows, out / "metrics.png")
    (out / "summary.txt").write_text(report.summarize(rows, rejected))
    sys.stdout.write(report.summarize(rows, rejected))
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _add_config_flags(p) -> None:
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                   help="override one setting (repeatable; beats --config)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="demo2ril",
        description="Turn recorded manipulation episodes into robot "
                    "instruction programs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", help="generate a scripted demo episode")
    p.add_argument("--name", required=True, choices=sorted(SCENARIOS))
    p.add_argument("--variant", default="O1", choices=sorted(VARIANTS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--glitch", type=float, default=None,
                   help="inject a tracking dropout at this time")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_scenario)

    p = sub.add_parser("segment", help="detect situations in a demo")
    p.add_argument("--demo", required=True)
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("interpret", help="read tasks from a demo")
    p.add_argument("--demo", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_interpret)

    p = sub.add_parser("plan", help="refine all candidate readings")
    p.add_argument("--demo", required=True)
    p.add_argument("--out")
    p.add_argument("--no-figures", action="store_true")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("emit", help="print one candidate's program")
    p.add_argument("--demo", required=True)
    p.add_argument("--candidate", type=int, default=0)
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_emit)

    p = sub.add_parser("simulate", help="run a program file in the "
                                        "demo's execution world")
    p.add_argument("--demo", required=True)
    p.add_argument("--program", required=True)
    p.add_argument("--out", help="write the motion trace here")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("pose", help="fit a box model to a point cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--variant", default="O1", choices=sorted(VARIANTS))
    p.add_argument("--out")
    p.set_defaults(fn=cmd_pose)

    p = sub.add_parser("pipeline", help="demo to verified programs")
    p.add_argument("--demo", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("batch", help="evaluate a grid of demos")
    p.add_argument("--out", required=True)
    p.add_argument("--scenarios", help="comma separated scenario names")
    p.add_argument("--variants", help="comma separated variants")
    p.add_argument("--seeds", type=int, default=10,
                   help="seeds 0..N-1 per scenario and variant")
    p.add_argument("--no-figures", action="store_true")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_batch)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return USAGE
    except FileNotFoundError as e:
        print(f"missing input: {e}", file=sys.stderr)
        return USAGE
    except Demo2RilError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
