"""Command-line entry point: ``collab-assembly <subcommand> ...``.

Exit codes: 0 success, 1 planning (or trace validation) failure, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from .assembly import BoardTrace, PlanTrace, jsonable, load_trace, run_assembly, validate_trace
from .comfort import rank_goal_poses, sample_goal_poses
from .errors import ForceBudgetExceeded, PlanningError, SceneError
from .handover import build_handover_plan
from .records import pose_to_record
from .scene_io import load_scene, settings_to_record
from .se3 import rotation_distance
from .slip import plate_geometry, relaxation_limit

EXIT_OK, EXIT_PLANNING, EXIT_INPUT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage already; keep the message on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _overrides(p):
    p.add_argument("--seed", type=int, help="random seed (default: the scene's)")
    p.add_argument("--budget-s", type=float, help="planner time budget per query, seconds")
    p.add_argument("--comfort-threshold", type=float, help="minimum comfort score for handover poses")
    p.add_argument("--grip-force", type=float, help="robot grip force P, newtons")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="collab-assembly",
                     description="Slip-aware handover planning for collaborative board assembly.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("plan", help="plan the full assembly and write a trace")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True, help="trace file to write (JSON)")
    _overrides(p)

    p = sub.add_parser("plan-board", help="plan the handover of a single board")
    p.add_argument("--scene", required=True)
    p.add_argument("--board", required=True)
    p.add_argument("--isolated", action="store_true",
                   help="ignore the boards before it in the sequence (default: treat them as assembled)")
    p.add_argument("--out", help="trace file to write (JSON)")
    _overrides(p)

    p = sub.add_parser("slip-analyze", help="gravity torque curve and relaxation limit of an edge grasp")
    p.add_argument("--scene", required=True)
    p.add_argument("--board", required=True)
    p.add_argument("--grasp-axis", required=True, choices=("longitudinal", "transverse"))
    p.add_argument("--json", action="store_true", help="print the analysis record instead of a table")
    _overrides(p)

    p = sub.add_parser("comfort-map", help="human comfort scores of sampled handover poses")
    p.add_argument("--scene", required=True)
    p.add_argument("--board", required=True)
    p.add_argument("--pose-samples", type=int, default=50)
    p.add_argument("--json", action="store_true")
    _overrides(p)

    p = sub.add_parser("sample-goals", help="sample board poses near the assembly pose")
    p.add_argument("--scene", required=True)
    p.add_argument("--board", required=True)
    p.add_argument("-n", type=int, default=20)
    p.add_argument("--json", action="store_true")
    _overrides(p)

    p = sub.add_parser("validate", help="re-check a plan trace against its scene")
    p.add_argument("--trace", required=True)
    p.add_argument("--scene", required=True)
    return parser


def _scene(args):
    scene = load_scene(args.scene)
    ov = {k: getattr(args, k, None) for k in ("seed", "budget_s", "comfort_threshold")}
    scene.settings = scene.settings.with_overrides(**ov)
    if getattr(args, "grip_force", None) is not None:
        if not args.grip_force > 0:
            raise SceneError("--grip-force must be positive")
        scene.robot.grip_force = float(args.grip_force)
    if getattr(args, "budget_s", None) is not None and not args.budget_s > 0:
        raise SceneError("--budget-s must be positive")
    return scene


def _board_line(bt: BoardTrace) -> str:
    d = bt.diagnostics
    if bt.status != "ok":
        return f"{bt.board:<16} FAILED  {bt.error['type']}: {bt.error['message']}"
    lim = np.degrees(d["slip"].relaxation_limit) if "slip" in d else float("nan")
    return (f"{bt.board:<16} ok  {bt.elapsed_s:6.1f}s  |S|={d.get('S')} |SS|={d.get('SS')} "
            f"chosen={d.get('chosen')} comfort={d.get('comfort', 0):.3f} limit={lim:.1f}deg "
            f"rejected={d.get('rejected')}")


def cmd_plan(args) -> int:
    scene = _scene(args)
    t0 = time.perf_counter()
    trace = run_assembly(scene, scene.settings.seed, on_board=lambda bt: print(_board_line(bt), flush=True))
    trace.save(args.out)
    counts = ", ".join(f"{v} {k}" for k, v in trace.step_counts().items())
    print(f"{'complete' if trace.complete else 'incomplete'}: {counts} "
          f"in {time.perf_counter() - t0:.1f}s -> {args.out}")
    return EXIT_OK if trace.complete else EXIT_PLANNING


def cmd_plan_board(args) -> int:
    scene = _scene(args)
    board = scene.board(args.board)
    if not args.isolated:
        for bid in scene.sequence[:scene.sequence.index(board.id)]:
            scene.finished.append((scene.board(bid), scene.assembly_poses[bid]))
    t0 = time.perf_counter()
    try:
        res = build_handover_plan(board, scene.initial_poses[board.id], scene.assembly_poses[board.id],
                                  scene, scene.settings.seed)
        bt = BoardTrace(board.id, "ok", res.steps, res.diagnostics, None, time.perf_counter() - t0)
    except PlanningError as exc:
        bt = BoardTrace(board.id, "failed", [], getattr(exc, "diagnostics", {}),
                        {"type": type(exc).__name__, "message": str(exc)}, time.perf_counter() - t0)
    print(_board_line(bt))
    for s in bt.steps:
        extra = f" ({len(s.plan.waypoints)} waypoints, {s.plan.times[-1]:.1f}s)" if s.plan is not None else ""
        print(f"  {s.kind:<22} {s.actor}{extra}")
    if args.out:
        # a lone board only replays against the scene if nothing came before it
        trace = PlanTrace(scene.name, scene.settings.seed, settings_to_record(scene.settings),
                          [board.id], [bt])
        trace.save(args.out)
    return EXIT_OK if bt.status == "ok" else EXIT_PLANNING


def cmd_slip_analyze(args) -> int:
    scene = _scene(args)
    board = scene.board(args.board)
    robot = scene.robot
    arm = robot.arm(robot.receiving_arm)
    # edge grasp at the middle of the long edge (transverse) or of the short edge (longitudinal)
    contact = (0.0, board.width / 2.0) if args.grasp_axis == "transverse" else (board.length / 2.0, 0.0)
    geom = plate_geometry(board.length, board.width, board.mass, contact, arm.effector.ee_length)
    try:
        res = relaxation_limit(geom, robot.pads, robot.grip_force)
    except ForceBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    if args.json:
        rec = {"board": board.id, "grasp_axis": args.grasp_axis, "grip_force": robot.grip_force,
               "com_offset": geom.com_offset, **res.to_record()}
        print(json.dumps(rec, indent=1))
        return EXIT_OK
    lim = np.degrees(res.relaxation_limit)
    print(f"board {board.id} ({board.kind or 'board'}), {args.grasp_axis} grasp, "
          f"com offset {geom.com_offset:.4f} m, P = {robot.grip_force:.4g} N")
    print(f"{'theta_deg':>9} {'T_g_Nm':>10} {'budget_Nm':>10} {'limit_deg':>9}")
    for t, tg, budget in res.torque_curve:
        print(f"{np.degrees(t):9.1f} {tg:10.5f} {budget:10.5f} {lim:9.2f}")
    print(f"relaxation limit: {lim:.2f} deg" + (" (unconstrained)" if lim >= 90 - 1e-9 else ""))
    return EXIT_OK


def _sample(scene, board, n):
    st = scene.settings
    return sample_goal_poses(board, scene.assembly_poses[board.id], scene.placement_obstacles(board.id),
                             n, st.seed, st.max_rot, st.max_trans)


def cmd_sample_goals(args) -> int:
    if args.n <= 0:
        raise SceneError("-n must be positive")
    scene = _scene(args)
    board = scene.board(args.board)
    samples = _sample(scene, board, args.n)
    goal = scene.assembly_poses[board.id]
    if args.json:
        print(json.dumps({"board": board.id, "attempts": samples.attempts, "rejected": samples.rejected,
                          "poses": [pose_to_record(p) for p in samples]}, indent=1))
        return EXIT_OK
    print(f"{'i':>4} {'x':>8} {'y':>8} {'z':>8} {'dp_m':>7} {'drot_deg':>8}")
    for i, p in enumerate(samples):
        print(f"{i:4d} {p.p[0]:8.4f} {p.p[1]:8.4f} {p.p[2]:8.4f} {np.linalg.norm(p.p - goal.p):7.4f} "
              f"{np.degrees(rotation_distance(p.R, goal.R)):8.2f}")
    print(f"{len(samples)} accepted, {samples.rejected} rejected")
    return EXIT_OK


def cmd_comfort_map(args) -> int:
    if args.pose_samples <= 0:
        raise SceneError("--pose-samples must be positive")
    scene = _scene(args)
    board = scene.board(args.board)
    samples = _sample(scene, board, args.pose_samples)
    ranked = {c.index: c for c in rank_goal_poses(board, list(samples), scene.human,
                                                   scene.human_obstacles(),
                                                   scene.settings.human_grasp_spacing)}
    thr = scene.settings.comfort_threshold
    rows = []
    for i, p in enumerate(samples):
        c = ranked.get(i)
        rows.append({"index": i, "pose": pose_to_record(p),
                     "best": c.best_score.value if c else None,
                     "hand": c.best_score.grasp.owner if c else None,
                     "grasps": len(c.all_scores) if c else 0,
                     "comfortable": bool(c and c.best_score.value > thr)})
    if args.json:
        print(json.dumps(jsonable({"board": board.id, "threshold": thr, "poses": rows}), indent=1))
        return EXIT_OK
    print(f"{'i':>4} {'x':>8} {'y':>8} {'z':>8} {'grasps':>6} {'best_Q':>8} {'hand':<11} S")
    for r, p in zip(rows, samples):
        best = f"{r['best']:8.4f}" if r["best"] is not None else f"{'-':>8}"
        print(f"{r['index']:4d} {p.p[0]:8.4f} {p.p[1]:8.4f} {p.p[2]:8.4f} {r['grasps']:6d} {best} "
              f"{r['hand'] or '-':<11} {'*' if r['comfortable'] else ''}")
    print(f"{sum(r['comfortable'] for r in rows)} of {len(rows)} poses above the threshold {thr}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scene = load_scene(args.scene)
    rec = load_trace(args.trace)
    check = validate_trace(rec, scene)
    for b in check.boards:
        print(f"{b.board:<16} {'ok' if b.ok else 'INVALID'}"
              + (f"  {b.report['checked']} states checked" if b.report else "")
              + "".join(f"\n  - {p}" for p in b.problems))
    for p in check.problems:
        print(f"trace: {p}")
    complete = bool(rec.get("complete"))
    print(f"{'valid' if check.ok else 'invalid'} trace, {len(check.boards)} boards"
          + ("" if complete else " (planning stopped early)"))
    return EXIT_OK if check.ok else EXIT_PLANNING


COMMANDS = {"plan": cmd_plan, "plan-board": cmd_plan_board, "slip-analyze": cmd_slip_analyze,
            "comfort-map": cmd_comfort_map, "sample-goals": cmd_sample_goals, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SceneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PlanningError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
