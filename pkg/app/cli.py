"""Command-line entry point: ``python -m app <subcommand>``.

Exit codes: 0 success, 1 computation error, 2 usage or I/O error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from app.config import settings
from app.errors import ImageFormatError, StereoAvoidError

logger = logging.getLogger("cli")


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2))


def _match_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--rig", type=Path, help="camera rig JSON (default: settings)")
    p.add_argument("--params", type=Path, help="MatchParams JSON; flags below override it")
    p.add_argument("--window", type=int, help="SAD window radius in px")
    p.add_argument("--max-disp", type=int, help="largest disparity searched")
    p.add_argument("--uniqueness", type=float, help="uniqueness ratio in [0, 1)")
    p.add_argument("--lr-check", type=int, nargs="?", const=1, metavar="PX",
                   help="enable the left-right check; tolerance defaults to 1 px")
    p.add_argument("--lut", type=Path, help="depth LUT CSV (computed_m,true_m)")
    p.add_argument("--workers", type=int, help="worker threads")
    return p


def _pair_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("left", type=Path, help="left PGM, or a side-by-side PGM when RIGHT is omitted")
    p.add_argument("right", type=Path, nargs="?", help="right PGM")


def _run_config(args, **extra):
    from app.pipeline import RunConfig

    fields = dict(
        rig_path=args.rig,
        lut_path=args.lut,
        window_radius_px=args.window,
        max_disparity_px=args.max_disp,
        uniqueness_ratio=args.uniqueness,
        lr_consistency_px=args.lr_check,
        workers=args.workers,
    )
    if args.params is not None:
        from app.stereo.disparity import MatchParams

        base = MatchParams.model_validate_json(args.params.read_text(encoding="utf-8"))
        for key, value in base.model_dump().items():
            if fields.get(key) is None:
                fields[key] = value
    return RunConfig(**fields, **extra)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_depth(args) -> int:
    from app.pipeline import write_depth_csv, write_disparity_pgm
    from app.stereo.disparity import DepthMap, block_match, disparity_to_depth
    from app.stereo.images import load_pair
    from app.stereo.refine import refine_map

    cfg = _run_config(args)
    rig, params, lut = cfg.rig(), cfg.match_params(), cfg.lut()
    pair = load_pair(args.left, args.right, rig)
    disparity = block_match(pair, params, workers=cfg.workers)
    depth = DepthMap(values=refine_map(lut, disparity_to_depth(disparity, rig).values))

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_disparity_pgm(out / "disparity.pgm", disparity, args.scale)
    write_depth_csv(out / "depth.csv", depth)
    _print_json({
        "width_px": depth.width_px,
        "height_px": depth.height_px,
        "valid_fraction": float(depth.valid_mask().mean()),
        "disparity_pgm": str(out / "disparity.pgm"),
        "depth_csv": str(out / "depth.csv"),
    })
    return 0


def cmd_regions(args) -> int:
    from app.pipeline import read_depth_csv
    from app.stereo.disparity import fused_pipeline
    from app.stereo.images import load_pair
    from app.stereo.regions import region_min_depths

    cfg = _run_config(args)
    rig = cfg.rig()
    if args.depth_csv is not None:
        depth = read_depth_csv(args.depth_csv)
        grid = settings.grid(depth.width_px, depth.height_px, rig.focal_px)
        depths = region_min_depths(depth, grid)
    else:
        if args.left is None:
            raise StereoAvoidError("regions needs an image pair or --depth-csv")
        grid = settings.grid(rig.width_px, rig.height_px, rig.focal_px)
        pair = load_pair(args.left, args.right, rig)
        _, depths = fused_pipeline(pair, cfg.match_params(), grid, cfg.lut(), workers=cfg.workers)
    out = {"depths": depths.as_dict()}
    if args.grid:
        out["grid"] = {name: list(r) for name, r in grid.rectangles().items()}
    _print_json(out)
    return 0


def _depths_from_args(args):
    from app.stereo.regions import REGION_NAMES, RegionDepths

    values = {}
    if args.json:
        text = Path(args.json).read_text(encoding="utf-8") if Path(args.json).is_file() else args.json
        values.update(json.loads(text))
    for name in REGION_NAMES:
        flag = getattr(args, name)
        if flag is not None:
            values[name] = flag
    missing = [n for n in REGION_NAMES if n not in values]
    if missing:
        raise StereoAvoidError(f"missing region depths: {', '.join(missing)}")
    return RegionDepths(**values)


def cmd_steer(args) -> int:
    from app.fuzzy.controller import decide

    depths = _depths_from_args(args)
    cfg = settings.controller_config()
    if args.rules:
        cfg = cfg.model_copy(update={"rules": args.rules})
    decision = decide(depths, cfg)
    _print_json({
        "pitch": decision.command.pitch,
        "yaw": decision.command.yaw,
        "active_controller": decision.active_controller.value,
        "rule_strengths": decision.rule_strengths,
    })
    return 0


def cmd_fuzzy_eval(args) -> int:
    import csv

    from app.errors import NoActivationError
    from app.fuzzy.engine import defuzzify, infer, load_rulebase

    rb = load_rulebase(args.rulebase)
    inputs = {}
    for item in args.inputs:
        name, sep, value = item.partition("=")
        if not sep:
            raise StereoAvoidError(f"input {item!r} must look like name=value")
        inputs[name] = float(value)

    dists = infer(rb, inputs)
    crisp = {}
    for name, dist in dists.items():
        try:
            crisp[name] = defuzzify(dist, rb.defuzz)
        except NoActivationError:
            crisp[name] = None
    if args.dump is not None:
        with args.dump.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["variable", "z", "membership"])
            for name, dist in dists.items():
                for z, u in zip(dist.positions, dist.values):
                    writer.writerow([name, repr(float(z)), repr(float(u))])
    _print_json(crisp)
    return 0


def cmd_lut(args) -> int:
    from app.stereo.refine import read_lut_csv, refine, write_lut_csv

    lut = read_lut_csv(args.csv)
    out = {"entries": [list(e) for e in lut.entries]}
    if args.query:
        out["refined"] = {repr(q): refine(lut, q) for q in args.query}
    if args.out is not None:
        write_lut_csv(args.out, lut)
    _print_json(out)
    return 0


def cmd_sim(args) -> int:
    from app.sim.episode import closest_approach, run_episode
    from app.sim.scenarios import get_scenario
    from app.sim.world import VehicleState, load_scene

    speed = args.speed if args.speed is not None else settings.sim_speed_mps
    if args.scene is not None:
        scene = load_scene(args.scene)
        start = VehicleState(speed=speed)
    else:
        scenario = get_scenario(args.scenario, speed)
        scene, start = scenario.scene, scenario.start

    cfg = _run_config(args)
    rig = cfg.rig()
    if args.half_res:
        rig = rig.scaled(0.5)
    episode = settings.episode_defaults(rig=rig, match=cfg.match_params(), lut=cfg.lut())
    updates = {"controller": episode.controller.model_copy(update={"rules": args.rules})} if args.rules else {}
    for key, value in (("max_steps", args.steps), ("seed", args.seed), ("noise_stddev", args.noise),
                       ("workers", args.workers)):
        if value is not None:
            updates[key] = value
    episode = episode.model_validate({**episode.model_dump(), **updates})

    log = run_episode(scene, start, episode, frame_dir=args.frames)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    log.write_csv(out / "trajectory.csv")
    _print_json({
        "outcome": log.outcome.value,
        "steps": len(log.steps),
        "collided": log.collided,
        "closest_approach_m": closest_approach(log, scene),
        "seed": log.seed,
        "trajectory_csv": str(out / "trajectory.csv"),
    })
    return 1 if log.collided and args.fail_on_collision else 0


def cmd_bench(args) -> int:
    from app.pipeline import bench

    cfg = _run_config(args)
    counts = [int(c) for c in args.counts.split(",") if c]
    report = bench(counts, rig=cfg.rig(), params=cfg.match_params(), repeats=args.repeats)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        report.write_csv(args.out_dir / "bench.csv")
    _print_json(report.model_dump())
    return 0


def cmd_run(args) -> int:
    from app.pipeline import run_pipeline

    cfg = _run_config(args, rules=args.rules, out_dir=args.out_dir, disparity_scale=args.scale)
    result = run_pipeline(args.left, args.right, cfg)
    _print_json(result.summary())
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host or settings.host, port=args.port or settings.port)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from app.stereo.regions import REGION_NAMES

    parser = argparse.ArgumentParser(prog="stereo-avoid", description="Stereo depth to fuzzy obstacle avoidance")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    match = _match_flags()

    p = sub.add_parser("depth", parents=[match], help="disparity PGM and depth CSV from a stereo pair")
    _pair_args(p)
    p.add_argument("--scale", type=float, default=4.0, help="disparity PGM gray levels per px")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("regions", parents=[match], help="nine region minimum depths as JSON")
    p.add_argument("left", type=Path, nargs="?")
    p.add_argument("right", type=Path, nargs="?")
    p.add_argument("--depth-csv", type=Path, help="reduce an existing depth CSV instead of matching")
    p.add_argument("--grid", action="store_true", help="also print the region rectangles")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("steer", help="steering command for nine region depths")
    p.add_argument("--json", help="JSON object of depths, inline or a file path")
    for name in REGION_NAMES:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, metavar="M")
    p.add_argument("--rules", help="paper-literal, paper-corrected or a rule-base JSON path")
    p.set_defaults(func=cmd_steer)

    p = sub.add_parser("fuzzy-eval", help="run a rule-base file on crisp inputs")
    p.add_argument("rulebase", type=Path)
    p.add_argument("inputs", nargs="*", metavar="NAME=VALUE")
    p.add_argument("--dump", type=Path, help="write the output distributions as CSV")
    p.set_defaults(func=cmd_fuzzy_eval)

    p = sub.add_parser("lut", help="validate a depth LUT and optionally query it")
    p.add_argument("csv", type=Path)
    p.add_argument("--query", type=float, nargs="+", metavar="M")
    p.add_argument("--out", type=Path, help="write the validated, sorted LUT")
    p.set_defaults(func=cmd_lut)

    p = sub.add_parser("sim", parents=[match], help="closed-loop episode in a synthetic scene")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", default="doorway", help="corridor, doorway or intruder")
    src.add_argument("--scene", type=Path, help="scene JSON")
    p.add_argument("--rules")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float, help="image noise stddev")
    p.add_argument("--speed", type=float)
    p.add_argument("--half-res", action="store_true", help="render at half resolution")
    p.add_argument("--frames", type=Path, help="directory for debug PPM frames")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--fail-on-collision", action="store_true")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("bench", parents=[match], help="time the fused pass across worker counts")
    p.add_argument("--counts", default="1,4", help="comma-separated worker counts, must include 1")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out-dir", type=Path)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("run", parents=[match], help="full pipeline: depth, regions and steering")
    _pair_args(p)
    p.add_argument("--rules")
    p.add_argument("--scale", type=float, default=4.0)
    p.add_argument("--out-dir", type=Path)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="HTTP API")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (OSError, ImageFormatError, ValidationError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except StereoAvoidError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
