"""``rownav`` command line.

Exit codes: 0 success, 1 a run or check failed, 2 bad input (spec, fixtures,
arguments).
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__, pgm
from .bench import PERCEIVE_BUDGET_MS, bench_csv, over_budget, run_bench
from .experiment import SpecError, load_spec, parse_spec, run_experiment
from .oracle import compare_pipeline
from .perception import PerceptionConfig, PerceptionError
from .sim.world import Crop, WorldConfig, WorldError, generate_world, ground_truth_centerline

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def builtin_specs() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("rownav").joinpath("specs").iterdir() if p.name.endswith(".yaml"))


def _resolve_spec(arg: str):
    path = Path(arg)
    if path.exists() or arg not in builtin_specs():
        return load_spec(path)
    text = resources.files("rownav").joinpath("specs", f"{arg}.yaml").read_text()
    return parse_spec(text, f"<builtin:{arg}>")


def cmd_run(args) -> int:
    try:
        spec = _resolve_spec(args.spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.debug_frames:
        spec = replace(spec, debug_frames=True)

    n = sum(1 for _ in spec.episodes())

    def progress(res):
        if not args.quiet:
            m = res.metrics
            print(
                f"{res.world:<18} {res.variant:<9} seed={res.seed:<3} {res.reason:<9} "
                f"T={m.clearance_time:7.2f}s mae={m.mae:.3f} m",
                file=sys.stderr,
            )

    if not args.quiet:
        print(f"running {n} episodes from spec {spec.name!r}", file=sys.stderr)
    result = run_experiment(spec, out_dir=args.out, jobs=args.jobs, progress=progress)
    sys.stdout.write(result.summary)
    if not args.quiet:
        print(f"artifacts in {result.output_dir}", file=sys.stderr)
    failed = [e for e in result.episodes if not e.metrics.completed]
    for e in failed:
        print(f"failed: {e.world}/{e.variant}/seed{e.seed} ({e.reason})", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_FAIL


_MASK_RE = re.compile(r"^(?P<stem>.+)_mask(?P<k>\d*)\.pgm$")


class FixtureError(ValueError):
    pass


def load_fixtures(directory) -> list[tuple[str, list, object, PerceptionConfig]]:
    """Fixture cases in ``directory``.

    A case is ``<stem>_depth.pgm`` plus one or more ``<stem>_mask<k>.pgm``
    (buffer order by ``k``, oldest first) and an optional ``<stem>.json``
    with ``depth_threshold``, ``smoothing_window`` and ``history``.
    """
    d = Path(directory)
    if not d.is_dir():
        raise FixtureError(f"{d}: not a directory")
    masks: dict[str, list] = {}
    for p in d.iterdir():
        m = _MASK_RE.match(p.name)
        if m:
            masks.setdefault(m["stem"], []).append((int(m["k"] or 0), p))
    stems = sorted({p.name[: -len("_depth.pgm")] for p in d.glob("*_depth.pgm")} | set(masks))
    if not stems:
        raise FixtureError(f"{d}: no fixtures found")

    cases = []
    for stem in stems:
        depth_path = d / f"{stem}_depth.pgm"
        if not depth_path.exists():
            raise FixtureError(f"{stem}: missing {depth_path.name}")
        if stem not in masks:
            raise FixtureError(f"{stem}: no mask files")
        params = {}
        meta = d / f"{stem}.json"
        if meta.exists():
            try:
                params = json.loads(meta.read_text())
                if not isinstance(params, dict):
                    raise ValueError("expected an object")
                cfg = PerceptionConfig(**params)
            except (ValueError, TypeError) as exc:
                raise FixtureError(f"{meta.name}: {exc}") from exc
        else:
            cfg = PerceptionConfig()
        try:
            depth = pgm.read_depth(depth_path)
            stack = [pgm.read_mask(p) for _, p in sorted(masks[stem])]
        except pgm.PGMError as exc:
            raise FixtureError(str(exc)) from exc
        for (_, p), m in zip(sorted(masks[stem]), stack):
            if m.shape != depth.shape:
                raise FixtureError(f"{p.name}: shape {m.shape} does not match depth {depth.shape}")
        cases.append((stem, stack[-cfg.history:], depth, cfg))
    return cases


def cmd_oracle(args) -> int:
    try:
        cases = load_fixtures(args.dir)
    except (FixtureError, PerceptionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    bad = 0
    for stem, stack, depth, cfg in cases:
        report = compare_pipeline(stack, depth, cfg, tol=args.tol)
        if report.ok:
            print(f"ok      {stem}")
        else:
            bad += 1
            first = report.first
            print(f"MISMATCH {stem}: first differing stage {first.stage} ({first.detail})")
    print(f"{len(cases) - bad}/{len(cases)} fixtures match")
    return EXIT_OK if bad == 0 else EXIT_FAIL


def cmd_bench(args) -> int:
    results = run_bench(frames=args.frames, crop=Crop(args.crop), seed=args.seed)
    text = bench_csv(results)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    slow = over_budget(results, args.budget_ms)
    for r in slow:
        print(f"over budget: {r.stage} p99 {r.p99_ms:.2f} ms > {args.budget_ms} ms", file=sys.stderr)
    return EXIT_OK if not slow else EXIT_FAIL


def cmd_gen_world(args) -> int:
    try:
        cfg = WorldConfig(crop=Crop(args.crop), jitter_seed=args.seed, curvature=args.curvature, track_length=args.track_length)
    except (WorldError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    world = generate_world(cfg)
    data = world.to_dict()
    data["centerline"] = ground_truth_centerline(world).tolist()
    text = json.dumps(data, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"{len(world.primitives)} primitives written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rownav", description="Crop-row following: simulation, perception oracle, benchmarks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every episode of an experiment spec")
    r.add_argument("spec", help=f"YAML spec path or a built-in name ({', '.join(builtin_specs())})")
    r.add_argument("--out", help="output directory (default: $ROWNAV_OUTPUT_ROOT/<spec name>)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.add_argument("--debug-frames", action="store_true", help="dump per-frame mask/depth PGMs")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="check PGM fixtures against the brute-force pipeline")
    o.add_argument("dir")
    o.add_argument("--tol", type=float, default=1e-9)
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bench", help="per-stage latency report (CSV)")
    b.add_argument("--frames", type=int, default=200)
    b.add_argument("--crop", default=Crop.COMMON_VINEYARD.value, choices=[c.value for c in Crop])
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--budget-ms", type=float, default=PERCEIVE_BUDGET_MS)
    b.add_argument("--out", help="also write the CSV here")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("gen-world", help="generate a world and print it as JSON")
    g.add_argument("crop", choices=[c.value for c in Crop])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--curvature", type=float, default=0.0)
    g.add_argument("--track-length", type=float, default=20.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_world)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "frames", 1) < 1:
        print("error: --frames must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
