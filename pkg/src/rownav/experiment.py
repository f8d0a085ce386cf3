"""Experiment specs and the episode grid runner.

A spec is a YAML document::

    schema_version: 1
    name: default
    seeds: [0, 1, 2]
    segmentation: {false_positive: 0.01, false_negative: 0.01}
    worlds:
      - name: StraightVineyard
        crop: CommonVineyard
        variants: [SegMin, SegMinD, SegZeros]

Optional top-level sections (``controller``, ``perception``, ``camera``,
``rates``) override library defaults for every world; each world entry may
override geometry and the depth threshold. Unknown keys are errors.
"""

from __future__ import annotations

import json
import math
import os
import shutil
import tempfile
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .controller import ControllerConfig, ema_weight_for_span
from .evaluation import EpisodeMetrics, aggregate, compute_metrics, summary_csv
from .perception import PerceptionConfig, Variant
from .sim.camera import CameraModel
from .sim.episode import EpisodeLog, NoisySegmentation, Rates, run_episode
from .sim.world import Crop, WorldConfig, generate_world, ground_truth_centerline

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "ROWNAV_OUTPUT_ROOT"

_WORLD_KEYS = {
    "name": str,
    "crop": str,
    "variants": list,
    "row_distance": float,
    "plant_distance": float,
    "plant_height": float,
    "track_length": float,
    "curvature": float,
    "terrain_roughness": float,
    "neighbor_rows": int,
    "start_lateral": float,
    "start_heading": float,
    "depth_threshold": float,
}

_SCHEMA = {
    "schema_version": int,
    "name": str,
    "seeds": list,
    "duration": float,
    "output_dir": str,
    "debug_frames": bool,
    "depth_noise": float,
    "segmentation": {"false_positive": float, "false_negative": float},
    "controller": {"v_max": float, "omega_max": float, "omega_gain": float, "ema_buffer": int},
    "perception": {"smoothing_window": int, "history": int},
    "camera": {
        "width": int,
        "height": int,
        "hfov_deg": float,
        "vfov_deg": float,
        "max_range": float,
        "mount_forward": float,
        "mount_height": float,
        "tilt_deg": float,
    },
    "rates": {"base_hz": int, "render_hz": int, "perception_hz": int, "control_hz": int},
    "worlds": [_WORLD_KEYS],
}
_REQUIRED = ("schema_version", "name", "seeds", "worlds")
_WORLD_REQUIRED = ("name", "crop", "variants")


class SpecError(ValueError):
    """Invalid experiment spec; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, source: str = "<spec>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# parsing


def _line(node) -> int:
    return node.start_mark.line + 1


def _check_scalar(node, value, kind, path, source):
    ok = {
        int: isinstance(value, int) and not isinstance(value, bool),
        float: isinstance(value, (int, float)) and not isinstance(value, bool),
        str: isinstance(value, str),
        bool: isinstance(value, bool),
    }[kind]
    if not ok:
        raise SpecError(f"{path} must be {kind.__name__}, got {value!r}", _line(node), source)
    if kind is float and not math.isfinite(float(value)):
        raise SpecError(f"{path} must be finite", _line(node), source)


def _validate(node, value, schema, path, source):
    if isinstance(schema, dict):
        if not isinstance(node, yaml.MappingNode):
            raise SpecError(f"{path or 'spec'} must be a mapping", _line(node), source)
        seen = set()
        for key_node, val_node in node.value:
            key = key_node.value
            sub = f"{path}.{key}" if path else key
            if key in seen:
                raise SpecError(f"duplicate key {sub!r}", _line(key_node), source)
            seen.add(key)
            if key not in schema:
                raise SpecError(f"unknown key {sub!r}", _line(key_node), source)
            _validate(val_node, value[key], schema[key], sub, source)
    elif isinstance(schema, list):
        if not isinstance(node, yaml.SequenceNode):
            raise SpecError(f"{path} must be a list", _line(node), source)
        for k, (item_node, item) in enumerate(zip(node.value, value)):
            _validate(item_node, item, schema[0], f"{path}[{k}]", source)
    elif schema is list:
        if not isinstance(node, yaml.SequenceNode):
            raise SpecError(f"{path} must be a list", _line(node), source)
    else:
        _check_scalar(node, value, schema, path, source)


def _find(node, *path):
    """Sub-node at ``path`` (keys and indices) for error locations."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == key), node)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
    return node


@dataclass(frozen=True)
class WorldEntry:
    name: str
    world: WorldConfig
    variants: tuple
    depth_threshold: float


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    seeds: tuple
    worlds: tuple  # of WorldEntry
    duration: float = 120.0
    controller: ControllerConfig = ControllerConfig()
    smoothing_window: int = 15
    history: int = 3
    camera: CameraModel = CameraModel()
    rates: Rates = Rates()
    false_positive: float = 0.0
    false_negative: float = 0.0
    depth_noise: float = 0.0
    output_dir: Optional[str] = None
    debug_frames: bool = False
    raw: dict = field(default_factory=dict, compare=False)

    def episodes(self):
        """Every (world entry, variant, seed) triple in a stable order."""
        for entry in self.worlds:
            for variant in entry.variants:
                for seed in self.seeds:
                    yield entry, variant, seed

    def perception(self, entry: WorldEntry, variant: Variant) -> PerceptionConfig:
        return PerceptionConfig(entry.depth_threshold, self.smoothing_window, self.history, variant)


def parse_spec(text: str, source: str = "<spec>") -> ExperimentSpec:
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            data = loader.construct_document(node) if node is not None else None
        finally:
            loader.dispose()
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecError(f"malformed YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None, source)
    if node is None:
        raise SpecError("empty spec", 1, source)

    _validate(node, data, _SCHEMA, "", source)
    for key in _REQUIRED:
        if key not in data:
            raise SpecError(f"missing required key {key!r}", _line(node), source)
    if data["schema_version"] != SCHEMA_VERSION:
        raise SpecError(
            f"unsupported schema_version {data['schema_version']} (expected {SCHEMA_VERSION})",
            _line(_find(node, "schema_version")),
            source,
        )

    def fail(msg, *path):
        raise SpecError(msg, _line(_find(node, *path)), source)

    seeds = data["seeds"]
    if not seeds:
        fail("seeds must not be empty", "seeds")
    for k, s in enumerate(seeds):
        if not isinstance(s, int) or isinstance(s, bool) or s < 0:
            fail(f"seeds[{k}] must be a non-negative integer, got {s!r}", "seeds", k)
    if len(set(seeds)) != len(seeds):
        fail("seeds must be distinct", "seeds")

    try:
        ctl = data.get("controller", {})
        controller = ControllerConfig(
            v_max=float(ctl.get("v_max", 0.5)),
            omega_max=float(ctl.get("omega_max", 1.0)),
            omega_gain=float(ctl.get("omega_gain", 0.01)),
            ema_weight=ema_weight_for_span(ctl.get("ema_buffer", 3)),
        )
    except ValueError as exc:
        fail(str(exc), "controller")
    try:
        camera = CameraModel(**{k: v for k, v in data.get("camera", {}).items()})
    except ValueError as exc:
        fail(str(exc), "camera")
    try:
        rates = Rates(**data.get("rates", {}))
    except ValueError as exc:
        fail(str(exc), "rates")
    if camera.width != controller.frame_width:
        controller = replace(controller, frame_width=camera.width)
    perc = data.get("perception", {})
    seg = data.get("segmentation", {})
    for key in ("false_positive", "false_negative"):
        if not 0.0 <= seg.get(key, 0.0) <= 1.0:
            fail(f"segmentation.{key} must be in [0, 1]", "segmentation", key)
    duration = float(data.get("duration", 120.0))
    if not duration >= 0:
        fail("duration must be >= 0", "duration")
    if data.get("depth_noise", 0.0) < 0:
        fail("depth_noise must be >= 0", "depth_noise")

    worlds = []
    names = set()
    if not data["worlds"]:
        fail("worlds must not be empty", "worlds")
    for k, w in enumerate(data["worlds"]):
        for key in _WORLD_REQUIRED:
            if key not in w:
                fail(f"worlds[{k}] is missing required key {key!r}", "worlds", k)
        if w["name"] in names:
            fail(f"duplicate world name {w['name']!r}", "worlds", k, "name")
        names.add(w["name"])
        if not w["variants"]:
            fail(f"worlds[{k}].variants must not be empty", "worlds", k, "variants")
        variants = []
        for j, v in enumerate(w["variants"]):
            try:
                variants.append(Variant(v))
            except ValueError:
                fail(f"unknown variant {v!r} (expected one of {[x.value for x in Variant]})", "worlds", k, "variants", j)
        if len(set(variants)) != len(variants):
            fail("variants must be distinct", "worlds", k, "variants")
        try:
            crop = Crop(w["crop"])
        except ValueError:
            fail(f"unknown crop {w['crop']!r} (expected one of {[c.value for c in Crop]})", "worlds", k, "crop")
        geometry = {key: w[key] for key in _WORLD_KEYS if key in w and key not in ("name", "crop", "variants", "depth_threshold")}
        try:
            wc = WorldConfig(crop=crop, **geometry)
            d_th = float(w.get("depth_threshold", wc.depth_threshold))
            PerceptionConfig(d_th, perc.get("smoothing_window", 15), perc.get("history", 3))
        except ValueError as exc:
            fail(str(exc), "worlds", k)
        worlds.append(WorldEntry(w["name"], wc, tuple(variants), d_th))

    return ExperimentSpec(
        name=data["name"],
        seeds=tuple(seeds),
        worlds=tuple(worlds),
        duration=duration,
        controller=controller,
        smoothing_window=perc.get("smoothing_window", 15),
        history=perc.get("history", 3),
        camera=camera,
        rates=rates,
        false_positive=float(seg.get("false_positive", 0.0)),
        false_negative=float(seg.get("false_negative", 0.0)),
        depth_noise=float(data.get("depth_noise", 0.0)),
        output_dir=data.get("output_dir"),
        debug_frames=bool(data.get("debug_frames", False)),
        raw=data,
    )


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc.strerror}", None, str(path))
    return parse_spec(text, str(path))


# ---------------------------------------------------------------------------
# seeding


@dataclass(frozen=True)
class EpisodeSeeds:
    world: int
    segmentation: int
    depth: int


def episode_seeds(world_name: str, seed: int) -> EpisodeSeeds:
    """Independent streams for one repetition of one world.

    Keyed on the world name and the repetition seed only, so every variant of
    a repetition drives through the same field and sees the same noise, and
    adding worlds or variants leaves other episodes untouched.
    """
    root = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(world_name.encode()),))
    streams = [int(child.generate_state(1, np.uint32)[0]) for child in root.spawn(3)]
    return EpisodeSeeds(*streams)


# ---------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class EpisodeResult:
    world: str
    variant: str
    seed: int
    metrics: EpisodeMetrics
    reason: str
    directory: Optional[str] = None


def _episode_config(spec: ExperimentSpec, entry: WorldEntry, variant: Variant, seed: int, seeds: EpisodeSeeds) -> dict:
    world = asdict(entry.world)
    world["crop"] = entry.world.crop.value
    world["jitter_seed"] = seeds.world
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": spec.name,
        "world_name": entry.name,
        "variant": Variant(variant).value,
        "seed": seed,
        "streams": asdict(seeds),
        "world": world,
        "perception": {**asdict(spec.perception(entry, variant)), "variant": Variant(variant).value},
        "controller": asdict(spec.controller),
        "camera": asdict(spec.camera),
        "rates": asdict(spec.rates),
        "segmentation": {"false_positive": spec.false_positive, "false_negative": spec.false_negative},
        "depth_noise": spec.depth_noise,
        "duration": spec.duration,
    }


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def episode_dirname(world: str, variant, seed: int) -> str:
    return f"{world}/{Variant(variant).value}/seed{seed}"


def run_one(spec: ExperimentSpec, entry: WorldEntry, variant, seed: int, out_dir: Optional[Path] = None) -> EpisodeResult:
    """Run a single episode and, when ``out_dir`` is given, write its artifacts.

    The episode directory is assembled under a temporary name and renamed
    into place, so a directory either holds a full set of files or none.
    """
    variant = Variant(variant)
    seeds = episode_seeds(entry.name, seed)
    world = generate_world(replace(entry.world, jitter_seed=seeds.world))
    mask_source = NoisySegmentation(spec.false_positive, spec.false_negative, seeds.segmentation)

    final = tmp = None
    if out_dir is not None:
        final = Path(out_dir) / episode_dirname(entry.name, variant, seed)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(dir=final.parent, prefix=f".{final.name}."))

    try:
        log = run_episode(
            world,
            spec.perception(entry, variant),
            spec.controller,
            rates=spec.rates,
            camera=spec.camera,
            duration=spec.duration,
            mask_source=mask_source,
            depth_noise=spec.depth_noise,
            seed=seeds.depth,
            debug_dir=(tmp / "frames") if (tmp is not None and spec.debug_frames) else None,
        )
        metrics = compute_metrics(log, ground_truth_centerline(world))
        if tmp is not None:
            (tmp / "config.json").write_text(_dump(_episode_config(spec, entry, variant, seed, seeds)))
            log.write_csv(tmp / "log.csv")
            (tmp / "episode.json").write_text(_dump({**log.summary(), "metrics": metrics.as_dict()}))
            if final.exists():
                shutil.rmtree(final)
            os.replace(tmp, final)
    except BaseException:
        if tmp is not None:
            shutil.rmtree(tmp, ignore_errors=True)
        raise
    return EpisodeResult(entry.name, variant.value, seed, metrics, log.reason, str(final) if final else None)


def _run_packed(args):
    return run_one(*args)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    episodes: list
    summary: str
    output_dir: Optional[Path] = None

    @property
    def all_completed(self) -> bool:
        return all(e.metrics.completed for e in self.episodes)


def output_directory(spec: ExperimentSpec, override=None) -> Path:
    if override is not None:
        return Path(override)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "results"))
    return root / (spec.output_dir or spec.name)


def summarize(spec: ExperimentSpec, episodes) -> str:
    rows = []
    for entry in spec.worlds:
        for variant in entry.variants:
            runs = [e.metrics for e in episodes if e.world == entry.name and e.variant == Variant(variant).value]
            if runs:
                rows.append((entry.name, Variant(variant).value, aggregate(runs)))
    return summary_csv(rows)


def run_experiment(spec: ExperimentSpec, out_dir=None, jobs: int = 1, write: bool = True, progress=None) -> ExperimentResult:
    """Run the full grid; results come back in spec order regardless of ``jobs``."""
    out = output_directory(spec, out_dir) if write else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    tasks = [(spec, entry, variant, seed, out) for entry, variant, seed in spec.episodes()]
    episodes = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_run_packed, tasks):
                episodes.append(res)
                if progress:
                    progress(res)
    else:
        for t in tasks:
            res = _run_packed(t)
            episodes.append(res)
            if progress:
                progress(res)

    summary = summarize(spec, episodes)
    if out is not None:
        _write_atomic(out / "summary.csv", summary)
        runs = [
            {"world": e.world, "variant": e.variant, "seed": e.seed, "reason": e.reason, **e.metrics.as_dict()}
            for e in episodes
        ]
        _write_atomic(out / "runs.json", _dump(runs))
    return ExperimentResult(spec, episodes, summary, out)


def read_episode(directory) -> tuple[dict, EpisodeLog, dict]:
    """Load ``config.json``, ``log.csv`` and ``episode.json`` from an episode directory."""
    d = Path(directory)
    config = json.loads((d / "config.json").read_text())
    info = json.loads((d / "episode.json").read_text())
    fields_ = {k: info[k] for k in ("completed", "end_time", "reason", "renders", "perceptions", "controls")}
    return config, EpisodeLog.read_csv(d / "log.csv", **fields_), info

