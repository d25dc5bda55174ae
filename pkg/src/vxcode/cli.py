"""Command-line surface: explain an instance, evaluate faithfulness, verify
the exact oracle identities, and run the marker-bias benchmark.

Run configuration is a TOML file (see README for the schema). All paths in a
config resolve against the config file's directory. Exit codes: 0 success,
1 verification failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import math
import os
import shlex
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .detector import (
    PROB_FLOOR,
    AdditiveDetector,
    BiasedDetector,
    DetectorHandle,
    TargetDetection,
    load_png,
    to_float_image,
)
from .engine import (
    MODE_DELETION,
    MODE_INSERTION,
    EngineConfig,
    EngineError,
    ExplanationTrace,
    TRACE_HEADER,
    run_explanation,
)
from .geometry import BBox, PatchGrid, candidate_patches, make_grid
from .heatmap import build_heatmap, export_raster, load_raster
from .metrics import (
    Curve,
    auc,
    energy_pointing_game,
    heatmap_rank_order,
    overall,
    perturbation_curve,
    pointing_game,
)
from .oracle import (
    MAX_PLAYERS,
    deletion_decomposition_residual,
    insertion_decomposition_residual,
    random_game,
)
from .reward import RewardSpec
from .rng import SplitMix64
from .synth import bias_scenario, scene_image
from .wire import SidecarDetector, WireProtocolError

RESIDUAL_TOLERANCE = 1e-12
SIDECAR_ENV = "VXCODE_SIDECAR"

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    """Bad usage or configuration; maps to exit code 2."""


@dataclass
class RunConfig:
    """Everything one explain/evaluate run needs, resolved and validated."""

    seed: int
    detector_kind: str
    detector_options: dict
    image_source: dict
    grid_override: tuple[int, int] | None
    target: TargetDetection
    gt_mask_path: Path | None
    reward: RewardSpec
    engine: EngineConfig
    output_dir: Path
    base_dir: Path


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"config is missing '{key}' in [{where}]")
    return table[key]


def _parse_box(values, where: str) -> BBox:
    if not isinstance(values, list) or len(values) != 4:
        raise ConfigError(f"'box' in [{where}] must be a list of four numbers")
    return BBox(*(float(v) for v in values))


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config syntax in {path}: {exc}") from exc
    base = path.parent

    seed = int(data.get("seed", 0))

    det = data.get("detector")
    if not isinstance(det, dict):
        raise ConfigError("config is missing the [detector] table")
    kind = _require(det, "kind", "detector")
    if kind not in ("additive", "biased", "sidecar"):
        raise ConfigError(f"unknown detector kind {kind!r}")

    img = data.get("image")
    if not isinstance(img, dict):
        raise ConfigError("config is missing the [image] table")
    if img.get("synthetic"):
        source = {
            "synthetic": True,
            "width": int(_require(img, "width", "image")),
            "height": int(_require(img, "height", "image")),
        }
    else:
        source = {"synthetic": False, "path": base / str(_require(img, "path", "image"))}

    tgt = data.get("target")
    if not isinstance(tgt, dict):
        raise ConfigError("config is missing the [target] table")
    target_box = _parse_box(_require(tgt, "box", "target"), "target")
    classes = int(det.get("classes", 1))
    if "probs" in tgt:
        probs = np.asarray([float(v) for v in tgt["probs"]], dtype=np.float64)
    elif "class_index" in tgt:
        idx = int(tgt["class_index"])
        if not 0 <= idx < classes:
            raise ConfigError("target class_index out of range for detector classes")
        probs = np.full(classes, PROB_FLOOR, dtype=np.float64)
        probs[idx] = 1.0
    else:
        raise ConfigError("config [target] needs either 'probs' or 'class_index'")
    target = TargetDetection(box=target_box, probs=probs)
    gt_mask = base / str(tgt["mask_path"]) if "mask_path" in tgt else None

    grid_override = None
    if "grid" in data:
        g = data["grid"]
        grid_override = (int(_require(g, "d_h", "grid")), int(_require(g, "d_w", "grid")))

    rw = data.get("reward", {"variant": "full"})
    variant = str(rw.get("variant", "full"))
    try:
        reward = RewardSpec(
            variant=variant,
            target=target,
            alpha=float(rw["alpha"]) if "alpha" in rw else None,
            class_index=int(rw["class_index"]) if "class_index" in rw else None,
            iou_gate=float(rw["iou_gate"]) if "iou_gate" in rw else None,
        )
    except ValueError as exc:
        raise ConfigError(f"bad [reward] table: {exc}") from exc

    eng = data.get("engine", {})
    try:
        engine = EngineConfig(
            mode=str(eng.get("mode", MODE_INSERTION)),
            reward=reward,
            group_size=int(eng.get("r", 1)),
            select_top=int(eng.get("L", 30)),
            gamma=float(eng.get("gamma", 0.1)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad [engine] table: {exc}") from exc

    out = data.get("output", {})
    output_dir = base / str(out.get("dir", "out"))

    return RunConfig(
        seed=seed,
        detector_kind=kind,
        detector_options=det,
        image_source=source,
        grid_override=grid_override,
        target=target,
        gt_mask_path=gt_mask,
        reward=reward,
        engine=engine,
        output_dir=output_dir,
        base_dir=base,
    )


def _build_reference(cfg: RunConfig) -> np.ndarray:
    src = cfg.image_source
    if src["synthetic"]:
        return scene_image(src["width"], src["height"], seed=cfg.seed)
    path = src["path"]
    if not path.is_file():
        raise ConfigError(f"image file not found: {path}")
    return load_png(path)


def _build_grid(cfg: RunConfig, reference: np.ndarray) -> PatchGrid:
    h, w = reference.shape[:2]
    if cfg.grid_override is not None:
        d_h, d_w = cfg.grid_override
        try:
            return PatchGrid(image_w=w, image_h=h, d_h=d_h, d_w=d_w)
        except ValueError as exc:
            raise ConfigError(f"bad [grid] table: {exc}") from exc
    try:
        return make_grid(w, h, cfg.target.box)
    except ValueError as exc:
        raise ConfigError(f"cannot size grid: {exc}") from exc


def _parse_weight_pairs(raw, grid: PatchGrid, where: str) -> dict[int, float]:
    weights: dict[int, float] = {}
    if not isinstance(raw, list):
        raise ConfigError(f"'weights' in [{where}] must be a list of [index, weight] pairs")
    for pair in raw:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"'weights' in [{where}] must be a list of [index, weight] pairs")
        idx, w = int(pair[0]), float(pair[1])
        if not 0 <= idx < grid.n:
            raise ConfigError(f"weight index {idx} outside the {grid.n}-patch grid")
        weights[idx] = w
    return weights


def _build_detector(cfg: RunConfig, reference: np.ndarray, grid: PatchGrid) -> DetectorHandle:
    det = cfg.detector_options
    classes = int(det.get("classes", 1))
    target_class = int(det.get("target_class", 0))
    box = _parse_box(det["box"], "detector") if "box" in det else cfg.target.box
    float_ref = to_float_image(reference)
    try:
        if cfg.detector_kind == "additive":
            weights = _parse_weight_pairs(_require(det, "weights", "detector"), grid, "detector")
            return AdditiveDetector(weights, box, target_class, classes, float_ref, grid)
        if cfg.detector_kind == "biased":
            weights = _parse_weight_pairs(_require(det, "weights", "detector"), grid, "detector")
            return BiasedDetector(
                weights,
                marker_patch=int(_require(det, "marker_patch", "detector")),
                marker_gain=float(_require(det, "marker_gain", "detector")),
                box=box,
                target_class=target_class,
                num_classes=classes,
                reference=float_ref,
                grid=grid,
            )
        env_cmd = os.environ.get(SIDECAR_ENV)
        if env_cmd:
            command = shlex.split(env_cmd)
        else:
            command = [str(v) for v in _require(det, "command", "detector")]
        return SidecarDetector(
            command, reference, grid, detector=str(det.get("name", "mock"))
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad [detector] table: {exc}") from exc


def cmd_explain(args) -> int:
    cfg = load_run_config(args.config)
    reference = _build_reference(cfg)
    grid = _build_grid(cfg, reference)
    detector = _build_detector(cfg, reference, grid)
    image = to_float_image(reference)
    candidates = candidate_patches(grid, cfg.target.box)

    trace = run_explanation(detector, image, grid, candidates, cfg.engine)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.txt").write_text(trace.to_text())
    heat = build_heatmap(trace)
    export_raster(heat, out / "heatmap.pgm")

    summary_lines = [
        f"mode {cfg.engine.mode}",
        f"patches {grid.n}",
        f"candidates {len(candidates)}",
        f"r {cfg.engine.group_size}",
        f"L {cfg.engine.select_top}",
        f"gamma {cfg.engine.gamma!r}",
        f"evaluations {trace.total_evaluations()}",
        f"final_reward {trace.last_reward()!r}",
    ]
    (out / "summary.txt").write_text("\n".join(summary_lines) + "\n")
    for line in summary_lines:
        print(line)
    _close_detector(detector)
    return EXIT_OK


def _close_detector(detector: DetectorHandle) -> None:
    close = getattr(detector, "close", None)
    if close is not None:
        close()


def _load_input(path: Path, grid: PatchGrid):
    """Return (order, heat) from a trace file or an exported heat map."""
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    if path.suffix in (".pgm", ".csv"):
        heat = load_raster(path)
        if heat.shape != (grid.image_h, grid.image_w):
            raise ConfigError(
                f"heat map is {heat.shape[1]}x{heat.shape[0]} "
                f"but the image is {grid.image_w}x{grid.image_h}"
            )
        return heatmap_rank_order(heat, grid), heat
    text = path.read_text()
    if not text.startswith(TRACE_HEADER):
        raise ConfigError(f"unrecognized input file: {path}")
    trace = ExplanationTrace.from_text(text)
    if trace.grid != grid:
        raise ConfigError("trace grid does not match the configured image/grid")
    return trace.patch_order(), build_heatmap(trace)


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config)
    reference = _build_reference(cfg)
    grid = _build_grid(cfg, reference)
    order, heat = _load_input(Path(args.input), grid)
    detector = _build_detector(cfg, reference, grid)
    image = to_float_image(reference)

    ins_curve = perturbation_curve(detector, image, grid, order, MODE_INSERTION, cfg.reward)
    del_curve = perturbation_curve(detector, image, grid, order, MODE_DELETION, cfg.reward)
    ins_auc = auc(ins_curve)
    del_auc = auc(del_curve)
    combined = overall(ins_auc, del_auc)

    if cfg.gt_mask_path is not None:
        if not cfg.gt_mask_path.is_file():
            raise ConfigError(f"mask file not found: {cfg.gt_mask_path}")
        region = load_png(cfg.gt_mask_path).max(axis=2) > 0
    else:
        region = cfg.target.box
    pg_hit = pointing_game(heat, region)
    epg = energy_pointing_game(heat, region)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "insertion_curve.csv").write_text(ins_curve.to_csv())
    (out / "deletion_curve.csv").write_text(del_curve.to_csv())
    header = "insertion_auc,deletion_auc,overall,pointing_game,energy_pg"
    row = f"{ins_auc!r},{del_auc!r},{combined!r},{int(pg_hit)},{epg!r}"
    (out / "metrics.csv").write_text(header + "\n" + row + "\n")

    print(f"{'metric':<16}value")
    print(f"{'insertion_auc':<16}{ins_auc:.6f}")
    print(f"{'deletion_auc':<16}{del_auc:.6f}")
    print(f"{'overall':<16}{combined:.6f}")
    print(f"{'pointing_game':<16}{'hit' if pg_hit else 'miss'}")
    print(f"{'energy_pg':<16}{epg:.6f}")
    _close_detector(detector)
    return EXIT_OK


def _oracle_trial(game, rng: SplitMix64) -> list[tuple[str, float]]:
    """Decomposition residuals for one game, over both modes and group sizes."""
    n = game.n
    out: list[tuple[str, float]] = []
    for r in (1, 2):
        if n < r + 1:
            continue
        players = list(range(n))
        rng.shuffle(players)
        if r >= 2:
            group = players[:r]
            out.append(("insertion first-step", insertion_decomposition_residual(game, (), group)))
            out.append(("deletion first-step", deletion_decomposition_residual(game, (), group)))
        prior_size = rng.randint(1, n - r)
        prior = players[:prior_size]
        group = players[prior_size : prior_size + r]
        out.append(
            (f"insertion later-step r={r}", insertion_decomposition_residual(game, prior, group))
        )
        out.append(
            (f"deletion later-step r={r}", deletion_decomposition_residual(game, prior, group))
        )
    return out


def cmd_oracle(args) -> int:
    if not 1 <= args.n <= MAX_PLAYERS:
        raise ConfigError(f"player count must be in [1, {MAX_PLAYERS}], got {args.n}")
    if args.trials < 1:
        raise ConfigError("trials must be positive")
    rng = SplitMix64(args.seed)
    worst: dict[str, float] = {}
    for _ in range(args.trials):
        game = random_game(args.n, seed=rng.next_u64())
        for family, residual in _oracle_trial(game, rng):
            if args.corrupt_identity:
                residual += 1e-6
            worst[family] = max(worst.get(family, 0.0), residual)
    overall_worst = max(worst.values(), default=0.0)
    for family in sorted(worst):
        print(f"{family}: max residual {worst[family]:.3e}")
    ok = overall_worst <= RESIDUAL_TOLERANCE
    print(
        f"overall: max residual {overall_worst:.3e} "
        f"({'ok' if ok else 'FAIL'}, tolerance {RESIDUAL_TOLERANCE:.0e})"
    )
    return EXIT_OK if ok else EXIT_VERIFICATION


def cmd_bias_bench(args) -> int:
    scenario = bias_scenario(args.seed, marker_gain=args.beta)
    grid = scenario.grid
    image = to_float_image(scenario.image)
    detector = BiasedDetector(
        scenario.instance_weights,
        marker_patch=scenario.marker_patch,
        marker_gain=scenario.marker_gain,
        box=scenario.box,
        target_class=scenario.target_class,
        num_classes=scenario.num_classes,
        reference=image,
        grid=grid,
    )
    reward = RewardSpec(
        variant="class_only",
        target=TargetDetection(box=scenario.box, probs=np.eye(scenario.num_classes)[scenario.target_class]),
        class_index=scenario.target_class,
    )
    config = EngineConfig(mode=MODE_INSERTION, reward=reward, group_size=1)
    candidates = candidate_patches(grid, scenario.box)
    trace = run_explanation(detector, image, grid, candidates, config)

    window = math.ceil(0.1 * grid.n)
    head = trace.patch_order()[:window]
    marker_step = (
        head.index(scenario.marker_patch) + 1 if scenario.marker_patch in head else -1
    )
    instance_steps = [
        i + 1 for i, p in enumerate(head) if p in scenario.instance_weights
    ]
    if args.beta > 0:
        ok = marker_step != -1 and bool(instance_steps)
        expectation = "marker and instance patches both in the first selections"
    else:
        ok = marker_step == -1
        expectation = "unbiased control: marker absent from the first selections"

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.txt").write_text(trace.to_text())
    export_raster(build_heatmap(trace), out / "heatmap.pgm")
    report = [
        f"patches {grid.n}",
        f"window {window}",
        f"beta {args.beta!r}",
        f"marker_patch {scenario.marker_patch}",
        f"marker_step {marker_step}",
        f"first_instance_step {instance_steps[0] if instance_steps else -1}",
        f"head {','.join(str(p) for p in head)}",
        f"expectation {expectation}",
        f"status {'pass' if ok else 'fail'}",
    ]
    (out / "bias_report.txt").write_text("\n".join(report) + "\n")
    for line in report:
        print(line)
    return EXIT_OK if ok else EXIT_VERIFICATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vxcode",
        description="Greedy game-theoretic patch explanations for object detectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_explain = sub.add_parser("explain", help="explain one detection instance")
    p_explain.add_argument("--config", required=True, help="run config (TOML)")
    p_explain.set_defaults(func=cmd_explain)

    p_eval = sub.add_parser("evaluate", help="faithfulness/localization metrics")
    p_eval.add_argument("--config", required=True, help="run config (TOML)")
    p_eval.add_argument("--input", required=True, help="trace file or exported heat map")
    p_eval.set_defaults(func=cmd_evaluate)

    p_oracle = sub.add_parser("oracle", help="verify the exact decomposition identities")
    p_oracle.add_argument("--n", type=int, required=True, help="players per game")
    p_oracle.add_argument("--trials", type=int, default=100, help="number of random games")
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument(
        "--corrupt-identity", action="store_true", dest="corrupt_identity",
        help=argparse.SUPPRESS,  # negative-control hook for tests
    )
    p_oracle.set_defaults(func=cmd_oracle)

    p_bias = sub.add_parser("bias-bench", help="marker-bias detector benchmark")
    p_bias.add_argument("--seed", type=int, default=0)
    p_bias.add_argument("--beta", type=float, default=0.5, help="marker gain")
    p_bias.add_argument("--out", default="bias_bench_out", help="output directory")
    p_bias.set_defaults(func=cmd_bias_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EngineError, WireProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION


if __name__ == "__main__":
    sys.exit(main())
