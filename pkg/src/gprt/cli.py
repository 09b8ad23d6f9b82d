"""Command-line driver: synth, render, relight, fit-light, fit-transfer, bench, convert.

Every command prints one JSON object per line on stdout.  Errors go to stderr
as a JSON line and map to fixed exit codes: 0 ok, 2 bad input, 3 render
failure, 4 optimizer divergence.  Output files never embed timings, so two
runs with the same flags under ``--deterministic`` write identical bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from gprt.errors import DivergenceError, InvalidInputError

EXIT_OK, EXIT_INPUT, EXIT_RENDER, EXIT_DIVERGENCE = 0, 2, 3, 4
LIGHTS_FORMAT = "gprt-lights"
BENCH_KEYS = ("gaussians", "resolution", "repetitions", "threads", "modes", "speedup")
BENCH_MODE_KEYS = ("mean_ms", "std_ms", "fps")

log = logging.getLogger("gprt")


class RenderFailure(RuntimeError):
    """Raised when rasterization or image output fails after inputs validated."""


def emit(record: dict, stream=None) -> None:
    print(json.dumps(record, sort_keys=True), file=stream or sys.stdout, flush=True)


def _write_json(path, data) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------- file inputs

def _read_json(path) -> object:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise InvalidInputError(f"{path}: invalid JSON: {exc}") from exc


def load_lights(path, n_lights: int | None = None):
    """Point lights from a light JSON, or an equirectangular ``.hdr``/``.pfm`` env map."""
    from gprt.imageio import read_image
    from gprt.lighting import N_ENV_LIGHTS, EnvMap, PointLightSet, envmap_to_pointlights

    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"{path}: no such file")
    if path.suffix.lower() in (".hdr", ".pfm"):
        env = EnvMap(read_image(path))
        return envmap_to_pointlights(env, n_lights or N_ENV_LIGHTS)
    data = _read_json(path)
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: light file must hold a JSON object")
    return PointLightSet.from_dict(data)


def save_lights(path, lights) -> None:
    _write_json(path, {"format": LIGHTS_FORMAT, "version": "1.0", **lights.to_dict()})


def load_cameras(path) -> list:
    """Cameras from a camera JSON, a list of them, or any object with a ``cameras`` list."""
    from gprt.splat_core import Camera

    path = Path(path)
    data = _read_json(path / "manifest.json" if path.is_dir() else path)
    if isinstance(data, dict) and "cameras" in data:
        data = data["cameras"]
    items = data if isinstance(data, list) else [data]
    if not items or not all(isinstance(c, dict) for c in items):
        raise InvalidInputError(f"{path}: expected camera objects")
    return [Camera.from_dict(c) for c in items]


def _unit(values, name):
    v = np.asarray(values, dtype=np.float64)
    n = np.linalg.norm(v)
    if not (n > 0 and math.isfinite(n)):
        raise InvalidInputError(f"{name} must be a nonzero finite vector")
    return v / n


def build_pose(args, avatar, base=None):
    from gprt.rig import RigPose

    pose = base or RigPose(avatar.rest_gaze, avatar.rest_gaze)
    fields_ = pose.to_dict()
    if getattr(args, "pose", None):
        data = _read_json(args.pose)
        if not isinstance(data, dict) or set(data) - set(fields_):
            raise InvalidInputError(f"{args.pose}: pose keys must be among {sorted(fields_)}")
        fields_.update(data)
    if getattr(args, "gaze_left", None):
        fields_["gaze_left"] = _unit(args.gaze_left, "--gaze-left")
    if getattr(args, "gaze_right", None):
        fields_["gaze_right"] = _unit(args.gaze_right, "--gaze-right")
    if getattr(args, "neck", None):
        fields_["neck_rotation"] = args.neck
    try:
        return RigPose(**fields_)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"invalid pose: {exc}") from exc


def _shading(args, base=None):
    from gprt.shading import ShadingConfig

    cfg = base or ShadingConfig()
    if getattr(args, "schlick", False):
        cfg.schlick_visibility = True
    if getattr(args, "analytic_sharp", False):
        cfg.analytic_sharp = True
    return cfg


def _load_avatar(path):
    from gprt.avatar import load_avatar

    if not Path(path).exists():
        raise InvalidInputError(f"{path}: no such avatar")
    return load_avatar(path)


# ---------------------------------------------------------------- TOML configs

_FIT_SECTIONS = {
    "light": {"n_lights": 512, "init": "uniform", "frame": 0},
    "transfer": {"init": "least_squares", "batch_frames": 16},
}


def load_fit_config(path, kind: str, args) -> tuple:
    """Resolve ``(FitConfig, task options, ShadingConfig)`` from TOML plus CLI overrides.

    Recognised tables: ``[fit]`` (optimizer), ``[weights]`` (loss weights),
    ``[shading]`` and ``[light]`` or ``[transfer]`` for task options.
    """
    import tomli

    from gprt.fitting import FitConfig, LossWeights, light_fit_defaults, transfer_fit_defaults
    from gprt.shading import ShadingConfig

    data = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomli.load(f)
        except OSError as exc:
            raise InvalidInputError(f"{path}: {exc.strerror or exc}") from exc
        except tomli.TOMLDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid TOML: {exc}") from exc
    allowed = {"fit", "weights", "shading", kind}
    if set(data) - allowed:
        raise InvalidInputError(f"unknown config tables: {sorted(set(data) - allowed)}")
    base = light_fit_defaults() if kind == "light" else transfer_fit_defaults()
    defaults = {f.name: getattr(base, f.name) for f in fields(base) if f.name != "weights"}
    weights = asdict(base.weights)
    w_in = data.get("weights", {})
    if set(w_in) - set(weights):
        raise InvalidInputError(f"unknown loss weights: {sorted(set(w_in) - set(weights))}")
    weights.update(w_in)
    fit = dict(data.get("fit", {}))
    if args.iterations is not None:
        fit["iterations"] = args.iterations
    if args.seed is not None:
        fit["seed"] = args.seed
    if args.deterministic:
        fit["deterministic"] = True
    try:
        config = FitConfig.from_dict({**fit, "weights": LossWeights(**weights)}, **defaults)
    except TypeError as exc:
        raise InvalidInputError(str(exc)) from exc
    options = dict(_FIT_SECTIONS[kind])
    task = data.get(kind, {})
    if set(task) - set(options):
        raise InvalidInputError(f"unknown [{kind}] keys: {sorted(set(task) - set(options))}")
    options.update(task)
    sh = data.get("shading", {})
    try:
        shading = _shading(args, ShadingConfig(**sh))
    except TypeError as exc:
        raise InvalidInputError(f"invalid [shading] table: {exc}") from exc
    return config, options, shading


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    from gprt.avatar import save_avatar
    from gprt.imageio import read_image, write_pfm
    from gprt.lighting import EnvMap, envmap_to_pointlights, random_smooth_envmap
    from gprt.synth import Dataset, make_toy_head, olat_frames, orbit_cameras, render_frames

    seed = 0 if args.seed is None else args.seed
    out = Path(args.out)
    avatar = make_toy_head(args.gaussians, seed, args.sh_order)
    if args.no_specular:
        avatar.transfer = avatar.transfer.replace(visibility=np.zeros(len(avatar)))
    cams = orbit_cameras(args.cameras, args.distance, args.resolution)
    if args.kind == "olat":
        frames = olat_frames(args.lights, group=args.group, seed=seed)
    else:
        env = (EnvMap(read_image(args.env)) if args.env
               else random_smooth_envmap(np.random.default_rng(seed + 1)))
        frames = [envmap_to_pointlights(env, args.env_lights)]
    pose = build_pose(args, avatar)
    images, alphas, _ = render_frames(avatar, frames, cams, pose, _shading(args))
    save_avatar(avatar, out / "avatar")
    ds = Dataset(cams, frames, images, alphas, pose, seed, "avatar", args.kind)
    ds.save(out)
    if args.kind == "env":
        write_pfm(out / "env.pfm", env.texels)
    emit({"command": "synth", "out": str(out), "kind": args.kind, "gaussians": len(avatar),
          "frames": len(frames), "cameras": len(cams)})
    return EXIT_OK


def _render_one(posed, lights, cam, mode, shading):
    from gprt.render import render_avatar

    try:
        return render_avatar(posed, lights, cam, mode=mode, config=shading)
    except InvalidInputError:
        raise
    except Exception as exc:
        raise RenderFailure(f"rendering failed: {exc}") from exc


def _write_image_pair(png, pfm, rgb) -> None:
    from gprt.imageio import write_pfm, write_png

    try:
        for p in (png, pfm):
            Path(p).parent.mkdir(parents=True, exist_ok=True)
        write_png(png, rgb)
        write_pfm(pfm, rgb)
    except OSError as exc:
        raise RenderFailure(f"cannot write image: {exc}") from exc


def cmd_render(args) -> int:
    from gprt.avatar import pose_avatar

    avatar = _load_avatar(args.avatar)
    lights = load_lights(args.lights, args.n_lights)
    cams = load_cameras(args.camera)
    if len(cams) != 1:
        raise InvalidInputError(f"{args.camera}: render takes exactly one camera, got {len(cams)}")
    posed = pose_avatar(avatar, build_pose(args, avatar))
    t0 = time.perf_counter()
    res = _render_one(posed, lights, cams[0], args.mode, _shading(args))
    ms = 1e3 * (time.perf_counter() - t0)
    out = Path(args.out)
    pfm = Path(args.pfm) if args.pfm else out.with_suffix(".pfm")
    _write_image_pair(out, pfm, res.target.rgb)
    emit({"command": "render", "ms": ms, "gaussians": len(posed.gaussians), "mode": args.mode,
          "png": str(out), "pfm": str(pfm)})
    return EXIT_OK


def cmd_relight(args) -> int:
    from gprt.avatar import pose_avatar
    from gprt.synth import load_dataset

    avatar = _load_avatar(args.avatar)
    lights = load_lights(args.lights, args.n_lights)
    base_pose = None
    if args.dataset:
        ds = load_dataset(args.dataset)
        cams, base_pose = ds.cameras, ds.pose
    elif args.camera:
        cams = load_cameras(args.camera)
    else:
        raise InvalidInputError("relight needs --dataset or --camera")
    posed = pose_avatar(avatar, build_pose(args, avatar, base_pose))
    out = Path(args.out)
    shading = _shading(args)
    t0 = time.perf_counter()
    for c, cam in enumerate(cams):
        res = _render_one(posed, lights, cam, args.mode, shading)
        _write_image_pair(out / f"relight_c{c:02d}.png", out / f"relight_c{c:02d}.pfm", res.target.rgb)
    emit({"command": "relight", "ms": 1e3 * (time.perf_counter() - t0), "cameras": len(cams),
          "gaussians": len(posed.gaussians), "out": str(out)})
    return EXIT_OK


def _dataset_and_avatar(args):
    from gprt.synth import dataset_avatar, load_dataset

    ds = load_dataset(args.dataset)
    avatar = _load_avatar(args.avatar) if args.avatar else dataset_avatar(ds, args.dataset)
    return ds, avatar


def _report_path(args) -> Path:
    out = Path(args.out)
    return Path(args.report) if args.report else out.with_name(out.stem + "_report.json")


def cmd_fit_light(args) -> int:
    from gprt.avatar import pose_avatar
    from gprt.fitting import fit_lights

    config, options, shading = load_fit_config(args.config, "light", args)
    ds, avatar = _dataset_and_avatar(args)
    frame = int(options["frame"])
    if not 0 <= frame < len(ds.frames):
        raise InvalidInputError(f"frame {frame} out of range for {len(ds.frames)} frames")
    init = options["init"]
    if init == "uniform":
        init = None
    elif not isinstance(init, (int, float)) or isinstance(init, bool):
        raise InvalidInputError("[light] init must be \"uniform\" or a number")
    posed = pose_avatar(avatar, ds.pose)
    result = fit_lights(posed, ds.images[frame], ds.cameras, ds.masks, int(options["n_lights"]),
                        config, init, shading)
    save_lights(args.out, result.lights)
    report = result.report.to_dict()
    report["config"] = {"fit": config.to_dict(), "light": options, "shading": asdict(shading)}
    report["dataset"] = str(args.dataset)
    _write_json(_report_path(args), report)
    emit({"command": "fit-light", "out": str(args.out), "report": str(_report_path(args)),
          "final_loss": report["final_loss"], "psnr": report["metrics"]["psnr"],
          "iterations": config.iterations})
    return EXIT_OK


def cmd_fit_transfer(args) -> int:
    from gprt.avatar import pose_avatar, save_avatar
    from gprt.fitting import fit_transfer

    config, options, shading = load_fit_config(args.config, "transfer", args)
    ds, avatar = _dataset_and_avatar(args)
    posed = pose_avatar(avatar, ds.pose)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        result = fit_transfer(posed, ds.images, ds.frames, ds.cameras, ds.masks, config,
                              options["init"], shading, int(options["batch_frames"]))
    for w in caught:
        emit({"warning": str(w.message)}, sys.stderr)
    # write the fitted rows back onto the full (unposed) avatar
    tr, fitted = avatar.transfer, result.transfer
    rows = {}
    for name in ("albedo", "d_color", "d_mono", "roughness", "visibility", "normal_offset"):
        arr = getattr(tr, name).copy()
        arr[posed.index] = getattr(fitted, name)
        rows[name] = arr
    avatar.transfer = tr.replace(**rows)
    avatar.metadata = {**avatar.metadata, "fit": "transfer", "fit_seed": config.seed}
    save_avatar(avatar, args.out)
    report = result.report.to_dict()
    report["config"] = {"fit": config.to_dict(), "transfer": options, "shading": asdict(shading)}
    report["dataset"] = str(args.dataset)
    report_path = Path(args.report) if args.report else Path(args.out) / "fit_report.json"
    _write_json(report_path, report)
    emit({"command": "fit-transfer", "out": str(args.out), "report": str(report_path),
          "final_loss": report["final_loss"], "psnr": report["metrics"]["psnr"],
          "iterations": config.iterations})
    return EXIT_OK


def cmd_bench(args) -> int:
    import numba

    from gprt.avatar import pose_avatar
    from gprt.lighting import uniform_lights
    from gprt.shading import shade_for_view
    from gprt.splat_core import rasterize
    from gprt.synth import orbit_cameras, random_splat_scene

    if args.repetitions < 1:
        raise InvalidInputError("--repetitions must be >= 1")
    modes = args.modes.split(",")
    if any(m not in ("tiled", "reference") for m in modes):
        raise InvalidInputError(f"unknown mode in {args.modes!r}")
    seed = 0 if args.seed is None else args.seed
    if args.avatar:
        posed = pose_avatar(_load_avatar(args.avatar))
        cam = (load_cameras(args.camera)[0] if args.camera
               else orbit_cameras(1, resolution=args.resolution)[0])
        g = posed.gaussians
        colors = np.maximum(shade_for_view(posed.transfer, g.positions, posed.normals, cam.center,
                                           uniform_lights(1.0)), 0.0)
    else:
        g, colors, cam = random_splat_scene(np.random.default_rng(seed), args.gaussians, args.resolution)
    size = (args.resolution, args.resolution)
    stats = {}
    for mode in modes:
        try:
            rasterize(g, colors, cam, size, mode)  # compile and warm caches
            times = []
            for _ in range(args.repetitions):
                t0 = time.perf_counter()
                rasterize(g, colors, cam, size, mode)
                times.append(1e3 * (time.perf_counter() - t0))
        except InvalidInputError:
            raise
        except Exception as exc:
            raise RenderFailure(f"benchmark render failed: {exc}") from exc
        mean = float(np.mean(times))
        stats[mode] = {"mean_ms": mean, "std_ms": float(np.std(times)), "fps": 1e3 / mean}
    speedup = (stats["reference"]["mean_ms"] / stats["tiled"]["mean_ms"]
               if {"tiled", "reference"} <= set(stats) else None)
    report = {"gaussians": len(g), "resolution": args.resolution, "repetitions": args.repetitions,
              "threads": numba.get_num_threads(), "modes": stats, "speedup": speedup}
    if args.out:
        _write_json(args.out, report)
    emit({"command": "bench", **report})
    return EXIT_OK


def cmd_convert(args) -> int:
    from gprt.imageio import read_image, write_hdr, write_pfm, write_png
    from gprt.lighting import EnvMap, envmap_to_pointlights
    from gprt.rig import write_obj

    src, dst = Path(args.input), Path(args.output)
    if not src.exists():
        raise InvalidInputError(f"{src}: no such file")
    out_kind = dst.suffix.lower()
    if src.is_dir() or (src.suffix.lower() == ".json" and out_kind == ".obj"):
        avatar = _load_avatar(src)
        if out_kind != ".obj":
            raise InvalidInputError("an avatar converts only to .obj (its guide mesh)")
        write_obj(dst, avatar.mesh.vertices, avatar.mesh.triangles)
        emit({"command": "convert", "input": str(src), "output": str(dst), "kind": "mesh"})
        return EXIT_OK
    img = read_image(src)
    if out_kind == ".json":
        lights = envmap_to_pointlights(EnvMap(img), args.n_lights)
        save_lights(dst, lights)
        emit({"command": "convert", "input": str(src), "output": str(dst), "kind": "lights",
              "n_lights": len(lights)})
        return EXIT_OK
    writers = {".pfm": write_pfm, ".hdr": write_hdr, ".png": write_png}
    if out_kind not in writers:
        raise InvalidInputError(f"{dst}: unsupported output format {out_kind!r}")
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    writers[out_kind](dst, img)
    emit({"command": "convert", "input": str(src), "output": str(dst), "kind": "image"})
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_pose_flags(p):
    p.add_argument("--pose", help="JSON with gaze_left, gaze_right, neck_rotation")
    p.add_argument("--gaze-left", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--gaze-right", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--neck", type=float, nargs=3, metavar=("RX", "RY", "RZ"),
                   help="neck rotation vector in radians")


def _add_shading_flags(p):
    p.add_argument("--schlick", action="store_true", help="Schlick-modulated specular visibility")
    p.add_argument("--analytic-sharp", action="store_true", help="closed form for very sharp lobes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gprt", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (default: $GPRT_THREADS or all cores)")
    parser.add_argument("--deterministic", action="store_true", help="fixed-order reductions")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--iterations", type=int, default=None, help="override fit iterations")
    parser.add_argument("--verbose", action="store_true", help="human-readable progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="toy avatar plus a rendered dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("olat", "env"), default="olat")
    p.add_argument("--gaussians", type=int, default=2000)
    p.add_argument("--sh-order", type=int, default=3)
    p.add_argument("--cameras", type=int, default=8)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--distance", type=float, default=0.75)
    p.add_argument("--lights", type=int, default=64, help="OLAT frame count")
    p.add_argument("--group", type=int, default=1, help="lights per OLAT frame")
    p.add_argument("--env", help="env map (.hdr/.pfm) for --kind env; random if omitted")
    p.add_argument("--env-lights", type=int, default=512)
    p.add_argument("--no-specular", action="store_true", help="zero specular visibility")
    _add_pose_flags(p)
    _add_shading_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="render one view to PNG and PFM")
    p.add_argument("--avatar", required=True)
    p.add_argument("--lights", required=True, help="light JSON or env map")
    p.add_argument("--camera", required=True)
    p.add_argument("--out", required=True, help="PNG path")
    p.add_argument("--pfm", help="PFM path (default: next to the PNG)")
    p.add_argument("--mode", choices=("tiled", "reference"), default="tiled")
    p.add_argument("--n-lights", type=int, default=None, help="lights sampled from an env map")
    _add_pose_flags(p)
    _add_shading_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("relight", help="render every camera of a dataset under new lights")
    p.add_argument("--avatar", required=True)
    p.add_argument("--lights", required=True)
    p.add_argument("--dataset")
    p.add_argument("--camera")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=("tiled", "reference"), default="tiled")
    p.add_argument("--n-lights", type=int, default=None)
    _add_pose_flags(p)
    _add_shading_flags(p)
    p.set_defaults(func=cmd_relight)

    for name, func, out_help in (("fit-light", cmd_fit_light, "light JSON"),
                                 ("fit-transfer", cmd_fit_transfer, "avatar directory")):
        p = sub.add_parser(name, help=f"fit and write a {out_help}")
        p.add_argument("--dataset", required=True)
        p.add_argument("--config", help="TOML config")
        p.add_argument("--avatar", help="avatar to fit (default: the dataset's)")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--report", help="report JSON path")
        _add_shading_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("bench", help="rasterizer throughput per mode")
    p.add_argument("--avatar")
    p.add_argument("--camera")
    p.add_argument("--gaussians", type=int, default=100_000, help="random scene size without --avatar")
    p.add_argument("--resolution", type=int, default=1024)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--modes", default="tiled,reference")
    p.add_argument("--out", help="report JSON path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("convert", help="image formats, env map to lights, avatar to OBJ")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--n-lights", type=int, default=512)
    p.set_defaults(func=cmd_convert)
    return parser


def _set_threads(n: int | None):
    from threadpoolctl import threadpool_limits

    if n is None:
        env = os.environ.get("GPRT_THREADS")
        if not env:
            return None
        try:
            n = int(env)
        except ValueError as exc:
            raise InvalidInputError(f"GPRT_THREADS must be an integer, got {env!r}") from exc
    if n < 1:
        raise InvalidInputError("thread count must be >= 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(message)s")
    if args.iterations is not None and args.iterations < 0:
        emit({"error": "--iterations must be >= 0", "exit_code": EXIT_INPUT}, sys.stderr)
        return EXIT_INPUT
    try:
        limits = _set_threads(args.threads)
        log.info("running %s", args.command)
        try:
            return args.func(args)
        finally:
            if limits is not None:
                limits.restore_original_limits()
    except (InvalidInputError, FileNotFoundError) as exc:
        code, msg = EXIT_INPUT, str(exc)
    except RenderFailure as exc:
        code, msg = EXIT_RENDER, str(exc)
    except DivergenceError as exc:
        code, msg = EXIT_DIVERGENCE, str(exc)
    emit({"error": msg, "exit_code": code}, sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
