"""Command-line front end.

Every command reads an optional ``key = value`` config file (``--config``)
and lets flags override it. Each output directory receives a
``metadata.json`` with the fully resolved settings.

Exit codes: 0 success, 1 usage error, 2 runtime or numerical failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .code_eval import gradient_prior, kl_report
from .data_io import (
    SplitSpec,
    load_scene_dir,
    make_synthetic_corpus,
    make_synthetic_scene,
    patch_label_stream,
    read_manifest,
    save_scene_dir,
    split,
    write_manifest,
)
from .depthmap import confusion_matrix, pixel_accuracy, write_confusion_csv
from .exceptions import DegenerateCodeError, DegenerateKernelError, DivisionGuardError, TrainingStepError
from .imageio import read_depth_map, read_image, read_size_map, size_map_to_image, write_image, write_size_map
from .learner import network
from .learner.chain import AnnealSchedule, CodeConfig
from .learner.inference import estimate_depth_map_cnn
from .learner.training import TrainConfig, load_model, train
from .optics import CameraConfig, load_code, save_code
from .simulator import simulate_coded_image
from .wiener_depth import WienerConfig, estimate_depth_map_wiener, write_patch_csv

log = logging.getLogger("codedap")

DEFAULTS = {
    "focal_length": 25.0,
    "pixel_pitch": 8.0,
    "f_number": 1.4,
    "focus_distance": 1.0,
    "max_kernel_size": 13,
    "seed": 0,
    "out": None,
    "threads": 1,
    "noise_sigma": 0.0,
    "nsr": 1e-3,
    "texture_floor": 0.01,
    "boundary": "reflect",
    "stride": 8,
    "prior_amplitude": 1.0,
    "prior_eps": 1e-6,
    "prior_noise_std": 0.01,
    "iterations": 10000,
    "batch_size": 128,
    "learning_rate": 1e-3,
    "code_learning_rate": None,
    "optimizer": "adam",
    "finetune_iterations": 0,
    "eval_every": 500,
    "checkpoint_every": 1000,
    "val_patches": 1024,
    "binarize_threshold": 0.5,
    "dtype": "float32",
    "count": 200,
    "planes_min": 3,
    "planes_max": 5,
    "textures": "noise,stripes,checker",
    "layouts": "planes,steps",
    "fractions": "0.6,0.2,0.2",
    "band": 48,
}

_TYPES = {k: type(v) for k, v in DEFAULTS.items() if v is not None}
_TYPES["code_learning_rate"] = float


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    with fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            key, value = (p.strip() for p in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    if value is None:
        return None
    typ = _TYPES.get(key)
    if typ is None or isinstance(value, typ):
        return value
    try:
        return typ(value)
    except ValueError:
        raise UsageError(f"invalid value for {key}: {value!r}") from None


def resolve(args):
    """Defaults, then config file, then explicitly given flags."""
    settings = dict(DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        settings[key] = value
    return {k: _coerce(k, v) for k, v in settings.items()}


def camera_from(s):
    return CameraConfig(float(s["focal_length"]), float(s["pixel_pitch"]), float(s["f_number"]),
                        float(s["focus_distance"]), int(s["max_kernel_size"]))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


# settings that cannot change any output and would break byte-identical reruns
_NOT_RECORDED = ("threads",)


def write_metadata(out, command, settings, **extra):
    kept = {k: _jsonable(v) for k, v in sorted(settings.items()) if k not in _NOT_RECORDED}
    meta = {"command": command, "version": __version__, "settings": kept}
    meta.update({k: _jsonable(v) for k, v in extra.items()})
    with open(os.path.join(out, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _require_out(s):
    if not s.get("out"):
        raise UsageError("--out is required")
    os.makedirs(s["out"], exist_ok=True)
    return s["out"]


def _load_code_named(path):
    if not path:
        raise UsageError("an aperture code file is required (--code)")
    try:
        return load_code(path).values
    except OSError as exc:
        raise UsageError(f"cannot read code file {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(f"invalid code file {path}: {exc}") from None


def _scene_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _load_scenes(s):
    directory = s.get("scenes")
    if not directory:
        raise UsageError("--scenes is required")
    if not os.path.isdir(directory):
        raise UsageError(f"scene directory {directory} does not exist")
    ids = read_manifest(s["manifest"]) if s.get("manifest") else None
    scenes = load_scene_dir(directory, ids)
    if not scenes:
        raise UsageError(f"no scenes found in {directory}")
    return scenes


# ---------------------------------------------------------------- commands


def cmd_make_scenes(s):
    out = _require_out(s)
    cam = camera_from(s)
    if s.get("depths"):
        depths = [float(v) for v in str(s["depths"]).split(",") if v.strip()]
        if not depths:
            raise UsageError("--depths must list at least one depth")
        scenes = [make_synthetic_scene(s.get("layout") or "planes", depths, s.get("texture") or "noise",
                                       seed=s["seed"], band=s["band"], name="000")]
    else:
        scenes = make_synthetic_corpus(
            s["count"], cam, seed=s["seed"], planes=(s["planes_min"], s["planes_max"]),
            textures=tuple(s["textures"].split(",")), layouts=tuple(s["layouts"].split(",")), band=s["band"])
    ids = save_scene_dir(scenes, out)
    fractions = tuple(float(v) for v in s["fractions"].split(","))
    parts = split(ids, SplitSpec(fractions, s["seed"]))
    for name, part in zip(("train", "val", "test"), parts):
        write_manifest(os.path.join(out, f"{name}.txt"), part)
    write_metadata(out, "make-scenes", s, n_scenes=len(ids))
    return 0


def cmd_simulate(s):
    out = _require_out(s)
    cam = camera_from(s)
    code = _load_code_named(s.get("code"))
    if not s.get("image") or not (s.get("depth") or s.get("sizes")):
        raise UsageError("simulate needs --image and one of --depth/--sizes")
    try:
        image = read_image(s["image"])
        if s.get("sizes"):
            sizes = read_size_map(s["sizes"])
        else:
            from .data_io import discretize_depth
            sizes = discretize_depth(read_depth_map(s["depth"]), cam)
    except OSError as exc:
        raise UsageError(f"cannot read input: {exc}") from None
    coded = simulate_coded_image(image, sizes, code, cam, noise_sigma=s["noise_sigma"], seed=s["seed"],
                                 boundary=s["boundary"])
    write_image(os.path.join(out, "coded.pgm"), coded)
    write_image(os.path.join(out, "coded.png"), coded)
    write_size_map(os.path.join(out, "sizes.txt"), sizes)
    write_image(os.path.join(out, "sizes.pgm"), size_map_to_image(sizes, cam.max_kernel_size))
    write_metadata(out, "simulate", s, camera=cam.to_dict())
    return 0


def _prior_from(s):
    return gradient_prior(amplitude=s["prior_amplitude"], eps=s["prior_eps"], noise_std=s["prior_noise_std"])


def _scales_from(s, cam):
    if s.get("scales"):
        return [int(v) for v in str(s["scales"]).split(",")]
    return cam.scales


def cmd_eval_code(s):
    out = _require_out(s)
    cam = camera_from(s)
    paths = s.get("code") or []
    if isinstance(paths, str):
        paths = [p for p in paths.split(",") if p]
    if not paths:
        raise UsageError("eval-code needs at least one --code")
    prior = _prior_from(s)
    scales = _scales_from(s, cam)
    rows, seen = [], {}
    for path in paths:
        code = _load_code_named(path)
        stem = os.path.splitext(os.path.basename(path))[0]
        seen[stem] = seen.get(stem, 0) + 1
        name = stem if seen[stem] == 1 else f"{stem}_{seen[stem]}"
        report = kl_report(code, scales, prior)
        report.to_csv(os.path.join(out, f"{name}_kl.csv"))
        rows.append((name, report.score_min, report.score_mean))
    rows.sort(key=lambda r: -r[1])
    with open(os.path.join(out, "summary.csv"), "w") as fh:
        fh.write("rank,code,score_min,score_mean\n")
        for i, (name, smin, smean) in enumerate(rows, 1):
            fh.write(f"{i},{name},{smin:.17g},{smean:.17g}\n")
    write_metadata(out, "eval-code", s, scales=scales)
    return 0


def _estimate_map(image, method, code, s, cam, model=None):
    if method == "wiener":
        cfg = WienerConfig(s["nsr"], cam.scales, s["boundary"], s["texture_floor"])
        return estimate_depth_map_wiener(image, code, cfg, s["stride"], s["threads"], return_patches=True)
    _, params, net_cfg, code_cfg, _ = model
    return estimate_depth_map_cnn(image, params, net_cfg, code_cfg, s["stride"], return_patches=True)


def _load_model_checked(path):
    if not path:
        raise UsageError("the cnn method needs --checkpoint")
    if not os.path.exists(path):
        raise UsageError(f"checkpoint {path} does not exist")
    return load_model(path)


def cmd_estimate(s):
    out = _require_out(s)
    cam = camera_from(s)
    method = s.get("method") or "wiener"
    if not s.get("image"):
        raise UsageError("estimate needs --image")
    model = None
    if method == "cnn":
        model = _load_model_checked(s.get("checkpoint"))
        code = None
    else:
        code = _load_code_named(s.get("code"))
    try:
        image = read_image(s["image"])
    except OSError as exc:
        raise UsageError(f"cannot read image {s['image']}: {exc}") from None
    sizes, patches = _estimate_map(image, method, code, s, cam, model)
    write_size_map(os.path.join(out, "estimate_sizes.txt"), sizes)
    write_image(os.path.join(out, "estimate_sizes.pgm"), size_map_to_image(sizes, cam.max_kernel_size))
    extra = {"method": method}
    if method == "wiener":
        write_patch_csv(os.path.join(out, "patches.csv"), patches, cam.scales)
        extra["low_confidence_fraction"] = float(np.mean([e.low_confidence for _, _, e in patches]))
    if s.get("truth"):
        truth = read_size_map(s["truth"])
        cm = confusion_matrix(truth, sizes, cam.scales)
        write_confusion_csv(os.path.join(out, "confusion.csv"), cm, cam.scales)
        extra["accuracy"] = pixel_accuracy(truth, sizes)
        with open(os.path.join(out, "metrics.json"), "w") as fh:
            json.dump({"accuracy": extra["accuracy"]}, fh, indent=1)
            fh.write("\n")
    write_metadata(out, "estimate", s, **extra)
    return 0


def _train_config(s):
    return TrainConfig(
        batch_size=s["batch_size"], iterations=s["iterations"], learning_rate=s["learning_rate"],
        code_learning_rate=s.get("code_learning_rate"), seed=s["seed"], optimizer=s["optimizer"],
        binarize_threshold=s["binarize_threshold"], eval_every=s["eval_every"],
        checkpoint_every=s["checkpoint_every"], finetune_iterations=s["finetune_iterations"], dtype=s["dtype"],
    )


def cmd_train(s):
    out = _require_out(s)
    cam = camera_from(s)
    if s.get("scenes"):
        directory = s["scenes"]
        if not os.path.isdir(directory):
            raise UsageError(f"scene directory {directory} does not exist")
        tr_ids = read_manifest(os.path.join(directory, "train.txt"))
        va_ids = read_manifest(os.path.join(directory, "val.txt"))
        train_scenes, val_scenes = load_scene_dir(directory, tr_ids), load_scene_dir(directory, va_ids)
    elif s.get("synthetic"):
        scenes = make_synthetic_corpus(int(s["synthetic"]), cam, seed=s["seed"],
                                       planes=(s["planes_min"], s["planes_max"]),
                                       textures=tuple(s["textures"].split(",")),
                                       layouts=tuple(s["layouts"].split(",")), band=s["band"])
        fractions = tuple(float(v) for v in s["fractions"].split(","))
        train_scenes, val_scenes, _ = split(scenes, SplitSpec(fractions, s["seed"]))
    else:
        raise UsageError("train needs --scenes DIR or --synthetic N")
    if not train_scenes:
        raise UsageError("the training split is empty")
    cfg = _train_config(s)
    code_cfg = CodeConfig(scales=cam.scales)
    net_cfg = network.NetworkConfig(n_classes=cam.n_classes)
    stream = patch_label_stream(train_scenes, cam, seed=_scene_seed(s["seed"], 1))
    val_set = None
    if val_scenes and s["val_patches"] > 0:
        val_set = patch_label_stream(val_scenes, cam, seed=_scene_seed(s["seed"], 2)).draw(s["val_patches"])
    ckpt = os.path.join(out, "checkpoint.npz")
    log_path = os.path.join(out, "train_log.csv")
    stop_after = s.get("stop_after")
    write_metadata(out, "train", s, camera=cam.to_dict(), network=net_cfg.to_dict(), status="running")
    try:
        result = train(stream, code_cfg, cfg, AnnealSchedule(), net_cfg, val_set=val_set, log_path=log_path,
                       checkpoint_path=ckpt, resume=s.get("resume"),
                       stop_after=int(stop_after) if stop_after is not None else None)
    except DegenerateCodeError as exc:
        write_metadata(out, "train", s, camera=cam.to_dict(), network=net_cfg.to_dict(), status="failed",
                       error=str(exc))
        raise
    if result.code is None:
        write_metadata(out, "train", s, camera=cam.to_dict(), network=net_cfg.to_dict(), status="interrupted",
                       iteration=len(result.log) and result.log[-1][0] + 1)
        return 0
    save_code(result.code, os.path.join(out, "code.txt"))
    save_code(result.soft_code, os.path.join(out, "soft_code.txt"))
    write_metadata(out, "train", s, camera=cam.to_dict(), network=net_cfg.to_dict(), status="done",
                   val_accuracy=result.val_accuracy)
    return 0


def cmd_compare(s):
    out = _require_out(s)
    cam = camera_from(s)
    pairs = s.get("pair") or []
    if len(pairs) < 2:
        raise UsageError("compare needs at least two --pair CODE:METHOD[:CHECKPOINT]")
    scenes = _load_scenes(s)
    prior = _prior_from(s)
    rows = []
    for spec in pairs:
        parts = spec.split(":")
        if len(parts) < 2 or parts[1] not in ("wiener", "cnn"):
            raise UsageError(f"bad pair {spec!r}; expected CODE:wiener or CODE:cnn:CHECKPOINT")
        code = _load_code_named(parts[0])
        method = parts[1]
        model = _load_model_checked(parts[2] if len(parts) > 2 else None) if method == "cnn" else None
        correct = total = 0
        for i, sc in enumerate(scenes):
            truth = sc.size_map(cam)
            coded = simulate_coded_image(sc.image, truth, code, cam, noise_sigma=s["noise_sigma"],
                                         seed=_scene_seed(s["seed"], i), boundary=s["boundary"])
            est, _ = _estimate_map(coded, method, code, s, cam, model)
            correct += int(np.sum(est == truth))
            total += truth.size
        score = kl_report(code, cam.scales, prior).score_min
        rows.append((os.path.splitext(os.path.basename(parts[0]))[0], method, correct / total, score))
    with open(os.path.join(out, "compare.csv"), "w") as fh:
        fh.write("code,method,accuracy,score_min\n")
        for name, method, acc, score in rows:
            fh.write(f"{name},{method},{acc:.17g},{score:.17g}\n")
    write_metadata(out, "compare", s, n_scenes=len(scenes))
    return 0


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="maximum worker threads")
    cam = argparse.ArgumentParser(add_help=False)
    for name, typ in (("focal-length", float), ("pixel-pitch", float), ("f-number", float),
                      ("focus-distance", float), ("max-kernel-size", int)):
        cam.add_argument(f"--{name}", type=typ)

    parser = _Parser(prog="codedap", description="Coded-aperture depth from defocus toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-scenes", parents=[common, cam], help="write a synthetic scene directory")
    p.add_argument("--count", type=int)
    p.add_argument("--planes-min", type=int)
    p.add_argument("--planes-max", type=int)
    p.add_argument("--textures")
    p.add_argument("--layouts")
    p.add_argument("--fractions")
    p.add_argument("--band", type=int)
    p.add_argument("--depths", help="comma-separated depths (m) for a single custom scene")
    p.add_argument("--layout")
    p.add_argument("--texture")
    p.set_defaults(func=cmd_make_scenes)

    p = sub.add_parser("simulate", parents=[common, cam], help="render a coded-aperture image")
    p.add_argument("--image")
    p.add_argument("--depth")
    p.add_argument("--sizes")
    p.add_argument("--code")
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--boundary", choices=("reflect", "cyclic"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval-code", parents=[common, cam], help="KL discriminability report per code")
    p.add_argument("--code", action="append")
    p.add_argument("--scales")
    p.add_argument("--prior-amplitude", type=float)
    p.add_argument("--prior-eps", type=float)
    p.add_argument("--prior-noise-std", type=float)
    p.set_defaults(func=cmd_eval_code)

    p = sub.add_parser("estimate", parents=[common, cam], help="blur-size map from a coded image")
    p.add_argument("--image")
    p.add_argument("--code")
    p.add_argument("--method", choices=("wiener", "cnn"))
    p.add_argument("--checkpoint")
    p.add_argument("--truth")
    p.add_argument("--nsr", type=float)
    p.add_argument("--texture-floor", type=float)
    p.add_argument("--boundary", choices=("reflect", "cyclic"))
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("train", parents=[common, cam], help="learn a code and classifier")
    p.add_argument("--scenes")
    p.add_argument("--synthetic", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--code-learning-rate", type=float)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--finetune-iterations", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--val-patches", type=int)
    p.add_argument("--dtype", choices=("float32", "float64"))
    p.add_argument("--resume")
    p.add_argument("--stop-after", type=int, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", parents=[common, cam], help="accuracy and KL score per (code, method)")
    p.add_argument("--pair", action="append", help="CODE:METHOD[:CHECKPOINT]")
    p.add_argument("--scenes")
    p.add_argument("--manifest")
    p.add_argument("--nsr", type=float)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--boundary", choices=("reflect", "cyclic"))
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve(args)
        if settings["threads"] < 1:
            raise UsageError("--threads must be >= 1")
        with threadpool_limits(limits=settings["threads"]):
            return args.func(settings)
    except UsageError as exc:
        log.error("%s", exc)
        return 1
    except (DegenerateCodeError, DegenerateKernelError, DivisionGuardError, TrainingStepError,
            FloatingPointError, ValueError, ArithmeticError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
