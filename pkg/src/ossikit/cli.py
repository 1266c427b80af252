"""Batch command-line front end.

Subcommands mirror the pipeline stages: ``synth`` (clean scenes), ``fields``
(artifact-field bank), ``dataset`` (corrupted training pairs),
``reconstruct`` (3p/2p/sht on sub-image sets), ``train``, ``denoise``,
``eval`` (Table-style PSNR report), and ``gradcheck``.

Defaults follow the desk-scale profile (128x128 images, 600 train / 150
test pairs, 15 epochs, base_channels 16) so the whole pipeline runs on a
laptop CPU. A JSON config file may preset any flag (``--config``); explicit
flags win. Every command echoes its fully resolved configuration to
``<out>/run_config.json`` and appends to ``<out>/commands.log``. With a
fixed ``--seed`` every command is bit-reproducible; ``--threads 1``
additionally pins all thread pools.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
divergence.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

import numpy as np

from . import backend
from .bubbles import SceneConfig, compose_scene, save_scene_manifest, scene_record
from .errors import (ConfigError, DivergenceError, FormatError, InvalidInputError)
from .forward import MotionSpec, ScenePattern, acquire_set, load_set, save_set
from .image import load_imf1, save_imf1, save_u16
from .metrics import NotchSpec, evaluate, notch_filter
from .models import (ArchConfig, TrainConfig, build_network, dataset_psnr, denoise,
                     load_checkpoint, load_pairs, save_history, train)
from .nn.gradcheck import format_report, standard_layer_checks
from .noise import (AugmentConfig, DatasetManifest, build_dataset, build_field_bank,
                    load_field_bank, save_field_bank)

DESK_DIMS = 128
DESK_COUNT = 750
DESK_SPLIT = 0.8
DESK_EPOCHS = 15
DESK_BASE_CHANNELS = 16


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    if backend.using_numba:
        import numba

        numba.set_num_threads(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        pass


def _echo(out_dir: Path, command: str, ns: argparse.Namespace, argv: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {"command": command, **{k: v for k, v in vars(ns).items() if k != "func"}}
    (out_dir / "run_config.json").write_text(json.dumps(resolved, indent=2, default=str))
    with open(out_dir / "commands.log", "a") as f:
        f.write(shlex.join(["ossikit", *argv]) + "\n")


def _scene_config(ns) -> SceneConfig:
    return SceneConfig(
        height=ns.height,
        width=ns.width,
        count_range=(ns.count_min, ns.count_max),
        scale_range=(ns.scale_min, ns.scale_max),
        bottom_bias=ns.bottom_bias,
        background=ns.background,
        seed=ns.seed,
    )


def _add_scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--height", type=int, default=DESK_DIMS)
    p.add_argument("--width", type=int, default=DESK_DIMS)
    p.add_argument("--count-min", type=int, default=4, help="min bubbles per scene")
    p.add_argument("--count-max", type=int, default=18, help="max bubbles per scene")
    p.add_argument("--scale-min", type=float, default=3.0)
    p.add_argument("--scale-max", type=float, default=14.0)
    p.add_argument("--bottom-bias", type=float, default=2.0)
    p.add_argument("--background", type=float, default=0.05)


def cmd_synth(ns, argv) -> int:
    out = Path(ns.out)
    _echo(out, "synth", ns, argv)
    _set_threads(ns.threads)
    cfg = _scene_config(ns)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(ns.count):
        rng = np.random.default_rng((ns.seed, i))
        img, specs = compose_scene(cfg, rng)
        rel = f"scenes/{i:05d}.imf1"
        save_imf1(img, out / rel)
        if ns.png:
            save_u16(img, out / f"scenes/{i:05d}.png")
        records.append(scene_record(i, rel, [ns.seed, i], specs))
        if ns.acquire != "none":
            phases = (0.0, np.pi) if ns.acquire == "2p" else (0.0, 2 * np.pi / 3, 4 * np.pi / 3)
            scene = ScenePattern(img, np.full_like(img, np.float32(ns.defocus)), ns.freq)
            motion = None
            if ns.motion_dx or ns.motion_dy or ns.drift != 1.0:
                motion = MotionSpec(ns.motion_dx, ns.motion_dy, ns.drift)
            sset = acquire_set(scene, phases, motion)
            save_set(sset, out / f"sets/{i:05d}")
    save_scene_manifest(out / "scenes.json", cfg, records)
    print(f"synth: wrote {ns.count} scenes to {out}")
    return 0


def cmd_fields(ns, argv) -> int:
    out = Path(ns.out)
    _echo(out, "fields", ns, argv)
    _set_threads(ns.threads)
    fields = build_field_bank(ns.per_kind, ns.height, ns.width, ns.seed,
                              spatial_freq=ns.spatial_freq)
    save_field_bank(fields, out)
    print(f"fields: wrote {len(fields)} artifact fields to {out}")
    return 0


def cmd_dataset(ns, argv) -> int:
    out = Path(ns.out)
    _echo(out, "dataset", ns, argv)
    _set_threads(ns.threads)
    if ns.dry_run:
        bank = []
    elif ns.bank:
        bank = load_field_bank(ns.bank)
    else:
        # oversampled 2x so crops can raise or lower the artifact frequency
        bank = build_field_bank(ns.bank_per_kind, 2 * ns.height, 2 * ns.width, ns.seed + 1)
    augment = AugmentConfig(crop_range=(ns.crop_min, ns.crop_max),
                            scale_range=(ns.strength_min, ns.strength_max))
    manifest = build_dataset(
        _scene_config(ns), bank, ns.count, ns.split, ns.seed,
        out_dir=out, augment_cfg=augment, dry_run=ns.dry_run,
    )
    bal = manifest.balance()
    mode = "dry-run manifest" if ns.dry_run else "dataset"
    print(f"dataset: {mode} with {manifest.count} items, balance {bal}, at {out}")
    return 0


def cmd_reconstruct(ns, argv) -> int:
    out = Path(ns.out)
    _echo(out, "reconstruct", ns, argv)
    _set_threads(ns.threads)
    src = Path(ns.input)
    set_dirs = [src] if (src / "set.json").is_file() else sorted(
        d for d in src.iterdir() if (d / "set.json").is_file()
    )
    if not set_dirs:
        raise InvalidInputError(f"--input {src}: no sub-image set (set.json) found")
    kwargs = {"mirror_pad": ns.mirror_pad} if ns.kind == "sht" else {}
    from .reconstruct import reconstruct

    for d in set_dirs:
        sset = load_set(d)
        rec = reconstruct(sset, ns.kind, **kwargs)
        stem = f"{d.name}_{ns.kind}"
        save_imf1(rec, out / f"{stem}.imf1")
        if ns.png:
            from .image import normalize

            save_u16(normalize(rec), out / f"{stem}.png")
    print(f"reconstruct: {len(set_dirs)} set(s) -> {out}")
    return 0


def cmd_train(ns, argv) -> int:
    out = Path(ns.out)
    _echo(out, "train", ns, argv)
    _set_threads(ns.threads)
    data_dir = Path(ns.data)
    manifest = DatasetManifest.load(data_dir / "manifest.json")
    noisy, clean, _ = load_pairs(manifest, data_dir, "train", kind=ns.kind)
    arch_cfg = ArchConfig(ns.arch, base_channels=ns.base_channels,
                          height=manifest.height, width=manifest.width, depth=ns.depth)
    net = build_network(arch_cfg, rng=np.random.default_rng((ns.seed, 0)))
    tcfg = TrainConfig(epochs=ns.epochs, batch_size=ns.batch_size, lr=ns.lr, seed=ns.seed,
                       val_fraction=ns.val_fraction, checkpoint_every=ns.checkpoint_every)
    history = train(net, noisy, clean, tcfg, out_dir=out)
    net.save(out / "model_final.nnc1")
    save_history(history, out / "history.csv")
    last = history[-1] if history else None
    tail = f", final val_psnr {last['val_psnr']:.2f} dB" if last and last["val_psnr"] else ""
    print(f"train: {ns.arch} for {ns.epochs} epochs, {net.num_params()} params{tail}")
    return 0


def cmd_denoise(ns, argv) -> int:
    out = Path(ns.out)
    _echo(out, "denoise", ns, argv)
    _set_threads(ns.threads)
    net = load_checkpoint(ns.checkpoint)
    src = Path(ns.input)
    paths = [src] if src.is_file() else sorted(src.glob("*.imf1"))
    if not paths:
        raise InvalidInputError(f"--input {src}: no .imf1 images found")
    for p in paths:
        res = denoise(net, load_imf1(p))
        save_imf1(res, out / p.name)
        if ns.png:
            save_u16(res, out / (p.stem + ".png"))
    print(f"denoise: {len(paths)} image(s) -> {out}")
    return 0


def _parse_notch(text: str) -> NotchSpec:
    kwargs = {}
    for part in text.split(","):
        if not part.strip():
            continue
        try:
            key, val = part.split("=")
            kwargs[key.strip()] = float(val)
        except ValueError as e:
            raise ConfigError(f"--notch: cannot parse {part!r}; use center=..,bandwidth=..,harmonics=..") from e
    if "harmonics" in kwargs:
        kwargs["harmonics"] = int(kwargs["harmonics"])
    try:
        return NotchSpec(**kwargs)
    except TypeError as e:
        raise ConfigError(f"--notch: bad keys in {text!r}") from e


def cmd_eval(ns, argv) -> int:
    out = Path(ns.out)
    _echo(out, "eval", ns, argv)
    _set_threads(ns.threads)
    data_dir = Path(ns.data)
    manifest = DatasetManifest.load(data_dir / "manifest.json")
    methods = []
    if ns.identity:
        methods.append(("identity", lambda img: img))
    if ns.notch:
        spec = _parse_notch(ns.notch)
        methods.append(("notch", lambda img, s=spec: notch_filter(img, s)))
    for entry in ns.model or []:
        if "=" not in entry:
            raise ConfigError(f"--model expects NAME=CHECKPOINT, got {entry!r}")
        name, path = entry.split("=", 1)
        net = load_checkpoint(path)
        methods.append((name, lambda img, n=net: denoise(n, img)))
    if not methods:
        raise ConfigError("eval: give at least one of --identity, --notch, --model")
    report = evaluate(methods, manifest, data_dir, shard=ns.shard)
    table = report.table()
    report.save(out / "report.json")
    (out / "report.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_gradcheck(ns, argv) -> int:
    if ns.out:
        _echo(Path(ns.out), "gradcheck", ns, argv)
    _set_threads(ns.threads)
    results = standard_layer_checks(tol=ns.tol)
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ossikit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", type=str, default=None, help="JSON file presetting flags")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
        if needs_out:
            p.add_argument("--out", type=str, required=True)

    p = sub.add_parser("synth", help="generate clean bubble scenes")
    common(p)
    _add_scene_flags(p)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--png", action="store_true")
    p.add_argument("--acquire", choices=("none", "2p", "3p"), default="none",
                   help="also emit simulated sub-image sets")
    p.add_argument("--freq", type=float, default=1.0 / 8.0)
    p.add_argument("--defocus", type=float, default=0.3)
    p.add_argument("--motion-dx", type=float, default=0.0)
    p.add_argument("--motion-dy", type=float, default=0.0)
    p.add_argument("--drift", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fields", help="build an artifact-field bank")
    common(p)
    p.add_argument("--per-kind", type=int, default=8)
    p.add_argument("--height", type=int, default=DESK_DIMS)
    p.add_argument("--width", type=int, default=DESK_DIMS)
    p.add_argument("--spatial-freq", type=float, default=None,
                   help="pin the pattern frequency (cycles/pixel) instead of sampling it")
    p.set_defaults(func=cmd_fields)

    p = sub.add_parser("dataset", help="build a corrupted (clean, noisy) dataset")
    common(p)
    _add_scene_flags(p)
    p.add_argument("--count", type=int, default=DESK_COUNT)
    p.add_argument("--split", type=float, default=DESK_SPLIT)
    p.add_argument("--bank", type=str, default=None, help="field bank directory (from `fields`)")
    p.add_argument("--bank-per-kind", type=int, default=8,
                   help="bank size per kind when --bank is not given")
    p.add_argument("--crop-min", type=float, default=0.5)
    p.add_argument("--crop-max", type=float, default=1.0)
    p.add_argument("--strength-min", type=float, default=0.5)
    p.add_argument("--strength-max", type=float, default=1.5)
    p.add_argument("--dry-run", action="store_true", help="manifest only, no pixels")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("reconstruct", help="reconstruct sub-image set directories")
    common(p)
    p.add_argument("--kind", choices=("3p", "2p", "sht"), required=True)
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--mirror-pad", type=int, default=0)
    p.add_argument("--png", action="store_true")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="train a denoising model")
    common(p)
    p.add_argument("--arch", choices=("dae", "unet", "plaincnn"), required=True)
    p.add_argument("--data", type=str, required=True, help="dataset directory")
    p.add_argument("--epochs", type=int, default=DESK_EPOCHS)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--base-channels", type=int, default=DESK_BASE_CHANNELS)
    p.add_argument("--depth", type=int, default=None, help="plaincnn stack depth")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--kind", choices=("2p", "sht"), default=None,
                   help="train on a single artifact kind instead of the joint set")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="run a checkpoint over images")
    common(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--png", action="store_true")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="PSNR report over a dataset shard")
    common(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--shard", choices=("train", "test"), default="test")
    p.add_argument("--model", action="append", default=None, metavar="NAME=CHECKPOINT")
    p.add_argument("--identity", action="store_true", help="score the noisy input itself")
    p.add_argument("--notch", type=str, default=None,
                   metavar="center=..,bandwidth=..,harmonics=..")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference layer verification")
    common(p, needs_out=False)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    try:
        overrides = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"--config {path}: file not found") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"--config {path}: invalid JSON ({e})") from e
    if not isinstance(overrides, dict):
        raise ConfigError(f"--config {path}: expected a JSON object")
    command = next((a for a in argv if not a.startswith("-")), None)
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    sp = sub_actions[0].choices.get(command)
    if sp is None:
        return
    valid = {a.dest for a in sp._actions}
    for key in overrides:
        if key not in valid:
            raise ConfigError(f"--config {path}: unknown key {key!r} for command {command!r}")
    sp.set_defaults(**overrides)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        ns = parser.parse_args(argv)
        return ns.func(ns, argv)
    except (ConfigError, InvalidInputError) as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 2
    except FormatError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 3
    except DivergenceError as e:
        print(f"error: divergence: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
