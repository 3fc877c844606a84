"""Command-line surface: thin adapters over the library modules.

Subcommands: `dataset build`, `train`, `eval`, `detect`, `baseline`,
`analyze dmax-curve`, `analyze gap-stats`, `scaling-study`, `gradcheck`.
No numeric logic lives here; commands parse flags, call one module function,
and print stable comma-separated tables.

Exit codes: 0 success; 1 runtime error from a module (one-line diagnostic on
stderr); 2 bad flag, bad config key, or usage error; 3 unknown (sub)command.

Settings files (`--config FILE`) hold `key = value` lines ('#' comments);
keys are the long flag names with dashes as underscores. Explicit flags
override file values. Unknown keys are rejected. The environment variable
CEF_THREADS caps intra-process BLAS parallelism for all numeric commands.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import BadFlag, CefError, UnknownCommand

USAGE = """usage: cef <command> [options]

commands:
  dataset build       synthesize or process sources into a labeled scenario
  train               train a detector on a manifest
  eval                score a checkpoint on a manifest split
  detect              classify PGM images with a checkpoint
  baseline            fit and score the gap-count threshold rule
  analyze dmax-curve  tabulate the peak-difference curve over gamma
  analyze gap-stats   tabulate gap-count distributions per class
  scaling-study       accuracy of both detectors vs training-set size
  gradcheck           finite-difference check of a detector's gradients

run `cef <command> --help` for options; `--config FILE` merges key = value
settings under the flags of any command.
"""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t)


def _parse_config_file(path: str) -> dict[str, str]:
    if not os.path.isfile(path):
        raise BadFlag(f"config file not found: {path}")
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise BadFlag(f"{path}:{line_no}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _merge_config(parser: argparse.ArgumentParser, args: argparse.Namespace,
                  defaults: dict) -> argparse.Namespace:
    """Layer values: parser defaults (None) < config file < explicit flags."""
    types = {}
    for action in parser._actions:
        if action.dest not in ("help", "config"):
            types[action.dest] = action.type or str
    file_values = _parse_config_file(args.config) if getattr(args, "config", None) else {}
    for key in file_values:
        if key not in types:
            raise BadFlag(f"unknown config key {key!r}")
    for dest, default in defaults.items():
        if getattr(args, dest, None) is not None:
            continue
        if dest in file_values:
            setattr(args, dest, types[dest](file_values[dest]))
        else:
            setattr(args, dest, default)
    return args


def _parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog, add_help=True, allow_abbrev=False)
    p.add_argument("--config", help="settings file of key = value lines")
    return p


def _add_train_flags(p: argparse.ArgumentParser) -> dict:
    p.add_argument("--batch-size", type=int)
    p.add_argument("--base-lr", type=float)
    p.add_argument("--lr-step", type=int)
    p.add_argument("--lr-factor", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-every", type=int)
    p.add_argument("--val-every", type=int)
    from .nn import TrainConfig
    d = TrainConfig()
    return {"batch_size": d.batch_size, "base_lr": d.base_lr, "lr_step": d.lr_step,
            "lr_factor": d.lr_factor, "max_iter": d.max_iter, "momentum": d.momentum,
            "weight_decay": d.weight_decay, "seed": d.seed,
            "log_every": d.log_every, "val_every": d.val_every}


def _train_config(args) -> "TrainConfig":
    from .nn import TrainConfig
    return TrainConfig(batch_size=args.batch_size, base_lr=args.base_lr,
                       lr_step=args.lr_step, lr_factor=args.lr_factor,
                       max_iter=args.max_iter, momentum=args.momentum,
                       weight_decay=args.weight_decay, seed=args.seed,
                       log_every=args.log_every, val_every=args.val_every)


def _cmd_dataset(argv) -> int:
    if not argv or argv[0] != "build":
        raise UnknownCommand(f"unknown dataset subcommand {argv[:1]}; expected 'build'")
    p = _parser("cef dataset build")
    p.add_argument("--out", required=True)
    p.add_argument("--src")
    p.add_argument("--scenario")
    p.add_argument("--gammas", type=_floats)
    p.add_argument("--qualities", type=_ints)
    p.add_argument("--patch", type=int)
    p.add_argument("--sizes", type=_ints)
    p.add_argument("--seed", type=int)
    p.add_argument("--smoothness", type=float)
    p.add_argument("--crop-mode", dest="crop_mode")
    args = p.parse_args(argv[1:])
    from .dataset import ScenarioConfig, build_scenario
    d = ScenarioConfig()
    args = _merge_config(p, args, {
        "scenario": d.scenario, "gammas": d.gammas, "qualities": d.qualities,
        "patch": d.patch, "sizes": d.sizes, "seed": d.seed,
        "smoothness": d.smoothness, "crop_mode": d.crop_mode, "src": None,
        "out": args.out,
    })
    if len(args.sizes) != 3:
        raise BadFlag("--sizes needs three comma-separated counts: train,val,test")
    cfg = ScenarioConfig(scenario=args.scenario, gammas=args.gammas,
                         qualities=args.qualities, patch=args.patch,
                         sizes=tuple(args.sizes), seed=args.seed,
                         smoothness=args.smoothness, crop_mode=args.crop_mode)
    manifest = build_scenario(cfg, args.out, src_dir=args.src)
    print(f"manifest,{os.path.join(args.out, 'manifest.csv')}")
    print(f"entries,{len(manifest.entries)}")
    return 0


def _cmd_train(argv) -> int:
    p = _parser("cef train")
    p.add_argument("--model", choices=("pcnn", "hcnn"))
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--init")
    p.add_argument("--log")
    defaults = _add_train_flags(p)
    args = p.parse_args(argv)
    defaults.update({"model": None, "manifest": None, "out": None,
                     "init": None, "log": None})
    args = _merge_config(p, args, defaults)
    for req in ("model", "manifest", "out"):
        if getattr(args, req) is None:
            raise BadFlag(f"--{req} is required (flag or config)")
    from .dataset import DatasetManifest
    from .nn import load_checkpoint
    from .trainer import train
    manifest = DatasetManifest.load(args.manifest)
    init = load_checkpoint(args.init) if args.init else None
    ckpt, log = train(args.model, manifest, _train_config(args), args.out, init=init)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write(log.to_csv())
    last_val = log.vals[-1]
    print(f"checkpoint,{args.out}")
    print(f"best_checkpoint,{args.out}.best")
    print(f"final_val_accuracy,{last_val[2]:.6f}")
    return 0


def _cmd_eval(argv) -> int:
    p = _parser("cef eval")
    p.add_argument("--ckpt")
    p.add_argument("--manifest")
    p.add_argument("--split")
    p.add_argument("--out")
    args = p.parse_args(argv)
    args = _merge_config(p, args, {"ckpt": None, "manifest": None,
                                   "split": "test", "out": None})
    for req in ("ckpt", "manifest"):
        if getattr(args, req) is None:
            raise BadFlag(f"--{req} is required (flag or config)")
    from .dataset import DatasetManifest
    from .trainer import evaluate
    report = evaluate(args.ckpt, DatasetManifest.load(args.manifest), args.split)
    csv = report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv)
    sys.stdout.write(csv)
    return 0


def _cmd_detect(argv) -> int:
    p = _parser("cef detect")
    p.add_argument("--ckpt")
    p.add_argument("--mode", choices=("pixel", "histogram"))
    p.add_argument("images", nargs="*")
    args = p.parse_args(argv)
    args = _merge_config(p, args, {"ckpt": None, "mode": None, "images": args.images})
    if args.ckpt is None or args.mode is None:
        raise BadFlag("--ckpt and --mode are required (flag or config)")
    if not args.images:
        raise BadFlag("no input images given")
    from .trainer import detect
    rows = detect(args.ckpt, args.images, args.mode)
    print("path,label,confidence")
    for path, (label, conf) in zip(args.images, rows):
        print(f"{path},{label},{conf:.6f}")
    return 0


def _cmd_baseline(argv) -> int:
    p = _parser("cef baseline")
    p.add_argument("--manifest")
    p.add_argument("--out")
    args = p.parse_args(argv)
    args = _merge_config(p, args, {"manifest": None, "out": None})
    if args.manifest is None:
        raise BadFlag("--manifest is required (flag or config)")
    from .dataset import DatasetManifest
    from .trainer import baseline_eval
    report = baseline_eval(DatasetManifest.load(args.manifest))
    csv = report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv)
    sys.stdout.write(csv)
    return 0


def _cmd_analyze(argv) -> int:
    if not argv or argv[0] not in ("dmax-curve", "gap-stats"):
        raise UnknownCommand(
            f"unknown analyze subcommand {argv[:1]}; expected 'dmax-curve' or 'gap-stats'")
    sub, rest = argv[0], argv[1:]
    if sub == "dmax-curve":
        p = _parser("cef analyze dmax-curve")
        p.add_argument("--from", dest="gamma_from", type=float)
        p.add_argument("--to", dest="gamma_to", type=float)
        p.add_argument("--steps", type=int)
        args = p.parse_args(rest)
        args = _merge_config(p, args, {"gamma_from": 0.2, "gamma_to": 3.0, "steps": 57})
        from .enhance import dmax_curve
        table = dmax_curve(args.gamma_from, args.gamma_to, args.steps)
        print("gamma,dmax_over_255")
        for g, v in table:
            print(f"{g:.6f},{v:.6f}")
        return 0
    p = _parser("cef analyze gap-stats")
    p.add_argument("--manifest")
    p.add_argument("--classes",
                   help="comma list of 'original' and/or gamma values; default: all")
    args = p.parse_args(rest)
    args = _merge_config(p, args, {"manifest": None, "classes": None})
    if args.manifest is None:
        raise BadFlag("--manifest is required (flag or config)")
    from .dataset import DatasetManifest
    from .enhance import ORIGINAL, gap_distribution
    manifest = DatasetManifest.load(args.manifest)
    if args.classes is None:
        classes = [ORIGINAL] + manifest.gammas()
    else:
        classes = [tok if tok == ORIGINAL else float(tok)
                   for tok in args.classes.split(",") if tok]
    tables = gap_distribution(manifest, classes)
    print("class,gap_count,frequency")
    for cls in classes:
        for count in sorted(tables[cls]):
            print(f"{cls},{count},{tables[cls][count]}")
    return 0


def _cmd_scaling_study(argv) -> int:
    p = _parser("cef scaling-study")
    p.add_argument("--manifest")
    p.add_argument("--sizes", type=_ints)
    p.add_argument("--work-dir", dest="work_dir")
    p.add_argument("--study-seed", dest="study_seed", type=int)
    defaults = _add_train_flags(p)
    args = p.parse_args(argv)
    defaults.update({"manifest": None, "sizes": None, "work_dir": None, "study_seed": 0})
    args = _merge_config(p, args, defaults)
    if args.manifest is None or args.sizes is None:
        raise BadFlag("--manifest and --sizes are required (flag or config)")
    import tempfile
    from .dataset import DatasetManifest
    from .trainer import scaling_study, scaling_table_csv
    manifest = DatasetManifest.load(args.manifest)
    work = args.work_dir or tempfile.mkdtemp(prefix="cef-scaling-")
    rows = scaling_study(manifest, list(args.sizes), _train_config(args), work,
                         seed=args.study_seed)
    sys.stdout.write(scaling_table_csv(rows))
    return 0


def _cmd_gradcheck(argv) -> int:
    p = _parser("cef gradcheck")
    p.add_argument("--model", choices=("pcnn", "hcnn"))
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--batch", type=int)
    args = p.parse_args(argv)
    args = _merge_config(p, args, {"model": None, "seed": 1, "eps": 1e-5,
                                   "samples": 8, "batch": 6})
    if args.model is None:
        raise BadFlag("--model is required (flag or config)")
    import numpy as np
    from threadpoolctl import threadpool_limits
    from .models import build_hcnn, build_pcnn
    from .nn import grad_check
    from .trainer import thread_cap
    rng = np.random.default_rng(args.seed)
    if args.model == "pcnn":
        net = build_pcnn(32, 32, seed=args.seed, dtype=np.float64)
        batch = rng.random((args.batch, 1, 32, 32))
    else:
        net = build_hcnn(seed=args.seed, dtype=np.float64)
        batch = rng.random((args.batch, 1, 1, 256))
        batch /= batch.sum(axis=3, keepdims=True)
    labels = np.arange(args.batch) % 2
    with threadpool_limits(limits=thread_cap()):
        err = grad_check(net, batch, labels, epsilon=args.eps,
                         samples_per_array=args.samples, seed=args.seed)
    print(f"max_relative_error,{err:.3e}")
    return 0 if err < 1e-4 else 1


_COMMANDS = {
    "dataset": _cmd_dataset,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "detect": _cmd_detect,
    "baseline": _cmd_baseline,
    "analyze": _cmd_analyze,
    "scaling-study": _cmd_scaling_study,
    "gradcheck": _cmd_gradcheck,
}


def run(argv) -> int:
    """Dispatch one command line; returns the process exit code."""
    if not argv or argv[0] in ("-h", "--help"):
        sys.stderr.write(USAGE)
        return 0 if argv else 2
    cmd = argv[0]
    handler = _COMMANDS.get(cmd)
    if handler is None:
        sys.stderr.write(f"error: unknown command {cmd!r}\n{USAGE}")
        return 3
    try:
        return handler(argv[1:])
    except UnknownCommand as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except BadFlag as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except SystemExit as exc:  # argparse --help (0) or usage errors (2)
        code = exc.code if isinstance(exc.code, int) else 2
        return code
    except CefError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))
