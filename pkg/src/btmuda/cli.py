"""Command-line interface: generate data, train, evaluate, verify, export.

Subcommands
-----------
gen-synth        render the synthetic multi-domain benchmark to disk
train            run the full training loop, writing log + checkpoints
eval             score a checkpoint on a labeled domain (fusion or average)
gradcheck        finite-difference audit of every loss on a tiny 64-bit model
export-features  dump the fusion-head input features as CSV

Exit codes: 0 success, 2 configuration/usage, 3 I/O or data, 4 numeric
failure, 5 missing labels, 6 gradient-check failure.

The environment variable BTMUDA_THREADS caps internal parallelism (it is
applied by the package root before numpy loads); every command writes the
defaults-resolved configuration beside its outputs so a run can be reproduced
from its artifacts alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import secrets
import sys
from pathlib import Path

from .data.dataset import Dataset, load_domain_dir, write_domain_dir
from .data.synth import gen_domain, make_domain_specs
from .diffcore.checkpoint import check_shapes, load_checkpoint
from .errors import BtmudaError, ConfigError, DataError, GradCheckFailure
from .evalmetrics import (evaluate, export_features, format_report_table,
                          write_per_sample_csv, write_report_csv)
from .models.network import param_shapes
from .runconfig import (RunConfig, config_from_file, synth_dict,
                        write_effective_config)
from .training.loop import train
from .training.presets import get_preset
from .training.verify import COMPONENTS, TINY_TOL, run_gradcheck

MANIFEST_NAME = "manifest.json"
EFFECTIVE_CONFIG_NAME = "effective_config.json"
TARGET_EVAL_DIR = "T_eval"


# ---------------------------------------------------------------------------
# shared helpers


def _resolve_seed(rc: RunConfig) -> RunConfig:
    """Pin the run seed.  In deterministic mode the configured seed is used
    as-is; otherwise a fresh seed is drawn and recorded, so the effective
    config written next to the outputs still reproduces the run exactly."""
    if rc.deterministic:
        return rc
    seed = secrets.randbits(31)
    print(f"deterministic=false: drew seed {seed}")
    return dataclasses.replace(rc, seed=seed, deterministic=True)


def _load_config_near(config_arg, ckpt_path) -> RunConfig:
    """--config if given, else the effective config written beside the
    checkpoint."""
    if config_arg is not None:
        return config_from_file(config_arg)
    sibling = Path(ckpt_path).parent / EFFECTIVE_CONFIG_NAME
    if sibling.is_file():
        return config_from_file(sibling)
    raise ConfigError(
        f"no --config given and no {EFFECTIVE_CONFIG_NAME} beside {ckpt_path}")


def _load_model_from(config_arg, ckpt_path):
    rc = _load_config_near(config_arg, ckpt_path)
    store = load_checkpoint(ckpt_path)
    check_shapes(store, param_shapes(rc.model))
    return rc, store, get_preset(rc.preset)


def load_training_root(root, image_size):
    """Discover (sources, target) training datasets under a data directory.

    With a manifest.json the recorded roles and split names are authoritative;
    otherwise every immediate subdirectory holding images is taken, labeled
    ones as sources and the single unlabeled one as the target (directories
    named *_eval are ignored in that fallback).
    """
    base = Path(root)
    if not base.is_dir():
        raise DataError(f"data directory not found: {root}")
    sources, target = [], None
    manifest = base / MANIFEST_NAME
    if manifest.is_file():
        try:
            with open(manifest, encoding="utf-8") as fh:
                doc = json.load(fh)
            entries = doc["domains"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"unreadable manifest {manifest}: {exc!r}") from None
        for entry in entries:
            if entry.get("split") != "train":
                continue
            ds = load_domain_dir(base / entry["dir"], image_size=image_size,
                                 role=entry.get("role"))
            if entry.get("role") == "source":
                sources.append(ds)
            else:
                target = ds
    else:
        for child in sorted(p for p in base.iterdir() if p.is_dir()):
            if child.name.endswith("_eval") or not (child / "images").is_dir():
                continue
            ds = load_domain_dir(child, image_size=image_size)
            if ds.labels is not None:
                sources.append(ds)
            elif target is None:
                target = ds
            else:
                raise DataError(
                    f"multiple unlabeled domains under {root}; add a manifest "
                    "to say which one is the target")
    if not sources:
        raise DataError(f"no labeled source domain found under {root}")
    if target is None:
        raise DataError(f"no unlabeled target domain found under {root}")
    return sources, target


def _synthesize_in_memory(synth_cfg):
    specs = make_domain_specs(synth_cfg)
    sources = [gen_domain(synth_cfg, s) for s in specs[:-1]]
    target = gen_domain(synth_cfg, specs[-1])
    return sources, target


# ---------------------------------------------------------------------------
# commands


def cmd_gen_synth(args) -> int:
    rc = config_from_file(args.config)
    if rc.synth is None:
        raise ConfigError("gen-synth needs a data.synthetic section, "
                          "but the config points at a directory")
    cfg = rc.synth
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    entries = []
    specs = make_domain_specs(cfg)
    for spec in specs:
        ds = gen_domain(cfg, spec, split="train")
        labeled = spec.role == "source"
        write_domain_dir(out, ds, with_labels=labeled)
        entries.append(_manifest_entry(spec, spec.id, "train", len(ds), labeled))
        print(f"  {spec.id}/  {len(ds)} images"
              f"  ({'labeled ' + spec.role if labeled else 'unlabeled target'})")

    tgt_spec = specs[-1]
    ev = gen_domain(cfg, tgt_spec, count=cfg.eval_samples, split="eval")
    ev = Dataset(images=ev.images, labels=ev.labels,
                 domain_id=TARGET_EVAL_DIR, role="target")
    write_domain_dir(out, ev, with_labels=True)
    entries.append(_manifest_entry(tgt_spec, TARGET_EVAL_DIR, "eval", len(ev), True))
    print(f"  {TARGET_EVAL_DIR}/  {len(ev)} images  (labeled target eval split)")

    manifest = {"config": synth_dict(cfg), "domains": entries}
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    write_effective_config(rc, out / EFFECTIVE_CONFIG_NAME)
    print(f"wrote {out / MANIFEST_NAME}")
    return 0


def _manifest_entry(spec, dirname, split, count, labeled):
    return {
        "id": spec.id, "dir": dirname, "role": spec.role, "split": split,
        "count": count, "labeled": labeled,
        "style": {"gain": spec.gain, "bias": spec.bias,
                  "texture": spec.texture, "blur": spec.blur},
    }


def cmd_train(args) -> int:
    rc = config_from_file(args.config)
    rc = _resolve_seed(rc)
    data_root = args.data if args.data is not None else rc.data_dir
    if data_root is not None:
        # pin the actual data source into the recorded config
        rc = dataclasses.replace(rc, synth=None, data_dir=str(data_root))
        sources, target = load_training_root(data_root, rc.model.image_size)
        if len(sources) != rc.model.m_sources:
            raise ConfigError(
                f"model.m_sources = {rc.model.m_sources} but {data_root} holds "
                f"{len(sources)} source domains")
    else:
        sources, target = _synthesize_in_memory(rc.synth)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(rc, out / EFFECTIVE_CONFIG_NAME)

    train(sources, target, rc.model, get_preset(rc.preset), rc.schedule,
          rc.optimizer, rc.augment, rc.batch_size, rc.seed,
          out_dir=out, checkpoint_every=rc.checkpoint_every,
          resume_from=args.resume, print_every=args.print_every)
    print(f"done: {rc.schedule.iter_total} iterations, preset {rc.preset}; "
          f"wrote {out / 'checkpoint_final.bin'} and {out / 'training_log.csv'}")
    return 0


def cmd_eval(args) -> int:
    rc, store, preset = _load_model_from(args.config, args.ckpt)
    ds = load_domain_dir(args.data, image_size=rc.model.image_size)
    report = evaluate(ds, store, rc.model, preset, mode=args.mode)
    report_dir = Path(args.report)
    report_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, report_dir / f"report_{args.mode}.csv")
    write_per_sample_csv(report, report_dir / f"per_sample_{args.mode}.csv")
    print(format_report_table(report))
    return 0


def cmd_gradcheck(args) -> int:
    preset_name, seed = "exp10", 0
    if args.config is not None:
        rc = config_from_file(args.config)
        preset_name, seed = rc.preset, rc.seed
    if args.seed is not None:
        seed = args.seed

    reports = run_gradcheck(seed=seed, max_checks=args.max_checks,
                            preset_name=preset_name)
    print(f"gradcheck: preset {preset_name}, seed {seed}, "
          f"tolerance {TINY_TOL:g}")
    print(f"{'loss':<16} {'max rel err':>12} {'checked':>8}  worst parameter")
    for name in (*COMPONENTS, "total"):
        r = reports[name]
        print(f"{name:<16} {r.max_rel_err:>12.3e} {r.checked:>8}  "
              f"{_format_where(r)}")
    for path_prefix in ("cnn/", "vit/", "heads/"):
        worst = max((err for r in reports.values()
                     for p, err in r.per_param.items()
                     if p.startswith(path_prefix)), default=0.0)
        print(f"path {path_prefix:<7} max rel err {worst:.3e}")

    bad = {n: r for n, r in reports.items() if not r.passed(TINY_TOL)}
    if bad:
        name, worst = max(bad.items(), key=lambda kv: kv[1].max_rel_err)
        raise GradCheckFailure(
            f"{name} gradient disagrees with finite differences: parameter "
            f"{_format_where(worst)} rel err {worst.max_rel_err:.3e} "
            f"> {TINY_TOL:g}")
    print("PASS")
    return 0


def _format_where(report):
    if not report.worst_param:
        return "-"
    idx = ",".join(str(int(i)) for i in report.worst_index)
    return f"{report.worst_param}[{idx}]"


def cmd_export_features(args) -> int:
    rc, store, preset = _load_model_from(args.config, args.ckpt)
    ds = load_domain_dir(args.data, image_size=rc.model.image_size)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    export_features(ds, store, rc.model, preset, out)
    print(f"wrote {len(ds) + 1} rows to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btmuda",
        description="Bi-level multi-source domain adaptation, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="render the synthetic benchmark")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_gen_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--data", help="data directory (default: config's data section)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--print-every", type=int, default=100,
                   help="loss summary interval in iterations (default 100)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on labeled data")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="one labeled domain directory")
    p.add_argument("--mode", choices=("fusion", "average"), default="fusion")
    p.add_argument("--report", required=True, help="directory for report CSVs")
    p.add_argument("--config", help="run config JSON (default: file beside --ckpt)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the losses")
    p.add_argument("--config", help="run config JSON (for preset and seed)")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--max-checks", type=int, default=250,
                   help="parameter entries sampled per loss (default 250)")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("export-features", help="dump fusion-input features to CSV")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="one domain directory")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--config", help="run config JSON (default: file beside --ckpt)")
    p.set_defaults(fn=cmd_export_features)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


def entry(argv=None) -> int:
    """Console-script entry point: map package errors to fixed exit codes."""
    import os
    raw = os.environ.get("BTMUDA_THREADS")
    try:
        if raw is not None and raw.strip() and (
                not raw.strip().isdigit() or int(raw) < 1):
            raise ConfigError(
                f"BTMUDA_THREADS must be a positive integer, got '{raw}'")
        return main(argv)
    except BtmudaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(entry())
