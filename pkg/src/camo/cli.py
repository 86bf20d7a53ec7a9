"""Command-line entry point.

Subcommands: generate, train, eval-lodo, ablate, export-embeddings,
inspect-config. All are driven by one config file plus dotted-key
overrides; every run echoes its resolved effective config and records it
in run.json under the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from ._kernels import BACKEND
from .checkpoint import load_checkpoint
from .config import config_digest, resolve_config
from .data import DomainSplit, load_dataset, save_dataset
from .errors import CamoError, ConfigError
from .harness import export_embeddings, run_ablation, run_lodo
from .scm import scm_generate
from .engine import TOGGLES, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camo",
        description="Adversarial multimodal domain-generalization trainer and benchmark")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="TOML or JSON experiment config")
        p.add_argument("--out", help="output directory (default: $CAMO_OUT_ROOT/<subcommand>)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key, e.g. train.gamma_max=0")
        p.add_argument("--seed", type=int, help="master seed override")

    common(sub.add_parser("generate", help="sample the synthetic benchmark to disk"))
    common(sub.add_parser("train", help="train one model on a dataset"))
    common(sub.add_parser("eval-lodo", help="leave-one-domain-out evaluation"))
    p = sub.add_parser("ablate", help="LODO per ablation variant")
    common(p)
    p.add_argument("--variant", action="append", default=[],
                   metavar="TOGGLES", help="comma-joined toggles to disable "
                   f"(from {', '.join(TOGGLES)}), or ERM for all; repeatable")
    p.add_argument("--jobs", type=int, default=1, help="parallel split workers")
    p = sub.add_parser("export-embeddings", help="dump per-sample latents")
    common(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint to load")
    common(sub.add_parser("inspect-config", help="print the resolved config and exit"))
    return parser


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get("CAMO_OUT_ROOT", "camo-out")
    return Path(root) / args.subcommand


def _write_run_json(out: Path, args, effective: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "subcommand": args.subcommand,
        "effective_config": effective,
        "config_digest": config_digest(effective),
        "version": __version__,
        "kernel_backend": BACKEND,
    }
    (out / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _require_dataset(exp):
    if not exp.data.path:
        raise ConfigError("data.path must point at a dataset directory")
    return load_dataset(exp.data.path)


def _split_for(exp, dataset):
    if exp.data.target_domain is None:
        return None
    target = int(exp.data.target_domain)
    domains = dataset.domains()
    if target not in domains:
        raise ConfigError(f"data.target_domain {target} not present in dataset")
    return DomainSplit(source_domains=tuple(d for d in domains if d != target),
                       target_domain=target)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        exp, effective = resolve_config(args.config, args.overrides, args.seed)
        print(json.dumps(effective, indent=2, sort_keys=True))

        if args.subcommand == "inspect-config":
            return 0

        out = _out_dir(args)
        digest = config_digest(effective)

        if args.subcommand == "generate":
            dataset = scm_generate(exp.scm)
            save_dataset(dataset, out)
            _write_run_json(out, args, effective)
            print(f"wrote {len(dataset.samples)} samples to {out}")

        elif args.subcommand == "train":
            dataset = _require_dataset(exp)
            split = _split_for(exp, dataset)
            result = train(exp.train, dataset, split, model_cfg=exp.model,
                           log_path=out / "train_log.jsonl", checkpoint_dir=out)
            _write_run_json(out, args, effective)
            best = "n/a" if result.best_val_accuracy is None else f"{result.best_val_accuracy:.4f}"
            print(f"trained {exp.train.total_iterations} iterations; "
                  f"best source-val accuracy {best}; artifacts in {out}")

        elif args.subcommand == "eval-lodo":
            dataset = _require_dataset(exp)
            report = run_lodo(dataset, exp.train, exp.model, seeds=exp.eval.seeds,
                              config_digest=digest, out_dir=out)
            _write_run_json(out, args, effective)
            print(report.render_text())
            print(f"report written to {out / 'report.json'}")

        elif args.subcommand == "ablate":
            dataset = _require_dataset(exp)
            variants = [tuple(v) for v in exp.eval.ablations]
            for raw in args.variant:
                toggles = tuple(t.strip() for t in raw.split(",") if t.strip())
                variants.append(TOGGLES if toggles == ("ERM",) else toggles)
            reports = run_ablation(dataset, exp.train, exp.model, variants=variants,
                                   seeds=exp.eval.seeds, jobs=args.jobs,
                                   dataset_path=exp.data.path, config_digest=digest)
            out.mkdir(parents=True, exist_ok=True)
            summary = {k: r.average for k, r in reports.items()}
            (out / "ablation.json").write_text(json.dumps(
                {k: reports[k].to_json_dict() for k in reports}, indent=2, sort_keys=True))
            _write_run_json(out, args, effective)
            for k, avg in summary.items():
                print(f"{k:>24}: {avg:.4f}")

        elif args.subcommand == "export-embeddings":
            dataset = _require_dataset(exp)
            model = load_checkpoint(args.checkpoint)
            split = _split_for(exp, dataset)
            path = export_embeddings(model, dataset.samples, split,
                                     out / "embeddings.jsonl",
                                     encoding=exp.eval.embedding_encoding)
            _write_run_json(out, args, effective)
            print(f"embeddings written to {path}")

        return 0
    except CamoError as e:
        print(f"error: {e.category}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
