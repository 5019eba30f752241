"""Command-line entry point: ``dcrnn {train,eval,bench,gen-data}``.

Exit codes: 0 success, 2 usage/config/data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, load_synth_spec
from .cross import growth_csv, growth_table, param_growth
from .data import expected_rates, gen_synthetic, load_tsv, write_tsv
from .errors import ConfigError, ContractError, IngestionError, NumericalError, UndefinedMetricError
from .layers import load_checkpoint, save_checkpoint
from .metrics import count_params, task_aucs
from .models import build_model
from .training import train

log = logging.getLogger("dcrnn")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
CHECKPOINT, METRICS, MANIFEST = "checkpoint.bin", "metrics.tsv", "manifest.json"


def _fail(message: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load(path, cfg: RunConfig):
    return load_tsv(path, cfg.data.schema, cfg.data.max_bad_lines, cfg.data.task_names)


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
        if not cfg.data.train:
            raise ConfigError("required key missing", key="data.train")
        train_data = _load(cfg.data.train, cfg)
        test_data = _load(cfg.data.test, cfg) if cfg.data.test else None
        if len(train_data) == 0:
            raise ContractError(f"training data {cfg.data.train} is empty")
    except (ConfigError, ContractError, IngestionError, FileNotFoundError) as exc:
        return _fail(str(exc))

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail(f"cannot create output directory {out}: {exc.strerror}")
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "started": _now(),
        "finished": None,
        "outputs": {"checkpoint": CHECKPOINT, "metrics": METRICS, "manifest": MANIFEST},
    }
    _write_manifest(out / MANIFEST, manifest)

    model = build_model(cfg.model, seed=cfg.seed)
    try:
        with open(out / METRICS, "w") as fh:
            train(model, train_data, cfg.train, cfg.loss, eval_data=test_data, log_file=fh)
    except NumericalError as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    except UndefinedMetricError as exc:
        return _fail(str(exc))
    save_checkpoint(out / CHECKPOINT, model.params)
    manifest["finished"] = _now()
    _write_manifest(out / MANIFEST, manifest)
    print(f"wrote {out / CHECKPOINT}, {out / METRICS}, {out / MANIFEST}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    manifest_path = ckpt.parent / MANIFEST
    try:
        cfg = RunConfig.from_dict(json.loads(manifest_path.read_text())["config"])
    except FileNotFoundError:
        return _fail(f"no {MANIFEST} next to {ckpt}")
    except (KeyError, TypeError, ValueError) as exc:
        return _fail(f"unreadable manifest {manifest_path}: {exc}")
    try:
        params = load_checkpoint(ckpt)
    except (OSError, ValueError) as exc:
        return _fail(f"cannot read checkpoint {ckpt}: {exc}")
    model = build_model(cfg.model, seed=cfg.seed)
    expected = {k: v.shape for k, v in model.params.items()}
    got = {k: v.shape for k, v in params.items()}
    if expected != got:
        diff = sorted(set(expected.items()) ^ set(got.items()))
        return _fail(f"checkpoint does not match the manifest's model config: {diff[:4]}")
    model.params.update(params)
    try:
        data = _load(args.data, cfg)
        aucs = task_aucs(model, data.ids, data.labels)
    except (IngestionError, FileNotFoundError, UndefinedMetricError) as exc:
        return _fail(str(exc))
    print("task\tauc")
    for name, a in zip(cfg.data.task_names, aucs):
        print(f"{name}\t{a:.6f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(str(exc))
    rows = param_growth(fields=cfg.data.schema.field_count, embed_dim=cfg.dcrnn.embedding_dim)
    print("# cross-layer parameter growth")
    print(growth_table(rows))
    print("# csv")
    print(growth_csv(rows))
    reports = {}
    for model_cfg in (cfg.dcrnn, cfg.mmoe):
        report = count_params(build_model(model_cfg, seed=cfg.seed))
        reports[model_cfg.name] = report
        print(f"# {model_cfg.name}")
        print(report)
        print()
    dcrnn_total = reports[cfg.dcrnn.name].total
    mmoe_total = reports[cfg.mmoe.name].total
    print(f"param ratio {cfg.dcrnn.name} / MMoE: {dcrnn_total} / {mmoe_total} = {dcrnn_total / mmoe_total:.4f}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    try:
        spec = load_synth_spec(args.spec)
    except ConfigError as exc:
        return _fail(str(exc))
    data = gen_synthetic(spec)
    try:
        write_tsv(data, args.out)
    except OSError as exc:
        return _fail(f"cannot write {args.out}: {exc.strerror}")
    n = len(data)
    if n == 0:
        print("warning: n_examples = 0, wrote an empty file", file=sys.stderr)
        return EXIT_OK
    rates = data.label_rates()
    print(f"wrote {n} examples to {args.out}")
    print("task\trate\texpected\t3sigma")
    for name, observed, p in zip(data.task_names, rates, expected_rates(spec)):
        print(f"{name}\t{observed:.5f}\t{p:.5f}\t{3 * np.sqrt(p * (1 - p) / n):.5f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcrnn", description="DCRNN / MMoE multi-task CTR-CVR toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the configured model")
    p.add_argument("--config", required=True, metavar="PATH", help="run config file (INI)")
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory for checkpoint.bin, metrics.tsv and manifest.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-task AUC of a trained checkpoint")
    p.add_argument("--checkpoint", required=True, metavar="PATH",
                   help="checkpoint written by train; its manifest.json must sit beside it")
    p.add_argument("--data", required=True, metavar="PATH", help="TSV dataset to score")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="parameter growth of cross layers and DCRNN vs MMoE counts")
    p.add_argument("--config", required=True, metavar="PATH", help="run config file (INI)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-data", help="write a synthetic two-task dataset")
    p.add_argument("--spec", required=True, metavar="PATH", help="INI file with a [synth] section")
    p.add_argument("--out", required=True, metavar="PATH", help="TSV file to write")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
