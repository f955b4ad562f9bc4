"""Command-line entry point: `fedmail ingest|run|gen`.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
Worker parallelism inside a global epoch is capped by FEDMAIL_THREADS.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import engine, ingest, metrics, synthetic
from .config import ConfigError, RunConfig, build_config
from .model import serialize_params
from .partition import balance_classes

log = logging.getLogger("fedmail")


def _load_corpus(cfg: RunConfig) -> list[ingest.EmailSample]:
    if cfg.dataset_path is not None:
        return ingest.load_dataset(cfg.dataset_path)
    assert cfg.synthetic is not None
    return synthetic.gen_synthetic(cfg.synthetic, cfg.fl.seed)


def _write_outputs(record: engine.FLRunRecord, out: Path, prefix: str = "") -> None:
    metrics.emit_csv(record, out / f"{prefix}metrics.csv")
    metrics.emit_json_summary(record, out / f"{prefix}summary.json")
    metrics.emit_ledger_csv(record, out / f"{prefix}ledger.csv")
    for name in ("global_accuracy", "local_accuracy"):
        metrics.emit_plot(record, name, out / f"{prefix}{name}.svg")
    (out / f"{prefix}partition_report.json").write_text(
        json.dumps(record.partition, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _verify_overhead(record: engine.FLRunRecord) -> None:
    """Print the per-client per-epoch traffic and check it is exactly twice
    the serialized model size for every active pair, zero otherwise."""
    expected = 2 * record.model_bytes
    print(f"model size: {record.model_bytes} bytes; expected per active client per epoch: {expected}")
    for er in record.epochs:
        for k in sorted(er.bytes_down):
            total = er.bytes_up[k] + er.bytes_down[k]
            print(f"epoch {er.epoch} client {k}: up={er.bytes_up[k]} down={er.bytes_down[k]}")
            should_be = expected if k in er.active else 0
            if total != should_be:
                raise RuntimeError(
                    f"overhead violation at epoch {er.epoch}, client {k}: {total} != {should_be}"
                )
    print("overhead constant: OK")


def run(cfg: RunConfig) -> int:
    """Execute the configured pipeline and write all artifacts to out_dir."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = _load_corpus(cfg)
    if cfg.balance:
        labels = [1 if s.label == ingest.LABEL_PHISHING else 0 for s in samples]
        keep = set(int(i) for i in balance_classes(labels, cfg.fl.seed))
        samples = [s for i, s in enumerate(samples) if i in keep]
    corpus = ingest.tokenize_corpus(samples, cfg.fl.vocab_dim)
    on_epoch = None
    if cfg.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)

        def on_epoch(state):
            epoch = state.record.epochs[-1].epoch
            (snap_dir / f"epoch_{epoch:04d}.params").write_bytes(serialize_params(state.params))

    record = engine.run_training(corpus, cfg.partition_spec, cfg.fl, on_epoch=on_epoch)
    _write_outputs(record, out)
    if cfg.verify_overhead:
        _verify_overhead(record)
    if cfg.baseline_client is not None:
        solo = engine.ParticipationSchedule(
            (engine.ScheduleEntry(0, cfg.fl.global_epochs, frozenset({cfg.baseline_client})),)
        )
        baseline = engine.run_training(
            corpus, cfg.partition_spec, dataclasses.replace(cfg.fl, schedule=solo)
        )
        _write_outputs(baseline, out, prefix="baseline_")
    log.info("run complete: %s", out)
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    report = ingest.ParseReport()
    samples = ingest.ingest_manifest(args.manifest, report)
    ingest.save_dataset(samples, args.out)
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(f"ingested {len(samples)} samples -> {args.out}")
    return 0


def _cmd_gen(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    if cfg.synthetic is None:
        raise ConfigError("/synthetic", "gen needs a synthetic spec (via config or preset)")
    samples = synthetic.gen_synthetic(cfg.synthetic, cfg.fl.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "dataset.jsonl"
    ingest.save_dataset(samples, path)
    print(f"generated {len(samples)} samples -> {path}")
    return 0


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {}
    if args.preset:
        overrides["preset"] = args.preset
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
        log.info("seed override from command line: %d", args.seed)
    if args.config:
        cfg_obj = json.loads(
            Path(args.config).read_text(encoding="utf-8"),
            object_pairs_hook=config_mod._reject_duplicates,
        )
        if not isinstance(cfg_obj, dict):
            raise ConfigError("", "top-level config must be an object")
        cfg_obj.update(overrides)
        return build_config(cfg_obj, base_dir=Path(args.config).parent)
    if not overrides.get("preset"):
        raise ConfigError("", "need --config and/or --preset")
    return build_config(overrides)


def _cmd_run(args: argparse.Namespace) -> int:
    return run(_config_from_args(args))


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="fedmail",
        description="Deterministic federated-learning simulator for phishing-email classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse a manifest of mbox/text files into a dataset")
    p_ingest.add_argument("--manifest", required=True, help="CSV with header path,label,source")
    p_ingest.add_argument("--out", required=True, help="output dataset file (JSON lines)")
    p_ingest.add_argument("--report", help="optional parse report JSON path")
    p_ingest.set_defaults(func=_cmd_ingest)

    p_run = sub.add_parser("run", help="run an experiment from a config file and/or preset")
    p_run.add_argument("--config", help="strict-JSON run config")
    p_run.add_argument("--preset", help="experiment preset name")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="seed override")
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset")
    p_gen.add_argument("--config", help="strict-JSON config with a synthetic spec")
    p_gen.add_argument("--preset", help="preset whose corpus spec to use")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--seed", type=int, help="seed override")
    p_gen.set_defaults(func=_cmd_gen)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
