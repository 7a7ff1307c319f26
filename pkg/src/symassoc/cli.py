"""``symassoc`` command line: gen-data, train, eval, sweep.

Configs are JSON with two optional sections::

    {"data": {...DatasetConfig fields...}, "experiment": {...ExperimentConfig fields...}}

Exit codes: 0 ok, 2 config error, 3 IO error, 4 checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import align, datagen, plotting, trainer
from .datagen import DataConfigError, DatasetConfig
from .lstm import lstm_forward
from .numerics import TensorFormatError
from .trainer import CheckpointError, ConfigError, ExperimentConfig

log = logging.getLogger("symassoc")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CHECKPOINT = 0, 2, 3, 4
CONFIG_SECTIONS = ("data", "experiment")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_config(path) -> tuple[DatasetConfig, ExperimentConfig]:
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read config {path}: {exc.strerror or exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"config {path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise CliError(EXIT_CONFIG, f"config {path}: top level must be an object")
    unknown = sorted(set(raw) - set(CONFIG_SECTIONS))
    if unknown:
        raise CliError(EXIT_CONFIG, f"{unknown[0]}: unknown config section")
    try:
        data = DatasetConfig.from_dict(raw.get("data", {}))
    except (DataConfigError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"data.{exc}") from exc
    try:
        exp = ExperimentConfig.from_dict(raw.get("experiment", {}))
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"experiment.{exc}") from exc
    return data, exp


def _override_experiment(exp: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        changes["epochs"] = args.epochs
    if getattr(args, "mode", None) is not None:
        changes["mode"] = args.mode
    try:
        return replace(exp, **changes)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {out}: {exc.strerror or exc}") from exc
    return out


def _load_data(data_dir):
    data_dir = Path(data_dir)
    if not (data_dir / "manifest.jsonl").is_file():
        raise CliError(EXIT_IO, f"{data_dir}: no manifest.jsonl (run gen-data first)")
    try:
        splits = {s: datagen.load_split(data_dir, s) for s in datagen.SPLITS}
        cfg = datagen.load_config(data_dir)
    except (OSError, TensorFormatError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_IO, f"{data_dir}: unreadable dataset ({exc})") from exc
    except DataConfigError as exc:
        raise CliError(EXIT_CONFIG, f"{data_dir}/config.json: {exc}") from exc
    return splits, cfg


def _write_report(out: Path, report, cfg: ExperimentConfig, stem="report") -> None:
    (out / f"{stem}.json").write_text(_dump({**report.to_dict(), "mode": cfg.mode,
                                             "seed": cfg.seed}))
    (out / f"{stem}.csv").write_text(report.to_csv())
    plotting.plot_report(report, out / f"{stem}.png")


# --- commands ---------------------------------------------------------------


def cmd_gen_data(args) -> int:
    data, _ = load_config(args.config)
    if args.seed is not None:
        data = replace(data, seed=args.seed)
    out = _prepare_out(args.out)
    try:
        datagen.build_dataset(data, out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"writing {out}: {exc.strerror or exc}") from exc
    n = data.n_train + data.n_test
    log.info("wrote %d samples to %s", n, out)
    return EXIT_OK


def cmd_train(args) -> int:
    _, exp = load_config(args.config)
    exp = _override_experiment(exp, args)
    splits, data_cfg = _load_data(args.data)
    train_set, test_set = splits["train"], splits["test"]
    if not train_set and exp.epochs > 0:
        raise CliError(EXIT_CONFIG, "train split is empty")
    out = _prepare_out(args.out)

    if args.resume:
        states, saved, _ = trainer.load_checkpoint(args.resume)
        if (saved.mode, saved.seed, saved.train) != (exp.mode, exp.seed, exp.train):
            raise CheckpointError("checkpoint mode, seed or train settings differ from the config")
    else:
        any_set = train_set or test_set
        states = trainer.init_states(exp, any_set[0].x_v.shape[1], any_set[0].x_a.shape[1],
                                     data_cfg.vocab_size)
    trainer.check_compatible(states, train_set + test_set)
    (out / "config.json").write_text(_dump({"data": data_cfg.to_dict(),
                                            "experiment": exp.to_dict()}))

    records = []
    diag = open(out / "diagnostics.jsonl", "w", encoding="utf-8")

    def on_step(rec):
        records.append(rec)
        diag.write(json.dumps(rec, sort_keys=True) + "\n")

    def on_epoch(st):
        if exp.checkpoint_every and st.epoch % exp.checkpoint_every == 0:
            trainer.save_checkpoint(out / "checkpoint", st, exp)
        log.info("epoch %d done (%d steps, %d skipped)", st.epoch, st.step, st.skipped)

    with diag:
        trainer.train(exp, train_set, states, on_step, on_epoch)
    trainer.save_checkpoint(out / "checkpoint", states, exp)
    if states.skipped:
        log.warning("%d samples skipped as CTC-infeasible", states.skipped)
    if records:
        plotting.plot_diagnostics(records, out / "diagnostics.png")

    if test_set:
        report = trainer.evaluate(test_set, states, exp, calibration=train_set or test_set)
        _write_report(out, report, exp)
        log.info("AAcc %.4f ± %.4f, LER visual %.4f, LER audio %.4f", report.aacc,
                 report.aacc_std, report.ler_visual, report.ler_audio)
    return EXIT_OK


def dump_dtw(out_dir: Path, samples, states, limit: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for s in samples[:limit]:
        z_v, _ = lstm_forward(states.visual.params, s.x_v)
        z_a, _ = lstm_forward(states.audio.params, s.x_a)
        dist = align.distance_table(z_v, z_a)
        D = align.accumulate(dist)
        path = align.backtrace(D)
        on_path = set(path)
        with open(out_dir / f"{s.id}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_v", "t_a", "distance", "accumulated", "on_path"])
            for i in range(dist.shape[0]):
                for j in range(dist.shape[1]):
                    w.writerow([i, j, repr(float(dist[i, j])), repr(float(D[i, j])),
                                int((i, j) in on_path)])
        plotting.plot_dtw(dist, path, out_dir / f"{s.id}.png",
                          title=f"{s.id}  cost {D[-1, -1]:.3f}")


def cmd_eval(args) -> int:
    states, exp, _ = trainer.load_checkpoint(args.checkpoint)
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    splits, _ = _load_data(args.data)
    samples = splits[args.split]
    if not samples:
        raise CliError(EXIT_CONFIG, f"{args.split} split is empty")
    trainer.check_compatible(states, splits["train"] + samples)
    out = _prepare_out(args.out)
    calibration = splits["train"] or samples
    report = trainer.evaluate(samples, states, exp, calibration=calibration)
    _write_report(out, report, exp)
    if args.dump_dtw:
        dump_dtw(out / "dtw", samples, states, args.dump_dtw)
    log.info("AAcc %.4f ± %.4f, LER visual %.4f, LER audio %.4f", report.aacc,
             report.aacc_std, report.ler_visual, report.ler_audio)
    return EXIT_OK


def parse_missing(text: str) -> list[int]:
    """``"1..5"`` or ``"1,3,4"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(EXIT_CONFIG, f"missing: cannot parse {text!r}") from None


def cmd_sweep(args) -> int:
    data, exp = load_config(args.config)
    exp = _override_experiment(exp, args)
    if args.seed is not None:
        data = replace(data, seed=args.seed)
    counts = parse_missing(args.missing)
    bad = [m for m in counts if not 1 <= m <= data.base_len - 1]
    if not counts or bad:
        raise CliError(EXIT_CONFIG,
                       f"missing: values must lie in 1..{data.base_len - 1} for base_len {data.base_len}")
    modes = args.modes.split(",")
    if any(m not in ("original", "pooled", "baseline_ctc") for m in modes):
        raise CliError(EXIT_CONFIG, f"modes: unknown value in {args.modes!r}")
    out = _prepare_out(args.out)
    (out / "config.json").write_text(_dump({"data": data.to_dict(), "experiment": exp.to_dict(),
                                            "missing": counts, "scenario": args.scenario}))
    path = out / "sweep.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trainer.SWEEP_HEADER)

        def on_row(row):
            w.writerow([row["mode"], row["scenario"], row["missing"], f"{row['aacc_mean']:.6f}",
                        f"{row['aacc_std']:.6f}", f"{row['ler_v']:.6f}", f"{row['ler_a']:.6f}"])
            fh.flush()
            log.info("%s missing=%d AAcc %.4f", row["mode"], row["missing"], row["aacc_mean"])

        try:
            rows = trainer.run_sweep(data, exp, counts, args.scenario, modes, on_row)
        except DataConfigError as exc:
            raise CliError(EXIT_CONFIG, f"data.{exc}") from exc
    plotting.plot_sweep(rows, out / "sweep.png", title=args.scenario)
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symassoc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic paired dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train both networks and evaluate on the test split")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int, help="0 evaluates the initial weights")
    t.add_argument("--mode", choices=trainer.MODES)
    t.add_argument("--resume", help="checkpoint directory to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", default="test", choices=datagen.SPLITS)
    e.add_argument("--seed", type=int)
    e.add_argument("--dump-dtw", type=int, default=0, metavar="N",
                   help="write DTW matrices and paths for the first N samples")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="train from scratch per missing count and mode")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--scenario", required=True, choices=("visual_full", "audio_full"))
    s.add_argument("--missing", default="1..5", help='e.g. "1..5" or "1,2,4"')
    s.add_argument("--modes", default="original,pooled")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (ConfigError, DataConfigError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except CheckpointError as exc:
        log.error("checkpoint: %s", exc)
        return EXIT_CHECKPOINT
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
