"""Command-line front end.

Every subcommand writes a JSON report (sorted keys, no timestamps) into the
output directory, so re-running with the same config and seed reproduces it
byte for byte. Exit codes: 0 success, 1 invalid config or arguments, 2 run failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .characterize import characterize_device
from .config import DEFAULT_COUNT_PER_CLASS, ConfigError, RunConfig, load_config
from .datasets import KINDS, gen_dataset, read_jsonl, to_dataset
from .device import Device, load_fixture, new_random_device
from .fleet import CSV_COLUMNS, _fault_from_spec, make_fleet, rows_to_csv, run_fleet
from .ml.evaluation import moving_average, redraw_fluctuation_sweep
from .training import TASKS, bench_classifiers, load_models, task_setup, train_models
from .tuner import run_tuning

log = logging.getLogger("qdtune")

BENCH_COLUMNS = ("task", "family", "representation", "pca", "accuracy_mean", "accuracy_std", "n")


class RunFailure(RuntimeError):
    """Anything that goes wrong after the configuration was accepted."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_text(path, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_datasets(cfg: RunConfig, kinds) -> dict:
    out = {}
    for kind in kinds:
        path = os.path.join(cfg.datasets_dir, f"{kind}.jsonl")
        if not os.path.exists(path):
            raise RunFailure(f"dataset {path} not found; run gen-data first")
        out[kind] = read_jsonl(path)
    return out


def _load_models(cfg: RunConfig) -> dict:
    try:
        return load_models(cfg.models_dir)
    except FileNotFoundError as exc:
        raise RunFailure(f"model file {exc.filename} not found; run train first") from None


def _device(cfg: RunConfig):
    s = cfg.section("device")
    layout = cfg.layout()
    if "fixture" in s:
        physics, fixture_layout = load_fixture(s["fixture"])
        layout = layout or fixture_layout
    else:
        physics = new_random_device(s.get("seed", cfg.seed), _fault_from_spec(s.get("faults", {})))
    device_id = f"seed{physics.seed}"
    return Device(physics, layout, session_seed=s.get("session", 0)), device_id


# ---- subcommands --------------------------------------------------------------

def cmd_gen_data(cfg: RunConfig) -> dict:
    s = cfg.section("datasets")
    count = s.get("count_per_class", DEFAULT_COUNT_PER_CLASS)
    kinds = s.get("kinds", list(KINDS))
    os.makedirs(cfg.datasets_dir, exist_ok=True)
    files = {}
    for kind in kinds:
        path = os.path.join(cfg.datasets_dir, f"{kind}.jsonl")
        log.info("generating %s (%d per class)", kind, count)
        records = gen_dataset(kind, count, cfg.seed, path)
        files[kind] = {
            "file": os.path.basename(path),
            "records": len(records),
            "per_label": {str(k): sum(r["label"] == k for r in records) for k in (0, 1)},
            "sha256": sha256_file(path),
        }
    return {"command": "gen-data", "seed": cfg.seed, "count_per_class": count, "datasets": files}


def cmd_train(cfg: RunConfig) -> dict:
    s = cfg.section("models")
    datasets = _load_datasets(cfg, TASKS)
    os.makedirs(cfg.models_dir, exist_ok=True)
    try:
        res = train_models(datasets, cfg.models_dir, s.get("overrides"), cfg.seed, s.get("evaluate", True))
    except ValueError as exc:
        raise RunFailure(str(exc)) from None
    tasks = {}
    for task in TASKS:
        path = os.path.join(cfg.models_dir, f"{task}.model.json")
        rep = res["reports"][task]
        tasks[task] = {
            "family": res["models"][task].family,
            "model_file": os.path.basename(path),
            "sha256": sha256_file(path),
            "eval": rep.to_dict() if rep is not None else None,
        }
    return {"command": "train", "seed": cfg.seed, "tasks": tasks}


def _bench_one(args):
    records, task, n, seed, k, timing = args
    return bench_classifiers(records, task, n=n, seed=seed, pca_components=k, timing=timing)


def cmd_bench(cfg: RunConfig) -> dict:
    s = cfg.section("bench")
    tasks = s.get("tasks", list(TASKS))
    n, k, timing = s.get("redraws", 3), s.get("pca_components", 20), s.get("timing", False)
    datasets = _load_datasets(cfg, tasks)
    jobs = [(datasets[t], t, n, cfg.seed, k, timing) for t in tasks]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as ex:
            tables = list(ex.map(_bench_one, jobs))
    else:
        tables = [_bench_one(j) for j in jobs]
    rows = [r for t in tables for r in t]
    cols = BENCH_COLUMNS + (("wall_time", "eval_time_mean", "eval_time_std") if timing else ())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: ("" if r.get(c) is None else r[c]) for c in cols})
    write_text(os.path.join(cfg.out, "bench.csv"), buf.getvalue())
    return {"command": "bench", "seed": cfg.seed, "redraws": n, "rows": rows}


def cmd_fluctuation(cfg: RunConfig) -> dict:
    s = cfg.section("fluctuation")
    task = s.get("task", "pinchoff")
    n_list = s.get("n_list", [2, 5, 10, 20])
    family, params, spec, _ = task_setup(task, cfg.section("models").get("overrides", {}).get(task))
    records = _load_datasets(cfg, [task])[task]
    data = to_dataset(records, spec.representation)
    pts = redraw_fluctuation_sweep(data, family, params, spec, n_list, cfg.seed, s.get("repeats", 1))
    ma = moving_average([p.std for p in pts]).tolist()
    return {
        "command": "fluctuation", "seed": cfg.seed, "task": task, "family": family,
        "points": [dataclasses.asdict(p) for p in pts],
        "std_moving_average": ma,
        "std_moving_average_non_increasing": all(b <= a for a, b in zip(ma, ma[1:])),
    }


def _table_line(rep) -> str:
    return (f"{rep.device_id:>10}  iqa={'pass' if rep.iqa_passed else 'fail':4}  n_1D={rep.n_1d:3d}  "
            f"verdict={rep.verdict}" + (f" ({'+'.join(rep.broken_gates)})" if rep.broken_gates else ""))


def cmd_characterize(cfg: RunConfig) -> dict:
    models = _load_models(cfg)
    dev, device_id = _device(cfg)
    rep = characterize_device(dev, cfg.characterize(), models["pinchoff"], device_id=device_id)
    print(_table_line(rep))
    return {"command": "characterize", "seed": cfg.seed, "characterization": rep.to_dict()}


def cmd_tune(cfg: RunConfig) -> dict:
    models = _load_models(cfg)
    dev, device_id = _device(cfg)
    char_cfg = cfg.characterize()
    rep = characterize_device(dev, char_cfg, models["pinchoff"], device_id=device_id)
    print(_table_line(rep))
    result = None
    if rep.working:
        result = run_tuning(dev, rep, cfg.tuner(), models, cfg.chargemap(), char_cfg)
        print(f"{'':>10}  tuning: success={result.success} n_1D={result.n_1d} n_2D={result.n_2d} "
              f"regime={result.regime_classifier} oracle={result.regime_oracle}")
    return {"command": "tune", "seed": cfg.seed, "characterization": rep.to_dict(),
            "tuning": result.to_dict() if result is not None else None}


def cmd_fleet(cfg: RunConfig) -> dict:
    s = cfg.section("fleet")
    models = _load_models(cfg)
    try:
        members = make_fleet(s.get("count", 8), cfg.seed, s.get("faults", []))
    except ValueError as exc:
        raise RunFailure(str(exc)) from None
    rep = run_fleet(members, models, s.get("cooldowns", 1), cfg.workers, cfg.layout(), cfg.characterize(),
                    cfg.tuner(), cfg.chargemap(), s.get("tune", True))
    rows = [r for sec in rep["sections"] for r in sec["rows"]]
    write_text(os.path.join(cfg.out, "fleet.csv"), rows_to_csv(rows))
    print("  ".join(CSV_COLUMNS[:1] + CSV_COLUMNS[3:4] + ("n_1D", "verdict", "tune_n_1D", "n_2D", "success")))
    for r in rows:
        print(f"{r['device']}.{r['cooldown']}  {r['iqa']}  {r['char_n_1d']}  {r['verdict']}  "
              f"{r['tune_n_1d'] if r['tune_n_1d'] is not None else '-'}  "
              f"{r['n_2d'] if r['n_2d'] is not None else '-'}  "
              f"{r['success'] if r['success'] is not None else '-'}")
    return {"command": "fleet", "seed": cfg.seed, **rep}


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate synthetic labelled corpora"),
    "train": (cmd_train, "train the four task models and write eval reports"),
    "bench": (cmd_bench, "compare classifier families and input representations"),
    "characterize": (cmd_characterize, "triage one device"),
    "tune": (cmd_tune, "triage and tune one device"),
    "fleet": (cmd_fleet, "triage and tune a fleet of devices"),
    "fluctuation": (cmd_fluctuation, "accuracy statistics against the number of redraws"),
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qdtune", description="Simulated double-dot characterization and tuning.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", metavar="PATH", help="JSON run configuration")
        sp.add_argument("--seed", type=int, metavar="N", help="master seed (overrides the config)")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        sp.add_argument("--workers", type=int, metavar="N", help="worker processes (overrides the config)")
        sp.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.workers)
    except ConfigError as exc:
        print(f"qdtune: invalid configuration: {exc}", file=sys.stderr)
        return 1
    func = COMMANDS[args.command][0]
    try:
        os.makedirs(cfg.out, exist_ok=True)
        report = func(cfg)
        path = os.path.join(cfg.out, f"{args.command}.json")
        write_text(path, dumps(report))
    except Exception as exc:  # noqa: BLE001 - every failure after validation is a run failure
        log.debug("run failure", exc_info=True)
        print(f"qdtune {args.command}: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
