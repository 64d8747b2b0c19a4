"""Command-line entry point: gen-scene, gen-dataset, train, eval, map, run."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..antenna import DESIGNS, beam_region_grid, coverage_diagnostic, region_centres
from ..channel import save_scene
from ..neural import NumericalError
from .config import ConfigError, ExperimentConfig, load_config
from .dataset import DatasetError, coverage_report, device_on_grid, generate, mixture_name, read_dataset, write_dataset
from .experiments import DigestMismatch, ModelSet, evaluate, metrics_csv, plot_csv, train_models
from .recipes import RECIPES, Runner, run_recipe

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("fibbeam")


def _cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.profile, master_seed=args.seed)
    return replace(cfg, out=args.out) if args.out else cfg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _dataset_names(cfg: ExperimentConfig):
    for d in cfg.designs:
        yield (d,), ("train", "test")
    for mix in cfg.mixtures:
        yield tuple(mix), ("train",)


def _dataset_path(out: Path, name: str, split: str) -> Path:
    return out / "datasets" / f"{name}_{split}.jsonl"


def cmd_gen_scene(args) -> int:
    cfg = _cfg(args)
    path = Path(cfg.out) / "scene.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_scene(cfg.scene(), path)
    print(path)
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    cfg = _cfg(args)
    out = Path(cfg.out)
    coverage = {}
    for designs, splits in _dataset_names(cfg):
        name = mixture_name(designs)
        for split in splits:
            size = (cfg.n_train if split == "train" else cfg.n_test) * len(designs)
            ds = generate(cfg, designs, split, size)
            write_dataset(ds, _dataset_path(out, name, split))
            coverage[f"{name}_{split}"] = coverage_report(ds)
            log.info("wrote %s (%d samples)", _dataset_path(out, name, split), len(ds))
    _write(out / "datasets" / "coverage.json", json.dumps(coverage, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _cfg(args)
    out = Path(cfg.out)
    for designs, _ in _dataset_names(cfg):
        name = mixture_name(designs)
        ds = read_dataset(_dataset_path(out, name, "train"))
        for seed in cfg.seeds:
            models = train_models(ds, cfg, seed, specific=len(designs) == 1)
            target = out / "models" / name / f"seed{seed}"
            models.save(target)
            traces = {
                f"{kind}_{net}": params.meta["loss_trace"]
                for kind, nets in (("generic", models.generic), ("specific", models.specific or {}))
                for net, params in nets.items()
            }
            _write(target / "loss.json", json.dumps(traces, indent=2, sort_keys=True) + "\n")
            log.info("trained %s seed %d", name, seed)
    return EXIT_OK


def _parse_mismatch(spec: str) -> tuple[str, str]:
    try:
        tr, te = spec.split(":")
        if not (tr.startswith("tr") and te.startswith("te")):
            raise ValueError
        return tr[2:], te[2:]
    except ValueError:
        raise ConfigError(f"--mismatch expects trA:teB, got {spec!r}") from None


def _load_models(out: Path, name: str, seed: int, scenario: str) -> ModelSet:
    d = out / "models" / name / f"seed{seed}"
    if not d.is_dir():
        raise FileNotFoundError(f"models for {name} seed {seed} not found in {d}; run `train` first")
    return ModelSet.load(d, scenario)


def cmd_eval(args) -> int:
    cfg = _cfg(args)
    out = Path(cfg.out)
    rows = []
    if args.mismatch:
        tr, te = _parse_mismatch(args.mismatch)
        test = read_dataset(_dataset_path(out, te, "test"))
        for seed in cfg.seeds:
            m = _load_models(out, tr, seed, cfg.scenario)
            rows += evaluate(f"mismatch:tr{tr}:te{te}", m, test, cfg, methods=("generic",), mismatch=True)
        stem = f"tr{tr}_te{te}"
    else:
        for d in cfg.designs:
            test = read_dataset(_dataset_path(out, d, "test"))
            for seed in cfg.seeds:
                rows += evaluate(f"matched:{d}", _load_models(out, d, seed, cfg.scenario), test, cfg)
        stem = "matched"
    _write(out / f"metrics_{stem}.csv", metrics_csv(rows))
    _write(out / f"plot_{stem}.csv", plot_csv(rows))
    print(out / f"metrics_{stem}.csv")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _cfg(args)
    out = Path(cfg.out)
    runner = Runner(cfg)
    names = RECIPES if args.experiment == "all" else (args.experiment,)
    rows = []
    for name in names:
        rows += run_recipe(name, runner)
    stem = args.experiment
    _write(out / f"metrics_{stem}.csv", metrics_csv(rows))
    _write(out / f"plot_{stem}.csv", plot_csv(rows))
    print(out / f"metrics_{stem}.csv")
    return EXIT_OK


def export_map(design: str, n_fib: int, out: Path, az_steps: int, el_steps: int, dataset=None) -> dict:
    """Write the beam-region table, the grid-to-beam map and (optionally) the best-beam histogram."""
    dev = device_on_grid(design, n_fib)
    regions = beam_region_grid(dev, az_steps, el_steps)
    az, el = region_centres(az_steps, el_steps)
    lines = ["azimuth,elevation,beam"]
    for a in range(az_steps):
        for e in range(el_steps):
            lines.append(f"{az[a]!r},{el[e]!r},{int(regions[a, e])}")
    _write(out / f"regions_{design}.csv", "\n".join(lines) + "\n")
    doc = {
        "device": design,
        "n_fib": n_fib,
        "fib_map": dev.fib_map.tolist(),
        "empty_beams": coverage_diagnostic(dev),
        "azimuth": dev.grid.azimuth.tolist(),
        "zenith": dev.grid.zenith.tolist(),
    }
    _write(out / f"fib_map_{design}_{n_fib}.json", json.dumps(doc, indent=2) + "\n")
    if dataset is not None:
        js = np.asarray(dataset.j_star)[np.asarray(dataset.device_id) == design]
        hist = np.bincount(js, minlength=dev.n_beams) / max(len(js), 1)
        doc["histogram"] = hist.tolist()
        with open(out / f"histogram_{design}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["beam", "fraction"])
            for j, f in enumerate(hist):
                w.writerow([j, repr(float(f))])
    return doc


def cmd_map(args) -> int:
    out = Path(args.out or "out")
    ds = read_dataset(args.dataset) if args.dataset else None
    doc = export_map(args.device, args.n_fib, out, args.az_steps, args.el_steps, ds)
    print(f"{args.device}: n_fib={args.n_fib}, empty beams {doc['empty_beams']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fibbeam", description="Device-agnostic beam selection experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--seed", type=int, help="master seed for data generation")
        sp.add_argument("--profile", choices=("desk", "paper"))
        sp.add_argument("--out", help="output directory")

    for name, fn in (("gen-scene", cmd_gen_scene), ("gen-dataset", cmd_gen_dataset), ("train", cmd_train)):
        sp = sub.add_parser(name)
        common(sp)
        sp.set_defaults(fn=fn)
    sp = sub.add_parser("eval")
    common(sp)
    sp.add_argument("--mismatch", help="evaluate models trained on A against test set B, as trA:teB")
    sp.set_defaults(fn=cmd_eval)
    sp = sub.add_parser("run", help="generate, train and evaluate one comparison in memory")
    common(sp)
    sp.add_argument("--experiment", choices=(*RECIPES, "all"), default="parity")
    sp.set_defaults(fn=cmd_run)
    sp = sub.add_parser("map")
    sp.add_argument("--device", choices=(*DESIGNS, "ULA4", "ULA8"), default="EF")
    sp.add_argument("--n-fib", type=int, default=100)
    sp.add_argument("--az-steps", type=int, default=360)
    sp.add_argument("--el-steps", type=int, default=180)
    sp.add_argument("--dataset", help="dataset JSONL for the best-beam histogram")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(fn=cmd_map)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, DigestMismatch, DatasetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
