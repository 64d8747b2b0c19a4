"""End-to-end comparisons: parity, grid size, mixed training, mismatch, dual-band, training size.

A :class:`Runner` caches generated datasets and trained models so recipes that share
inputs (for example the matched EF models used by parity, grid-size and mismatch) train
each network once.
"""

from __future__ import annotations

from dataclasses import replace

from .config import TRAINING_SIZES, ExperimentConfig
from .dataset import Dataset, generate, mixture_name, relabel
from .experiments import ModelSet, evaluate, train_models

RECIPES = ("parity", "grid-size", "mixed", "mismatch", "sub6-parity", "training-size")


class Runner:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._data: dict = {}
        self._models: dict = {}

    def dataset(self, designs, split: str, n_fib: int | None = None, cfg: ExperimentConfig | None = None) -> Dataset:
        cfg = cfg or self.cfg
        designs = tuple(designs)
        n_fib = cfg.n_fib if n_fib is None else n_fib
        key = (cfg.scenario, designs, split, n_fib)
        if key not in self._data:
            base = (cfg.scenario, designs, split, cfg.n_fib)
            if base not in self._data:
                size = cfg.n_train if split == "train" else cfg.n_test
                self._data[base] = generate(cfg, designs, split, size * len(designs))
            if n_fib != cfg.n_fib:
                self._data[key] = relabel(self._data[base], n_fib)
        return self._data[key]

    def models(self, designs, seed: int, n_fib: int | None = None, n_train: int | None = None, specific: bool = True,
               cfg: ExperimentConfig | None = None) -> ModelSet:
        cfg = cfg or self.cfg
        designs = tuple(designs)
        specific = specific and len(designs) == 1
        if n_train is not None and n_train >= cfg.n_train * len(designs):
            n_train = None
        key = (cfg.scenario, designs, seed, n_fib or cfg.n_fib, n_train)
        have = self._models.get(key)
        if have is not None and (have.specific is not None or not specific):
            return have
        ds = self.dataset(designs, "train", n_fib, cfg)
        if n_train is not None:
            ds = ds.head(n_train)
        self._models[key] = train_models(ds, cfg, seed, specific)
        return self._models[key]


def parity(run: Runner, design: str = "EF"):
    test = run.dataset((design,), "test")
    rows = []
    for seed in run.cfg.seeds:
        rows += evaluate("parity", run.models((design,), seed), test, run.cfg)
    return rows


def grid_size(run: Runner, n_fibs=(10, 25, 100), design: str = "EF"):
    rows = []
    for n_fib in n_fibs:
        test = run.dataset((design,), "test", n_fib)
        for seed in run.cfg.seeds:
            m = run.models((design,), seed, n_fib, specific=False)
            rows += evaluate(f"grid-size:n_fib={n_fib}", m, test, run.cfg, methods=("generic",))
    return rows


def mixed(run: Runner, designs=("E", "F", "EF")):
    """Generic networks trained on each matched set and on the union of all of them."""
    rows = []
    for seed in run.cfg.seeds:
        mix = run.models(designs, seed, specific=False)
        for d in designs:
            test = run.dataset((d,), "test")
            rows += evaluate(f"mixed:tr{d}:te{d}", run.models((d,), seed), test, run.cfg, methods=("generic",))
            rows += evaluate(f"mixed:tr{mixture_name(designs)}:te{d}", mix, test, run.cfg, methods=("generic",), mismatch=True)
    return rows


def mismatch(run: Runner, designs=("E", "F", "EF")):
    rows = []
    for seed in run.cfg.seeds:
        for a in designs:
            m = run.models((a,), seed)
            for b in designs:
                rows += evaluate(f"mismatch:tr{a}:te{b}", m, run.dataset((b,), "test"), run.cfg, methods=("generic",), mismatch=True)
    return rows


def sub6_config(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.scenario == "sub6":
        return cfg
    return replace(cfg, scenario="sub6", designs=("ULA8",), ut_design="ULA8", scene_file=None)


def sub6_parity(run: Runner):
    cfg = sub6_config(run.cfg)
    design = (cfg.ut_design,)
    test = run.dataset(design, "test", cfg=cfg)
    rows = []
    for seed in cfg.seeds:
        rows += evaluate("sub6-parity", run.models(design, seed, cfg=cfg), test, cfg)
    return rows


def training_size(run: Runner, sizes=TRAINING_SIZES, design: str = "EF"):
    """Both methods trained on growing prefixes of one training set (capped at its size)."""
    test = run.dataset((design,), "test")
    rows = []
    for n in sorted({min(s, run.cfg.n_train) for s in sizes}):
        for seed in run.cfg.seeds:
            rows += evaluate(f"training-size:n={n}", run.models((design,), seed, n_train=n), test, run.cfg)
    return rows


def run_recipe(name: str, run: Runner):
    fns = {
        "parity": parity,
        "grid-size": grid_size,
        "mixed": mixed,
        "mismatch": mismatch,
        "sub6-parity": sub6_parity,
        "training-size": training_size,
    }
    if name not in fns:
        raise ValueError(f"unknown recipe {name!r}; choose from {RECIPES}")
    return fns[name](run)
