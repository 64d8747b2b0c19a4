"""Training and evaluation recipes shared by the CLI and the acceptance suite."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..antenna import Device
from ..beamcore import candidate_list, dbm_to_watts, noisy_rss
from ..evalkit import OverheadConfig, effective_se, top_n_accuracy, top_n_se
from ..neural import MlpParams, indoor_shapes, load_model, predict_joint, predict_sub6, save_model, sub6_shapes, train
from .config import ExperimentConfig
from .dataset import Dataset, device_on_grid

METRIC_COLUMNS = ("experiment", "seed", "method", "n_b", "metric", "value", "sample_count")
PLOT_COLUMNS = ("experiment", "method", "n_b", "metric", "mean", "std", "runs")


class DigestMismatch(ValueError):
    """A model is evaluated on a dataset generated under a different configuration."""


@dataclass
class ModelSet:
    """Trained networks of one seed. Indoor: net1/net2 pairs; sub6: flat nets."""

    scenario: str
    seed: int
    dataset_digest: str
    generic: dict[str, MlpParams]
    specific: dict[str, MlpParams] | None

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for kind, nets in (("generic", self.generic), ("specific", self.specific or {})):
            for name, params in nets.items():
                save_model(params, d / f"{kind}_{name}.npz")

    @classmethod
    def load(cls, directory, scenario: str) -> "ModelSet":
        d = Path(directory)
        files = sorted(d.glob("*.npz"))
        if not files:
            raise FileNotFoundError(f"no model files in {d}")
        nets: dict[str, dict[str, MlpParams]] = {"generic": {}, "specific": {}}
        for f in files:
            kind, name = f.stem.split("_", 1)
            nets[kind][name] = load_model(f)
        first = next(iter(nets["generic"].values()))
        return cls(scenario, int(first.meta["seed"]), first.meta["dataset_digest"], nets["generic"], nets["specific"] or None)


def _train_one(x, labels, shape, cfg: ExperimentConfig, seed: int, digest: str, beam_index=None) -> MlpParams:
    params, _ = train(x, labels, shape, replace(cfg.train, seed=seed), beam_index=beam_index)
    params.meta["dataset_digest"] = digest
    return params


def train_indoor(ds: Dataset, cfg: ExperimentConfig, seed: int, specific: bool = True) -> ModelSet:
    """NET_I plus the generic NET_II, and the device-specific NET_II when ``specific``.

    NET_I is shared by both methods, so the comparison isolates the UT-side network.
    """
    n_ap = int(np.prod(cfg.ap_geometry))
    n_ut = len(ds.label_specific[0])
    shapes = indoor_shapes(n_ap, n_ut, ds.n_fib, cfg.hidden_layers, cfg.hidden_width, ds.features.shape[1])
    onehot_ap = np.eye(n_ap)[ds.i_star]
    net1 = _train_one(ds.features, onehot_ap, shapes["net1"], cfg, seed, ds.digest)
    gen2 = _train_one(ds.features, ds.label_generic, shapes["net2_generic"], cfg, seed, ds.digest, ds.i_star)
    spec = None
    if specific:
        if len(set(ds.device_id)) != 1:
            raise ValueError("a device-specific network needs a single-device dataset")
        spec2 = _train_one(ds.features, ds.stacked("label_specific"), shapes["net2_specific"], cfg, seed, ds.digest, ds.i_star)
        spec = {"net1": net1, "net2": spec2}
    return ModelSet("indoor-pose", seed, ds.digest, {"net1": net1, "net2": gen2}, spec)


def train_sub6(ds: Dataset, cfg: ExperimentConfig, seed: int, specific: bool = True) -> ModelSet:
    n_ap = int(np.prod(cfg.ap_geometry))
    n_ut = len(ds.label_specific[0]) // n_ap
    shapes = sub6_shapes(ds.features.shape[1], n_ap, n_ut, ds.n_fib, cfg.hidden_layers, cfg.hidden_width)
    gen = _train_one(ds.features, ds.label_generic, shapes["generic"], cfg, seed, ds.digest)
    spec = None
    if specific:
        spec = {"net": _train_one(ds.features, ds.stacked("label_specific"), shapes["specific"], cfg, seed, ds.digest)}
    return ModelSet("sub6", seed, ds.digest, {"net": gen}, spec)


def train_models(ds: Dataset, cfg: ExperimentConfig, seed: int, specific: bool = True) -> ModelSet:
    fn = train_indoor if cfg.scenario == "indoor-pose" else train_sub6
    return fn(ds, cfg, seed, specific)


def check_digest(models: ModelSet, test: Dataset, mismatch: bool) -> None:
    if not mismatch and models.dataset_digest != test.digest:
        raise DigestMismatch(
            f"model trained on config {models.dataset_digest[:12]} but test set has {test.digest[:12]}; "
            "use mismatch mode to evaluate across configurations"
        )


# --------------------------------------------------------------------------- prediction


def joint_probabilities(models: ModelSet, method: str, test: Dataset, device: Device) -> np.ndarray:
    """Pair probabilities ``(B, N_AP, N_UT)`` for ``method`` in {generic, specific}."""
    if method == "generic":
        nets, dev = models.generic, device
    elif method == "specific":
        if models.specific is None:
            raise ValueError("model set has no device-specific networks")
        nets, dev = models.specific, None
    else:
        raise ValueError(f"unknown method {method!r}")
    if models.scenario == "indoor-pose":
        return predict_joint(nets["net1"], nets["net2"], test.features, dev)
    n_ap = test.rss_true[0].shape[0]
    return predict_sub6(nets["net"], test.features, dev, n_ap)


# --------------------------------------------------------------------------- metrics


def selection_metrics(
    joint: np.ndarray, test: Dataset, n_b_list, cfg: ExperimentConfig, sensing_seed: int, noiseless: bool = False
) -> dict[int, tuple[float, float]]:
    """Misalignment probability and mean ESE per list size.

    Each sample's measurements share one noise draw across list sizes, so the lists are
    nested in both pairs and measurement values.
    """
    noise = dbm_to_watts(cfg.noise_dbm)
    over = OverheadConfig(cfg.frame_duration, cfg.sensing_slot)
    n_b_list = sorted(set(int(n) for n in n_b_list))
    mis = {n: 0 for n in n_b_list}
    ese = {n: 0.0 for n in n_b_list}
    for k, (p, true) in enumerate(zip(joint, test.rss_true)):
        n_max = min(max(n_b_list), p.size)
        flat = candidate_list(p, n_max)
        amp = np.sqrt(true.ravel()[flat])
        rng = np.random.default_rng([sensing_seed, 2, k])
        measured = noisy_rss(amp, 0.0 if noiseless else noise, rng)
        best = float(true.max())
        for n in n_b_list:
            m = min(n, n_max)
            got = float(true.ravel()[flat[int(np.argmax(measured[:m]))]])
            if got < best and not math.isclose(got, best, rel_tol=1e-12, abs_tol=0.0):
                mis[n] += 1
            ese[n] += effective_se(got / noise, n, over)
    count = len(joint)
    return {n: (mis[n] / count, ese[n] / count) for n in n_b_list}


def genie_ese(test: Dataset, cfg: ExperimentConfig) -> float:
    noise = dbm_to_watts(cfg.noise_dbm)
    return float(np.mean([math.log2(1.0 + t.max() / noise) for t in test.rss_true]))


def indoor_rows(experiment: str, models: ModelSet, test: Dataset, cfg: ExperimentConfig, methods, mismatch: bool = False):
    """Metric rows of one trained seed on one test set."""
    check_digest(models, test, mismatch)
    designs = sorted(set(test.device_id))
    if len(designs) != 1:
        raise ValueError("evaluation needs a single-device test set")
    device = device_on_grid(designs[0], test.n_fib)
    rows = []
    for method in methods:
        joint = joint_probabilities(models, method, test, device)
        for n, (mis, ese) in selection_metrics(joint, test, cfg.n_b, cfg, models.seed).items():
            rows.append((experiment, models.seed, method, n, "misalignment", mis, len(test)))
            rows.append((experiment, models.seed, method, n, "ese", ese, len(test)))
    rows.append((experiment, models.seed, "genie", 0, "ese", genie_ese(test, cfg), len(test)))
    return rows


def sub6_rows(experiment: str, models: ModelSet, test: Dataset, cfg: ExperimentConfig, methods, mismatch: bool = False):
    check_digest(models, test, mismatch)
    device = device_on_grid(test.device_id[0], test.n_fib)
    truth = list(zip(test.i_star.tolist(), test.j_star.tolist()))
    se = test.stacked("rss_true")
    rows = []
    for method in methods:
        joint = joint_probabilities(models, method, test, device)
        for n in cfg.top_n:
            rows.append((experiment, models.seed, method, n, "top_n_accuracy", top_n_accuracy(joint, truth, n), len(test)))
            rows.append((experiment, models.seed, method, n, "top_n_se", top_n_se(joint, se, n), len(test)))
    rows.append((experiment, models.seed, "genie", 0, "top_n_se", float(np.mean(se.reshape(len(se), -1).max(axis=1))), len(test)))
    return rows


def evaluate(experiment: str, models: ModelSet, test: Dataset, cfg: ExperimentConfig, methods=None, mismatch: bool = False):
    if methods is None:
        methods = ("generic", "specific") if models.specific is not None else ("generic",)
    fn = indoor_rows if models.scenario == "indoor-pose" else sub6_rows
    return fn(experiment, models, test, cfg, methods, mismatch)


def seed_mean(rows, experiment: str, method: str, metric: str, n_b: int) -> float:
    vals = [r[5] for r in rows if r[0] == experiment and r[2] == method and r[4] == metric and r[3] == n_b]
    if not vals:
        raise KeyError(f"no rows for {experiment}/{method}/{metric}/n_b={n_b}")
    return float(np.mean(vals))


# --------------------------------------------------------------------------- CSV


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def plot_csv(rows) -> str:
    """Seed-averaged table: one line per (experiment, method, n_b, metric)."""
    groups: dict[tuple, list[float]] = {}
    for exp, _seed, method, n_b, metric, value, _count in rows:
        groups.setdefault((exp, method, n_b, metric), []).append(float(value))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_COLUMNS)
    for key in sorted(groups, key=lambda k: (k[0], k[1], int(k[2]), k[3])):
        vals = np.array(groups[key])
        w.writerow([*key[:2], key[2], key[3], _fmt(vals.mean()), _fmt(vals.std()), len(vals)])
    return buf.getvalue()


def read_metrics(path) -> list[tuple]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [(e, int(s), m, int(n), k, float(v), int(c)) for e, s, m, n, k, v, c in reader]
