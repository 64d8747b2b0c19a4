"""Dataset generation for the indoor-pose and dual-band scenarios, plus JSONL persistence.

Every sample draws from its own generator ``default_rng([master_seed, split, index])``,
so a dataset of size ``n`` is a prefix of any larger one and samples can be produced in
any order. LOS blocking alternates deterministically, giving an exact 50/50 split per
device.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..antenna import ArrayGeometry, Device, ElementPattern, attach_grid, build_device, coverage_diagnostic, dft_beams
from ..beamcore import (
    CoverageWarning,
    argmax_pair,
    dbm_to_watts,
    label_generic,
    noisy_rss,
    pair_amplitudes,
)
from ..channel import OfdmConfig, Pose, Scene, device_channels, ofdm_channels, sample_pose, trace_paths
from ..evalkit import pair_spectral_efficiency
from ..sphgrid import fibonacci_grid
from .config import SCHEMA_VERSION, ExperimentConfig, digest_of

SPLITS = {"train": 0, "test": 1}


class DatasetError(ValueError):
    """Malformed dataset file or schema mismatch."""


@lru_cache(maxsize=64)
def device_on_grid(design: str, n_fib: int) -> Device:
    return attach_grid(build_device(design), fibonacci_grid(n_fib))


def mixture_name(designs) -> str:
    return "+".join(designs)


def generator_config(cfg: ExperimentConfig, designs, n_fib: int | None = None) -> dict:
    """The part of an experiment config that determines sample content (not size or seed)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.scenario,
        "scene": cfg.scene().to_dict(),
        "designs": list(designs),
        "n_fib": cfg.n_fib if n_fib is None else n_fib,
        "ap_geometry": list(cfg.ap_geometry),
        "ap_patch": cfg.ap_patch,
        "tx_power_dbm": cfg.tx_power_dbm,
        "noise_dbm": cfg.noise_dbm,
    }
    if cfg.scenario == "indoor-pose":
        doc["noisy_labels"] = cfg.noisy_labels
    else:
        doc.update(
            sub6_ap_geometry=list(cfg.sub6_ap_geometry),
            sub6_ofdm=[cfg.sub6_subcarriers, cfg.sub6_bandwidth, cfg.sub6_cp_taps],
            mmwave_ofdm=[cfg.mmwave_subcarriers, cfg.mmwave_bandwidth, cfg.mmwave_cp_taps],
        )
    return doc


@dataclass
class Dataset:
    meta: dict
    features: np.ndarray
    device_id: list[str]
    i_star: np.ndarray
    j_star: np.ndarray
    rss: list[np.ndarray]  # measured during the label sweep, (N_AP, N_UT)
    rss_true: list[np.ndarray]  # noiseless RSS (indoor) or per-pair SE (sub6)
    label_specific: list[np.ndarray]
    label_generic: np.ndarray
    los_blocked: np.ndarray
    fallback_labels: int = 0
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def digest(self) -> str:
        return self.meta["config_digest"]

    @property
    def n_fib(self) -> int:
        return int(self.meta["config"]["n_fib"])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            dict(self.meta, n_samples=len(idx)),
            self.features[idx],
            [self.device_id[i] for i in idx],
            self.i_star[idx],
            self.j_star[idx],
            [self.rss[i] for i in idx],
            [self.rss_true[i] for i in idx],
            [self.label_specific[i] for i in idx],
            self.label_generic[idx],
            self.los_blocked[idx],
            self.fallback_labels,
            self.extras,
        )

    def head(self, n: int) -> "Dataset":
        return self.subset(np.arange(min(n, len(self))))

    def stacked(self, name: str) -> np.ndarray:
        """Stack a ragged per-sample field; only valid for single-device datasets."""
        return np.stack(getattr(self, name))


# --------------------------------------------------------------------------- features


def pose_features(pose: Pose, room) -> np.ndarray:
    pos = np.asarray(pose.position) / np.asarray(room)
    ang = np.asarray(pose.orientation)
    return np.concatenate([pos, np.sin(ang), np.cos(ang)])


def channel_features(h: np.ndarray) -> np.ndarray:
    """Real and imaginary parts of every subcarrier/antenna entry."""
    flat = np.asarray(h).ravel()
    return np.concatenate([flat.real, flat.imag])


# --------------------------------------------------------------------------- generation


def _context(cfg: ExperimentConfig):
    scene = cfg.scene()
    ap_geo = ArrayGeometry(*cfg.ap_geometry)
    ap_pattern = ElementPattern() if cfg.ap_patch else ElementPattern.iso()
    return scene, ap_geo, ap_pattern, dft_beams(ap_geo)


def _indoor_sample(cfg, ctx, device: Device, rng, los_blocked: bool):
    scene, ap_geo, ap_pattern, ap_beams = ctx
    pose = sample_pose(scene, rng)
    paths = trace_paths(scene, pose, "mmwave", los_blocked)
    amp = pair_amplitudes(device_channels(paths, ap_geo, ap_pattern, device), ap_beams, device, dbm_to_watts(cfg.tx_power_dbm))
    true = np.abs(amp) ** 2
    measured = noisy_rss(amp, dbm_to_watts(cfg.noise_dbm), rng) if cfg.noisy_labels else true
    i, j = argmax_pair(measured)
    spec = np.zeros(device.n_beams)
    spec[j] = 1.0
    return pose_features(pose, scene.room), measured, true, i, j, spec, label_generic(j, device)


def _sub6_sample(cfg, ctx, device: Device, rng, los_blocked: bool):
    scene, ap_geo, ap_pattern, ap_beams = ctx
    pose = sample_pose(scene, rng)
    low = ofdm_channels(
        trace_paths(scene, pose, "sub6", los_blocked),
        OfdmConfig(cfg.sub6_subcarriers, cfg.sub6_bandwidth, cfg.sub6_cp_taps),
        ArrayGeometry(*cfg.sub6_ap_geometry),
        ap_pattern,
    )
    if len(device.panels) != 1:
        raise ValueError("the dual-band scenario needs a single-panel UT")
    panel = device.panels[0]
    k_mm = cfg.mmwave_subcarriers
    high = ofdm_channels(
        trace_paths(scene, pose, "mmwave", los_blocked),
        OfdmConfig(k_mm, cfg.mmwave_bandwidth, cfg.mmwave_cp_taps),
        ap_geo,
        ap_pattern,
        panel,
    )
    # transmit power spread evenly over the subcarriers
    snr = dbm_to_watts(cfg.tx_power_dbm) / (k_mm * dbm_to_watts(cfg.noise_dbm))
    se = pair_spectral_efficiency(high, ap_beams, device.codebook.panel_block(0), snr)
    i, j = argmax_pair(se)
    n_ap, n_ut = se.shape
    spec = np.zeros(n_ap * n_ut)
    spec[i * n_ut + j] = 1.0
    gen = np.zeros((n_ap, device.n_fib))
    gen[i] = label_generic(j, device)
    return channel_features(low), se, se, i, j, spec, gen.ravel()


def generate(cfg: ExperimentConfig, designs, split: str, n_samples: int, seed: int | None = None) -> Dataset:
    """Generate ``n_samples`` samples; mixtures cycle through ``designs`` sample by sample."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {sorted(SPLITS)}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    designs = tuple(designs)
    seed = cfg.master_seed if seed is None else seed
    ctx = _context(cfg)
    make = _indoor_sample if cfg.scenario == "indoor-pose" else _sub6_sample
    rows = []
    fallbacks = 0
    nd = len(designs)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CoverageWarning)
        for idx in range(n_samples):
            design = designs[idx % nd]
            rng = np.random.default_rng([seed, SPLITS[split], idx])
            rows.append((design, (idx // nd) % 2 == 1, *make(cfg, ctx, device_on_grid(design, cfg.n_fib), rng, (idx // nd) % 2 == 1)))
        fallbacks = sum(issubclass(w.category, CoverageWarning) for w in caught)
    gconf = generator_config(cfg, designs)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "name": mixture_name(designs),
        "split": split,
        "seed": seed,
        "n_samples": n_samples,
        "config": gconf,
        "config_digest": digest_of(gconf),
    }
    return Dataset(
        meta,
        np.array([r[2] for r in rows]),
        [r[0] for r in rows],
        np.array([r[5] for r in rows], dtype=int),
        np.array([r[6] for r in rows], dtype=int),
        [r[3] for r in rows],
        [r[4] for r in rows],
        [r[7] for r in rows],
        np.array([r[8] for r in rows]),
        np.array([r[1] for r in rows], dtype=bool),
        fallbacks,
    )


def relabel(ds: Dataset, n_fib: int) -> Dataset:
    """Same samples with generic labels recomputed on an ``n_fib``-point grid."""
    gens = []
    fallbacks = 0
    sub6 = ds.meta["config"]["scenario"] == "sub6"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CoverageWarning)
        for dev_name, i, j, rss in zip(ds.device_id, ds.i_star, ds.j_star, ds.rss):
            dev = device_on_grid(dev_name, n_fib)
            if sub6:
                g = np.zeros((rss.shape[0], n_fib))
                g[i] = label_generic(int(j), dev)
                gens.append(g.ravel())
            else:
                gens.append(label_generic(int(j), dev))
        fallbacks = sum(issubclass(w.category, CoverageWarning) for w in caught)
    gconf = dict(ds.meta["config"], n_fib=n_fib)
    meta = dict(ds.meta, config=gconf, config_digest=digest_of(gconf))
    out = ds.subset(np.arange(len(ds)))
    out.meta = meta
    out.label_generic = np.array(gens)
    out.fallback_labels = fallbacks
    return out


def coverage_report(ds: Dataset) -> dict:
    return {
        "n_fib": ds.n_fib,
        "empty_beams": {d: coverage_diagnostic(device_on_grid(d, ds.n_fib)) for d in sorted(set(ds.device_id))},
        "fallback_labels": ds.fallback_labels,
        "los_fraction": float(np.mean(~ds.los_blocked)) if len(ds) else math.nan,
    }


# --------------------------------------------------------------------------- persistence


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _record(ds: Dataset, k: int) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config_digest": ds.digest,
        "seed": ds.meta["seed"],
        "index": k,
        "device_id": ds.device_id[k],
        "n_fib": ds.n_fib,
        "features": ds.features[k].tolist(),
        "rss": ds.rss[k].tolist(),
        "rss_true": ds.rss_true[k].tolist(),
        "i_star": int(ds.i_star[k]),
        "j_star": int(ds.j_star[k]),
        "label_specific": ds.label_specific[k].astype(int).tolist(),
        "label_generic": ds.label_generic[k].astype(int).tolist(),
        "los": not bool(ds.los_blocked[k]),
    }


def dataset_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    return p, p.with_suffix(".meta.json")


def write_dataset(ds: Dataset, path) -> None:
    """Write ``<path>`` (one JSON record per line) and ``<stem>.meta.json``."""
    data, meta = dataset_paths(path)
    data.parent.mkdir(parents=True, exist_ok=True)
    with open(data, "w", encoding="utf-8", newline="\n") as fh:
        for k in range(len(ds)):
            fh.write(_dumps(_record(ds, k)) + "\n")
    doc = dict(ds.meta, fallback_labels=ds.fallback_labels, coverage=coverage_report(ds))
    meta.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_dataset(path) -> Dataset:
    data, meta_path = dataset_paths(path)
    if not data.is_file() or not meta_path.is_file():
        raise FileNotFoundError(f"dataset {data} or its metadata {meta_path} is missing")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    fallbacks = int(meta.pop("fallback_labels", 0))
    meta.pop("coverage", None)
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"{meta_path}: unsupported schema version {meta.get('schema_version')}")
    recs = []
    with open(data, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            rec = json.loads(line)
            if rec.get("schema_version") != SCHEMA_VERSION:
                raise DatasetError(f"{data}:{line_no}: unsupported schema version")
            if rec["config_digest"] != meta["config_digest"]:
                raise DatasetError(f"{data}:{line_no}: config digest does not match the metadata")
            recs.append(rec)
    if len(recs) != meta["n_samples"]:
        raise DatasetError(f"{data}: expected {meta['n_samples']} samples, found {len(recs)}")
    return Dataset(
        meta,
        np.array([r["features"] for r in recs], dtype=float),
        [r["device_id"] for r in recs],
        np.array([r["i_star"] for r in recs], dtype=int),
        np.array([r["j_star"] for r in recs], dtype=int),
        [np.array(r["rss"], dtype=float) for r in recs],
        [np.array(r["rss_true"], dtype=float) for r in recs],
        [np.array(r["label_specific"], dtype=float) for r in recs],
        np.array([r["label_generic"] for r in recs], dtype=float),
        np.array([not r["los"] for r in recs], dtype=bool),
        fallbacks,
    )
