"""Beam-selection metrics: misalignment, SNR, effective and Top-n spectral efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .beamcore import argmax_pair, candidate_list

MISALIGN_RTOL = 1e-12


@dataclass(frozen=True)
class OverheadConfig:
    frame_duration: float = 20e-3
    sensing_slot: float = 0.1e-3

    def __post_init__(self) -> None:
        if self.frame_duration <= 0 or self.sensing_slot <= 0:
            raise ValueError("frame duration and sensing slot must be positive")

    def max_list_size(self) -> int:
        return int(math.floor(self.frame_duration / self.sensing_slot + 1e-9))


@dataclass(frozen=True)
class TrialResult:
    true_rss: np.ndarray  # noiseless (N_AP, N_UT)
    selected: tuple[int, int]
    n_b: int

    def __post_init__(self) -> None:
        i, j = self.selected
        if not (0 <= i < self.true_rss.shape[0] and 0 <= j < self.true_rss.shape[1]):
            raise ValueError(f"selected pair {self.selected} outside codebook bounds {self.true_rss.shape}")

    @property
    def misaligned(self) -> bool:
        best = float(np.max(self.true_rss))
        got = float(self.true_rss[self.selected])
        return got < best and not math.isclose(got, best, rel_tol=MISALIGN_RTOL, abs_tol=0.0)

    def snr(self, noise_var: float) -> float:
        return snr_from_rss(float(self.true_rss[self.selected]), noise_var)


def misalignment_probability(results: Sequence[TrialResult]) -> float:
    if len(results) == 0:
        raise ValueError("no trial results")
    return sum(r.misaligned for r in results) / len(results)


def snr_of(H, u, v, power: float, noise_var: float) -> float:
    """``P |v^H H u|^2 / noise_var``."""
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    g = np.vdot(np.asarray(v, dtype=complex), np.atleast_2d(H) @ np.asarray(u, dtype=complex))
    return float(power * abs(g) ** 2 / noise_var)


def snr_from_rss(noiseless_rss, noise_var: float):
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    return np.asarray(noiseless_rss) / noise_var if np.ndim(noiseless_rss) else float(noiseless_rss) / noise_var


def overhead_factor(n_b: int, cfg: OverheadConfig) -> float:
    if n_b < 1:
        raise ValueError("at least one beam pair must be sensed")
    if n_b * cfg.sensing_slot > cfg.frame_duration * (1.0 + 1e-12):
        raise ValueError(f"sensing {n_b} pairs exceeds the frame duration")
    return max(0.0, (cfg.frame_duration - n_b * cfg.sensing_slot) / cfg.frame_duration)


def effective_se(snr: float, n_b: int, cfg: OverheadConfig) -> float:
    """``((T_fr - n_b t_sense) / T_fr) * log2(1 + snr)``."""
    return overhead_factor(n_b, cfg) * math.log2(1.0 + snr)


def genie_baseline(true_rss: np.ndarray, noise_var: float) -> tuple[tuple[int, int], float]:
    """Best pair by noiseless SNR and its SE with no sensing overhead."""
    pair = argmax_pair(true_rss)
    return pair, math.log2(1.0 + snr_from_rss(float(true_rss[pair]), noise_var))


def top_n_hits(joint_probs: np.ndarray, truth: Sequence[tuple[int, int]], n: int) -> np.ndarray:
    joint_probs = np.asarray(joint_probs)
    n_ut = joint_probs.shape[-1]
    hits = []
    for p, (i, j) in zip(joint_probs, truth):
        hits.append(i * n_ut + j in set(candidate_list(p, n).tolist()))
    return np.array(hits, dtype=bool)


def top_n_accuracy(joint_probs: np.ndarray, truth: Sequence[tuple[int, int]], n: int) -> float:
    """Fraction of samples whose optimal pair is among the ``n`` most probable pairs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(truth) == 0:
        raise ValueError("no samples")
    return float(np.mean(top_n_hits(joint_probs, truth, n)))


def pair_spectral_efficiency(channels: np.ndarray, ap_beams: np.ndarray, ut_beams: np.ndarray, snr: float) -> np.ndarray:
    """Achievable SE of every pair summed over subcarriers; shape ``(N_AP, N_UT)``.

    ``channels`` is ``(K, N_UT, N_AP)`` (a narrowband channel is ``K = 1``) and ``snr``
    multiplies ``|v^H H[k] u|^2`` inside ``log2(1 + .)``.
    """
    channels = np.asarray(channels)
    if channels.ndim == 2:
        channels = channels[None]
    g = np.einsum("jn,knm,im->kij", ut_beams.conj(), channels, ap_beams)
    return np.sum(np.log2(1.0 + snr * np.abs(g) ** 2), axis=0)


def top_n_se(joint_probs: np.ndarray, se: np.ndarray, n: int) -> float:
    """Mean over samples of the best SE among the ``n`` most probable pairs.

    ``se`` holds each sample's per-pair SE matrix, e.g. from :func:`pair_spectral_efficiency`.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    vals = []
    for p, s in zip(joint_probs, se):
        vals.append(float(np.max(np.ravel(s)[candidate_list(p, n)])))
    return float(np.mean(vals))
