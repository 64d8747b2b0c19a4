"""RSS measurements, labels, probability post-processing and candidate lists.

Indices are zero-based. A beam pair ``(i, j)`` is AP beam ``i`` and UT beam ``j``;
flattened pair index is ``i * n_ut + j``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .antenna import Device, beam_gains

DEFAULT_TX_POWER_DBM = 24.0
DEFAULT_NOISE_DBM = -84.0


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0 - 3.0)


DEFAULT_TX_POWER = dbm_to_watts(DEFAULT_TX_POWER_DBM)
DEFAULT_NOISE_VAR = dbm_to_watts(DEFAULT_NOISE_DBM)


class CoverageWarning(UserWarning):
    """A UT beam owns no grid point; the generic label used a fallback direction."""


def _complex_noise(rng: np.random.Generator, var: float, size=None):
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def measure_rss(H, u, v, power: float, noise_var: float, rng: np.random.Generator | None = None) -> float:
    """``|sqrt(P) v^H H u + v^H n|^2`` with a fresh ``n ~ CN(0, noise_var I)``."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    if H.shape != (len(v), len(u)):
        raise ValueError(f"channel shape {H.shape} does not match combiner {len(v)} x beamformer {len(u)}")
    if noise_var < 0:
        raise ValueError("noise variance must be non-negative")
    y = np.sqrt(power) * np.vdot(v, H @ u)
    if noise_var > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_var > 0")
        y += np.vdot(v, _complex_noise(rng, noise_var, len(v)))
    return float(abs(y) ** 2)


def pair_amplitudes(channels: Sequence[np.ndarray], ap_beams: np.ndarray, device: Device, power: float) -> np.ndarray:
    """Noiseless received amplitudes ``sqrt(P) v_j^H H^(p_j) u_i``; shape ``(N_AP, N_UT)``."""
    cols = []
    for p, H in enumerate(channels):
        block = device.codebook.panel_block(p)
        cols.append(block.conj() @ H @ ap_beams.T)  # (n_p, N_AP)
    return np.sqrt(power) * np.concatenate(cols, axis=0).T


def noisy_rss(amplitudes: np.ndarray, noise_var: float, rng: np.random.Generator | None) -> np.ndarray:
    """Measure every entry of an amplitude array once.

    ``v^H n`` with unit-norm ``v`` is ``CN(0, noise_var)``, so adding scalar noise to the
    noiseless amplitude is equivalent in distribution to :func:`measure_rss`.
    """
    if noise_var == 0:
        return np.abs(amplitudes) ** 2
    return np.abs(amplitudes + _complex_noise(rng, noise_var, np.shape(amplitudes))) ** 2


def argmax_pair(matrix: np.ndarray) -> tuple[int, int]:
    """Row-major argmax, which is the lexicographically lowest pair on ties."""
    i, j = np.unravel_index(int(np.argmax(matrix)), matrix.shape)
    return int(i), int(j)


@dataclass(frozen=True)
class RssMatrix:
    values: np.ndarray  # (N_AP, N_UT)
    noiseless: bool

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("RSS values must be a finite, non-negative matrix")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def best_pair(self) -> tuple[int, int]:
        return argmax_pair(self.values)


def sweep(
    channels: Sequence[np.ndarray],
    ap_beams: np.ndarray,
    device: Device,
    power: float = DEFAULT_TX_POWER,
    noise_var: float = DEFAULT_NOISE_VAR,
    noiseless: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[RssMatrix, tuple[int, int]]:
    """Exhaustive sensing of every AP/UT beam pair."""
    if len(channels) != len(device.panels):
        raise ValueError("one channel matrix per device panel is required")
    amp = pair_amplitudes(channels, ap_beams, device, power)
    values = noisy_rss(amp, 0.0 if noiseless else noise_var, rng)
    rss = RssMatrix(values, noiseless)
    return rss, rss.best_pair


def label_specific(j_star: int, n_beams: int) -> np.ndarray:
    if not 0 <= j_star < n_beams:
        raise ValueError(f"beam index {j_star} outside [0, {n_beams})")
    out = np.zeros(n_beams)
    out[j_star] = 1.0
    return out


def label_generic(j_star: int, device: Device, warn: bool = True) -> np.ndarray:
    """Binary label over the grid marking every point owned by ``j_star``.

    If ``j_star`` owns no point, the single grid point where ``j_star`` has the most
    gain is marked instead and a :class:`CoverageWarning` is emitted.
    """
    if device.fib_map is None:
        raise ValueError(f"device {device.name!r} has no fib_map attached")
    if not 0 <= j_star < device.n_beams:
        raise ValueError(f"beam index {j_star} outside [0, {device.n_beams})")
    out = (device.fib_map == j_star).astype(float)
    if not out.any():
        k = int(np.argmax(beam_gains(device, device.grid.vectors)[:, j_star]))
        out[k] = 1.0
        if warn:
            warnings.warn(
                f"device {device.name}: beam {j_star} owns no grid point; labelled point {k}",
                CoverageWarning,
                stacklevel=2,
            )
    return out


def postprocess(p_directions: np.ndarray, device: Device) -> np.ndarray:
    """Collapse direction probabilities onto beams: ``P_j = sum_{k owned by j} P_k``.

    Works on the last axis, so batches ``(..., n_fib)`` map to ``(..., n_beams)``.
    """
    if device.fib_map is None:
        raise ValueError(f"device {device.name!r} has no fib_map attached")
    p = np.asarray(p_directions, dtype=float)
    if p.shape[-1] != len(device.fib_map):
        raise ValueError(f"expected {len(device.fib_map)} direction probabilities, got {p.shape[-1]}")
    onehot = np.zeros((len(device.fib_map), device.n_beams))
    onehot[np.arange(len(device.fib_map)), device.fib_map] = 1.0
    return p @ onehot


def joint_probability(p_ap: np.ndarray, p_ut_given_ap: np.ndarray) -> np.ndarray:
    """``P_{i,j} = P_{j|i} P_i``; batches broadcast over leading axes."""
    return np.asarray(p_ut_given_ap) * np.asarray(p_ap)[..., :, None]


def candidate_list(p: np.ndarray, n_b: int) -> np.ndarray:
    """Top ``n_b`` flat indices by probability (descending, ties to the lowest index)."""
    flat = np.asarray(p, dtype=float).ravel()
    if n_b < 1:
        raise ValueError("candidate list size must be >= 1")
    if n_b > flat.size:
        raise ValueError(f"candidate list size {n_b} exceeds {flat.size} entries")
    return np.argsort(-flat, kind="stable")[:n_b]


def candidate_pairs(p_joint: np.ndarray, n_b: int) -> list[tuple[int, int]]:
    n_ut = p_joint.shape[-1]
    return [(int(f) // n_ut, int(f) % n_ut) for f in candidate_list(p_joint, n_b)]


def train_on_amplitudes(
    amplitudes: np.ndarray, pairs: Sequence[tuple[int, int]], noise_var: float, rng: np.random.Generator | None
) -> tuple[int, int]:
    """Sense each listed pair once and return the strongest measurement (first on ties)."""
    if len(pairs) == 0:
        raise ValueError("candidate list must be non-empty")
    idx = np.array(pairs, dtype=int)
    measured = noisy_rss(amplitudes[idx[:, 0], idx[:, 1]], noise_var, rng)
    best = int(np.argmax(measured))
    return int(idx[best, 0]), int(idx[best, 1])


def beam_train(
    channels: Sequence[np.ndarray],
    ap_beams: np.ndarray,
    device: Device,
    pairs: Sequence[tuple[int, int]],
    noise_var: float = DEFAULT_NOISE_VAR,
    rng: np.random.Generator | None = None,
    power: float = DEFAULT_TX_POWER,
) -> tuple[int, int]:
    """Beam-training step: sense the pairs in ``pairs`` and feed back the best one."""
    return train_on_amplitudes(pair_amplitudes(channels, ap_beams, device, power), pairs, noise_var, rng)
