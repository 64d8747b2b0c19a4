"""Poses, a deterministic image-method path tracer and MIMO channel synthesis.

The tracer stands in for a full ray tracer: a box-shaped room, a line-of-sight
path, first-order wall images and (when a band's path budget needs them)
second-order images. Everything is a pure function of the scene and the UT pose.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from itertools import permutations
from pathlib import Path

import numpy as np

from .antenna import ArrayGeometry, Device, ElementPattern, Panel, array_response
from .rotations import rotation_matrix
from .sphgrid import Direction, unit_vector, vector_to_angles

__all__ = [
    "Pose",
    "PathSet",
    "Scene",
    "OfdmConfig",
    "rotation_matrix",
    "gcs_to_lcs",
    "lcs_to_gcs",
    "sample_pose",
    "trace_paths",
    "narrowband_channel",
    "device_channels",
    "ofdm_channels",
    "load_scene",
    "save_scene",
    "read_pathsets",
    "write_pathsets",
]

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    orientation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "orientation", tuple(float(x) for x in self.orientation))
        if not all(math.isfinite(x) for x in self.position + self.orientation):
            raise ValueError("pose entries must be finite")

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(*self.orientation)


def gcs_to_lcs(direction, pose: Pose) -> Direction:
    v = np.asarray(direction, dtype=float)
    if not np.any(v):
        raise ValueError("direction vector must be nonzero")
    return Direction.from_vector(pose.rotation.T @ v)


def lcs_to_gcs(d: Direction, pose: Pose) -> np.ndarray:
    return pose.rotation @ unit_vector(d)


# --------------------------------------------------------------------------- paths


@dataclass(frozen=True)
class PathSet:
    """Multipath description. Direction vectors are unit rows in the AP / UT local frames.

    ``aod`` points from the AP towards the first interaction; ``aoa`` points from the
    UT back towards the last interaction (i.e. where the wave comes from).
    """

    power: np.ndarray
    phase: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    delay: np.ndarray
    is_los: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.power < 0) or np.any(self.delay < 0):
            raise ValueError("path powers and delays must be non-negative")

    def __len__(self) -> int:
        return len(self.power)

    @property
    def aod_angles(self) -> tuple[np.ndarray, np.ndarray]:
        return vector_to_angles(self.aod)

    @property
    def aoa_angles(self) -> tuple[np.ndarray, np.ndarray]:
        return vector_to_angles(self.aoa)

    @property
    def gain(self) -> np.ndarray:
        """Complex amplitudes ``sqrt(rho) * exp(j * phase)``."""
        return np.sqrt(self.power) * np.exp(1j * self.phase)

    def to_record(self) -> dict:
        aod_az, aod_zen = self.aod_angles
        aoa_az, aoa_zen = self.aoa_angles
        return {
            "power": self.power.tolist(),
            "phase": self.phase.tolist(),
            "aod_azimuth": aod_az.tolist(),
            "aod_zenith": aod_zen.tolist(),
            "aoa_azimuth": aoa_az.tolist(),
            "aoa_zenith": aoa_zen.tolist(),
            "delay": self.delay.tolist(),
            "is_los": [bool(x) for x in self.is_los],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PathSet":
        from .sphgrid import angles_to_vectors

        arr = lambda k: np.asarray(rec[k], dtype=float).reshape(-1)
        return cls(
            power=arr("power"),
            phase=arr("phase"),
            aod=angles_to_vectors(arr("aod_azimuth"), arr("aod_zenith")).reshape(-1, 3),
            aoa=angles_to_vectors(arr("aoa_azimuth"), arr("aoa_zenith")).reshape(-1, 3),
            delay=arr("delay"),
            is_los=np.asarray(rec["is_los"], dtype=bool).reshape(-1),
        )


def write_pathsets(path, pathsets) -> None:
    """Line-delimited JSON, one :meth:`PathSet.to_record` per line."""
    with open(path, "w") as fh:
        for ps in pathsets:
            fh.write(json.dumps(ps.to_record(), sort_keys=True) + "\n")


def read_pathsets(path) -> list[PathSet]:
    """Loader for externally traced paths (same record layout as :func:`write_pathsets`)."""
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(PathSet.from_record(json.loads(line)))
    return out


# --------------------------------------------------------------------------- scene

WALL_NAMES = ("x0", "x1", "y0", "y1", "floor", "ceiling")


@dataclass(frozen=True)
class Scene:
    room: tuple[float, float, float] = (7.0, 7.0, 3.0)
    ap: Pose = field(default_factory=lambda: Pose((0.1, 3.5, 2.0)))
    grid_x: tuple[float, float] = (2.5, 6.5)
    grid_y: tuple[float, float] = (0.25, 6.75)
    grid_height: float = 1.5
    wall_loss_db: tuple[float, ...] = (8.0,) * 6
    freq_sub6: float = 3.5e9
    freq_mmwave: float = 60e9
    los_block_probability: float = 0.5
    max_paths_mmwave: int = 5
    max_paths_sub6: int = 15
    fixed_ut_orientation: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if len(self.wall_loss_db) != 6 or any(l < 0 for l in self.wall_loss_db):
            raise ValueError("six non-negative wall losses (dB) are required")
        lx, ly, lz = self.room
        if not (0 <= self.grid_x[0] <= self.grid_x[1] <= lx and 0 <= self.grid_y[0] <= self.grid_y[1] <= ly):
            raise ValueError("user grid must lie inside the room")
        if not 0 < self.grid_height < lz:
            raise ValueError("grid height must lie inside the room")
        if not _inside(self.room, np.array(self.ap.position)):
            raise ValueError("AP must lie inside the room")

    def wavelength(self, band: str) -> float:
        if band == "mmwave":
            return SPEED_OF_LIGHT / self.freq_mmwave
        if band == "sub6":
            return SPEED_OF_LIGHT / self.freq_sub6
        raise ValueError(f"unknown band {band!r}")

    def max_paths(self, band: str) -> int:
        return self.max_paths_mmwave if band == "mmwave" else self.max_paths_sub6

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ap"] = {"position": list(self.ap.position), "orientation": list(self.ap.orientation)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        d = dict(d)
        ap = d.pop("ap", None)
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        if ap is not None:
            kwargs["ap"] = Pose(tuple(ap["position"]), tuple(ap.get("orientation", (0.0, 0.0, 0.0))))
        return cls(**kwargs)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2, sort_keys=True) + "\n")


def load_scene(path) -> Scene:
    return Scene.from_dict(json.loads(Path(path).read_text()))


def _inside(room, p: np.ndarray) -> bool:
    return bool(np.all(p >= 0.0) and np.all(p <= np.asarray(room)))


def sample_pose(scene: Scene, rng: np.random.Generator) -> Pose:
    """Uniform position on the user grid; portrait or landscape orientation with probability 1/2.

    Portrait: alpha in [-pi, pi), beta = 0, gamma in [0, pi/2].
    Landscape: alpha in [-pi, pi), beta in [-pi/2, 0], gamma = 0.
    """
    x = rng.uniform(*scene.grid_x)
    y = rng.uniform(*scene.grid_y)
    position = (x, y, scene.grid_height)
    if scene.fixed_ut_orientation is not None:
        return Pose(position, scene.fixed_ut_orientation)
    alpha = rng.uniform(-math.pi, math.pi)
    if rng.random() < 0.5:
        return Pose(position, (alpha, 0.0, rng.uniform(0.0, math.pi / 2)))
    return Pose(position, (alpha, rng.uniform(-math.pi / 2, 0.0), 0.0))


@dataclass(frozen=True)
class _Wall:
    point: np.ndarray
    normal: np.ndarray
    axes: np.ndarray  # (2, 3) in-plane unit axes
    half_extent: np.ndarray  # (2,)
    loss_db: float

    def reflect(self, p: np.ndarray) -> np.ndarray:
        return p - 2.0 * np.dot(p - self.point, self.normal) * self.normal

    def hit(self, a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
        """Intersection of segment a->b with the wall, or None if it misses."""
        da = np.dot(a - self.point, self.normal)
        db = np.dot(b - self.point, self.normal)
        if da * db >= 0.0:
            return None
        p = a + (da / (da - db)) * (b - a)
        local = self.axes @ (p - self.point)
        if np.any(np.abs(local) > self.half_extent * (1.0 + 1e-12)):
            return None
        return p


def _box_walls(room, losses) -> list[_Wall]:
    lx, ly, lz = room
    e = np.eye(3)
    centre = np.array([lx, ly, lz]) / 2.0
    walls = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for side in (0, 1):
            point = centre.copy()
            point[axis] = side * room[axis]
            walls.append(
                _Wall(
                    point=point,
                    normal=e[axis].copy(),
                    axes=e[others].copy(),
                    half_extent=np.array([room[a] / 2.0 for a in others]),
                    loss_db=float(losses[2 * axis + side]),
                )
            )
    return walls


def _trace_geometry(ap_pos, ut_pos, walls, second_order: bool):
    """Yield ``(departure_vec, arrival_vec, length, loss_db, is_los)`` in the global frame."""
    out = [(ut_pos - ap_pos, ap_pos - ut_pos, float(np.linalg.norm(ut_pos - ap_pos)), 0.0, True)]
    for w in walls:
        img = w.reflect(ap_pos)
        p = w.hit(ut_pos, img)
        if p is None:
            continue
        out.append((p - ap_pos, p - ut_pos, float(np.linalg.norm(img - ut_pos)), w.loss_db, False))
    if second_order:
        for wa, wb in permutations(walls, 2):
            img1 = wa.reflect(ap_pos)
            img2 = wb.reflect(img1)
            pb = wb.hit(ut_pos, img2)
            if pb is None:
                continue
            pa = wa.hit(pb, img1)
            if pa is None:
                continue
            length = float(np.linalg.norm(img2 - ut_pos))
            out.append((pa - ap_pos, pb - ut_pos, length, wa.loss_db + wb.loss_db, False))
    return out


def _build_pathset(geometry, wavelength, ap_rot, ut_rot, max_paths, los_blocked) -> PathSet:
    rows = []
    for dep, arr, length, loss_db, is_los in geometry:
        if is_los and los_blocked:
            continue
        power = (wavelength / (4.0 * math.pi * length)) ** 2 * 10.0 ** (-loss_db / 10.0)
        rows.append((power, length, dep, arr, is_los))
    # strongest first; stable so geometric order breaks ties
    order = sorted(range(len(rows)), key=lambda i: -rows[i][0])[:max_paths]
    rows = [rows[i] for i in order]
    power = np.array([r[0] for r in rows])
    length = np.array([r[1] for r in rows])
    dep = np.array([r[2] / np.linalg.norm(r[2]) for r in rows]).reshape(-1, 3)
    arr = np.array([r[3] / np.linalg.norm(r[3]) for r in rows]).reshape(-1, 3)
    return PathSet(
        power=power,
        phase=np.mod(-2.0 * math.pi * length / wavelength, 2.0 * math.pi),
        aod=dep @ ap_rot,
        aoa=arr @ ut_rot,
        delay=length / SPEED_OF_LIGHT,
        is_los=np.array([r[4] for r in rows], dtype=bool),
    )


def trace_paths(scene: Scene, ut: Pose, band: str, los_blocked: bool = False) -> PathSet:
    """Deterministic multipath between the scene's AP and ``ut``.

    ``mmwave`` keeps the strongest ``max_paths_mmwave`` paths; ``sub6`` keeps up to
    ``max_paths_sub6``, adding second-order images when first-order paths fall short.
    """
    ut_pos = np.array(ut.position)
    if not _inside(scene.room, ut_pos):
        raise ValueError(f"UT position {ut.position} outside the room")
    walls = _box_walls(scene.room, scene.wall_loss_db)
    budget = scene.max_paths(band)
    second = budget > 1 + len(walls)
    geo = _trace_geometry(np.array(scene.ap.position), ut_pos, walls, second)
    return _build_pathset(geo, scene.wavelength(band), scene.ap.rotation, ut.rotation, budget, los_blocked)


# --------------------------------------------------------------------------- channels


def narrowband_channel(
    paths: PathSet, ap_geometry: ArrayGeometry, ap_pattern: ElementPattern, panel: Panel
) -> np.ndarray:
    """``H = sum_l sqrt(rho_l) e^{j phase_l} a_UT(aoa_l) a_AP(aod_l)^H`` for one UT panel.

    ``paths.aoa`` is in the device frame; it is rotated into the panel frame here.
    Shape ``(N_panel, N_AP)``.
    """
    a_ap = array_response(ap_geometry, ap_pattern, paths.aod)
    a_ut = array_response(panel.geometry, panel.pattern, paths.aoa @ panel.rotation)
    return np.einsum("l,lu,la->ua", paths.gain, a_ut, a_ap.conj())


def device_channels(
    paths: PathSet, ap_geometry: ArrayGeometry, ap_pattern: ElementPattern, device: Device
) -> list[np.ndarray]:
    return [narrowband_channel(paths, ap_geometry, ap_pattern, panel) for panel in device.panels]


@dataclass(frozen=True)
class OfdmConfig:
    subcarrier_count: int
    bandwidth: float
    cyclic_prefix_taps: int

    def __post_init__(self) -> None:
        if self.subcarrier_count < 1 or self.cyclic_prefix_taps < 1 or self.bandwidth <= 0:
            raise ValueError(f"invalid OFDM configuration {self}")

    @property
    def sample_period(self) -> float:
        return 1.0 / self.bandwidth


def ofdm_path_coefficients(paths: PathSet, cfg: OfdmConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-subcarrier path weights ``(K, L_kept)`` and the mask of kept paths.

    Weight of path l on subcarrier k: ``alpha_l * sum_d exp(-j 2 pi k d / K) sinc(d - tau_l / T)``.
    Paths whose delay reaches the cyclic prefix are dropped with a warning.
    """
    limit = cfg.cyclic_prefix_taps * cfg.sample_period
    keep = paths.delay < limit
    if not np.all(keep):
        warnings.warn(
            f"{int(np.sum(~keep))} path(s) dropped: delay exceeds cyclic prefix ({limit:.3e} s)",
            stacklevel=3,
        )
    d = np.arange(cfg.cyclic_prefix_taps)
    k = np.arange(cfg.subcarrier_count)
    taps = np.sinc(d[None, :] - paths.delay[keep][:, None] / cfg.sample_period)  # (L, D)
    dft = np.exp(-2j * math.pi * np.outer(k, d) / cfg.subcarrier_count)  # (K, D)
    return (dft @ taps.T) * paths.gain[keep][None, :], keep


def ofdm_channels(
    paths: PathSet,
    cfg: OfdmConfig,
    ap_geometry: ArrayGeometry,
    ap_pattern: ElementPattern,
    ut_panel: Panel | None = None,
) -> np.ndarray:
    """Frequency-domain channels of shape ``(K, N_UT, N_AP)``.

    With ``ut_panel=None`` the UT is a single isotropic antenna (``N_UT = 1``), which is
    the uplink sub-6 GHz case.
    """
    coef, keep = ofdm_path_coefficients(paths, cfg)
    a_ap = array_response(ap_geometry, ap_pattern, paths.aod[keep])
    if ut_panel is None:
        a_ut = np.ones((int(np.sum(keep)), 1), dtype=complex)
    else:
        a_ut = array_response(ut_panel.geometry, ut_panel.pattern, paths.aoa[keep] @ ut_panel.rotation)
    return np.einsum("kl,lu,la->kua", coef, a_ut, a_ap.conj())
