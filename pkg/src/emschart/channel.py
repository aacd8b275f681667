"""Deterministic single-bounce ray engine and narrowband channel synthesis.

The composite uplink channel for one user position is the direct multipath
channel plus, for every active panel, the cascade through its elements:
h = h_d + sum_j H_out_j diag(exp(j*phi_j)) h_in_j. Propagation phases follow
the exp(-j*2*pi*d/wavelength) convention throughout.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scene import (
    AngularPair,
    AntennaArray,
    ElementPattern,
    Scene,
    array_response,
    direction_angles,
)

SPEED_OF_LIGHT = 299_792_458.0

# Segment/box tests shrink each box by this margin so that rays touching a
# face (reflection sub-segments, grazing rays) count as visible.
_BOX_EPS = 1e-9

CHANNEL_MAGIC = b"CCH1"


@dataclass(frozen=True)
class PathComponent:
    """One deterministic propagation path between a user and the array."""

    gain: complex
    departure: AngularPair  # at the source (user side)
    arrival: AngularPair  # at the destination array, pointing back along the ray
    length: float

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("path length must be positive")

    @property
    def delay(self) -> float:
        return self.length / SPEED_OF_LIGHT


@dataclass(frozen=True, eq=False)
class EmsConfiguration:
    """Per-panel element phase vectors; ``None`` deactivates a panel entirely."""

    phases: tuple  # tuple of (L_j,) float arrays in [0, 2*pi), or None

    def __post_init__(self):
        norm = []
        for p in self.phases:
            if p is None:
                norm.append(None)
            else:
                arr = np.asarray(p, dtype=float)
                if arr.ndim != 1:
                    raise ValueError("panel phase vector must be 1-D")
                norm.append(arr)
        object.__setattr__(self, "phases", tuple(norm))

    @property
    def n_panels(self) -> int:
        return len(self.phases)

    def validate_for(self, scene: Scene):
        if len(self.phases) != scene.n_panels:
            raise ValueError(
                f"configuration has {len(self.phases)} panel entries, scene has {scene.n_panels}"
            )
        for j, p in enumerate(self.phases):
            if p is not None and p.shape != (scene.panels[j].n_elements,):
                raise ValueError(
                    f"panel {j}: phase vector length {p.shape[0]} != {scene.panels[j].n_elements} elements"
                )

    def canonical_bytes(self) -> bytes:
        parts = [b"EMSCFG", struct.pack("<I", len(self.phases))]
        for p in self.phases:
            if p is None:
                parts.append(b"off")
            else:
                parts.append(struct.pack("<I", p.size))
                parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return b"".join(parts)

    def entropy_words(self) -> tuple:
        """Four uint32 words identifying this configuration, for seed streams."""
        digest = hashlib.sha256(self.canonical_bytes()).digest()
        return tuple(struct.unpack("<4I", digest[:16]))

    @classmethod
    def baseline(cls, n_panels: int) -> "EmsConfiguration":
        return cls(phases=(None,) * n_panels)

    @classmethod
    def specular(cls, scene: Scene) -> "EmsConfiguration":
        return cls(phases=tuple(np.zeros(p.n_elements) for p in scene.panels))


def los_visible(a, b, blockers) -> bool:
    """True iff the open segment (a, b) misses every blocker's interior.

    Touching or running along a box face counts as visible.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise ValueError("segment endpoints must differ")
    d = b - a
    for blk in blockers:
        lo = blk.lo + _BOX_EPS
        hi = blk.hi - _BOX_EPS
        t_enter, t_exit = 0.0, 1.0
        hit = True
        for ax in range(3):
            if d[ax] == 0.0:
                if not (lo[ax] < a[ax] < hi[ax]):
                    hit = False
                    break
                continue
            t1 = (lo[ax] - a[ax]) / d[ax]
            t2 = (hi[ax] - a[ax]) / d[ax]
            if t1 > t2:
                t1, t2 = t2, t1
            t_enter = max(t_enter, t1)
            t_exit = min(t_exit, t2)
            if t_enter >= t_exit:
                hit = False
                break
        if hit:
            return False
    return True


def path_gain(length: float, wavelength: float) -> complex:
    """Free-space amplitude with propagation phase: (lambda/(4*pi*d)) * exp(-j*2*pi*d/lambda)."""
    if length <= 0:
        raise ValueError(f"path length must be positive, got {length}")
    amp = wavelength / (4.0 * np.pi * length)
    return amp * np.exp(-2j * np.pi * length / wavelength)


# Axis-aligned box faces: (axis, side) where side 0 is the min face, 1 the max.
_FACES = [(ax, side) for ax in range(3) for side in (0, 1)]


def _specular_via_face(ue, bs, blocker, axis, side):
    """Image-method reflection point on one box face, or None if invalid."""
    plane = blocker.hi[axis] if side else blocker.lo[axis]
    sign = 1.0 if side else -1.0
    # Both endpoints must lie strictly on the outer side of the face plane.
    if sign * (ue[axis] - plane) <= 0 or sign * (bs[axis] - plane) <= 0:
        return None
    mirror = bs.copy()
    mirror[axis] = 2.0 * plane - bs[axis]
    denom = mirror[axis] - ue[axis]
    if denom == 0.0:
        return None
    t = (plane - ue[axis]) / denom
    if not 0.0 < t < 1.0:
        return None
    point = ue + t * (mirror - ue)
    point[axis] = plane
    for other in range(3):
        if other == axis:
            continue
        if not blocker.lo[other] <= point[other] <= blocker.hi[other]:
            return None
    return point


def trace_direct_paths(scene: Scene, ue) -> list:
    """Direct-link multipath set: line of sight plus one specular bounce per
    blocker face reachable by the image method."""
    ue = np.asarray(ue, dtype=float)
    bs = scene.bs_position
    if any(b.contains_interior(ue) for b in scene.blockers):
        raise ValueError(f"user position {ue.tolist()} lies inside a blocker")

    paths = []
    if los_visible(ue, bs, scene.blockers):
        length = float(np.linalg.norm(bs - ue))
        paths.append(
            PathComponent(
                gain=path_gain(length, scene.wavelength),
                departure=direction_angles(bs - ue),
                arrival=direction_angles(ue - bs),
                length=length,
            )
        )
    for blocker in scene.blockers:
        for axis, side in _FACES:
            point = _specular_via_face(ue, bs, blocker, axis, side)
            if point is None:
                continue
            if not (los_visible(ue, point, scene.blockers) and los_visible(point, bs, scene.blockers)):
                continue
            length = float(np.linalg.norm(point - ue) + np.linalg.norm(bs - point))
            paths.append(
                PathComponent(
                    gain=scene.reflection_coeff * path_gain(length, scene.wavelength),
                    departure=direction_angles(point - ue),
                    arrival=direction_angles(point - bs),
                    length=length,
                )
            )
    return paths


def synthesize_channel(
    paths,
    array: AntennaArray,
    wavelength: float,
    pattern: Optional[ElementPattern] = None,
) -> np.ndarray:
    """Sum path contributions into a channel vector, 1/sqrt(P) normalized.

    Each path contributes gain * pattern(arrival) * array_response(arrival);
    an empty path list gives the zero vector.
    """
    n = array.n_elements
    if not paths:
        return np.zeros(n, dtype=complex)
    acc = np.zeros(n, dtype=complex)
    for p in paths:
        rho = 1.0 if pattern is None else float(pattern.gain(_angles_vec(p.arrival)))
        acc += p.gain * rho * array_response(array, p.arrival, wavelength)
    return acc / np.sqrt(len(paths))


def _angles_vec(angles: AngularPair) -> np.ndarray:
    cp = np.cos(angles.phi)
    return np.array([cp * np.cos(angles.theta), cp * np.sin(angles.theta), np.sin(angles.phi)])


def ems_link_channels(scene: Scene, ue, panel_index: int):
    """Element-wise link channels through one panel.

    Returns (h_in, H_out): h_in[l] is the spherical-wave channel from the
    user to element l; H_out[n, l] from element l to BS antenna n. Visibility
    is tested once against the panel center and applied to every element.
    """
    if not 0 <= panel_index < scene.n_panels:
        raise ValueError(f"panel index {panel_index} out of range")
    return _panel_incident(scene, np.asarray(ue, dtype=float), panel_index), _panel_outgoing(scene, panel_index)


def _panel_incident(scene: Scene, ue, j) -> np.ndarray:
    panel = scene.panels[j]
    if not los_visible(ue, panel.center, scene.blockers):
        return np.zeros(panel.n_elements, dtype=complex)
    diff = ue - panel.element_positions  # (L, 3), element -> user
    dist = np.linalg.norm(diff, axis=1)
    dirs = diff / dist[:, None]
    rho = scene.meta_pattern(j).gain(dirs)
    amp = scene.wavelength / (4.0 * np.pi * dist)
    return amp * rho * np.exp(-2j * np.pi * dist / scene.wavelength)


def _panel_outgoing(scene: Scene, j) -> np.ndarray:
    panel = scene.panels[j]
    n_bs = scene.n_bs
    if not los_visible(panel.center, scene.bs_position, scene.blockers):
        return np.zeros((n_bs, panel.n_elements), dtype=complex)
    diff = scene.bs_array.element_positions[:, None, :] - panel.element_positions[None, :, :]
    dist = np.linalg.norm(diff, axis=2)  # (N, L)
    dirs = diff / dist[..., None]
    rho_meta = scene.meta_pattern(j).gain(dirs)  # departure from the panel
    rho_bs = scene.bs_pattern().gain(-dirs)  # arrival at the BS elements
    amp = scene.wavelength / (4.0 * np.pi * dist)
    return amp * rho_meta * rho_bs * np.exp(-2j * np.pi * dist / scene.wavelength)


def composite_channel(scene: Scene, ue, config: EmsConfiguration) -> np.ndarray:
    """Direct channel plus every active panel's cascade term."""
    config.validate_for(scene)
    ue = np.asarray(ue, dtype=float)
    h = synthesize_channel(
        trace_direct_paths(scene, ue), scene.bs_array, scene.wavelength, scene.bs_pattern()
    )
    for j, phi in enumerate(config.phases):
        if phi is None:
            continue
        h_in, h_out = ems_link_channels(scene, ue, j)
        h = h + h_out @ (np.exp(1j * phi) * h_in)
    return h


def write_channel_dump(path, channels: np.ndarray):
    """Binary dump: magic 'CCH1', u32 N_U, u32 N_BS, then row-major
    little-endian (real, imag) float64 pairs."""
    arr = np.ascontiguousarray(channels, dtype="<c16")
    if arr.ndim != 2:
        raise ValueError("channel dump expects an (N_U, N_BS) matrix")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", CHANNEL_MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_channel_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12:
            raise ValueError(f"{path}: truncated channel dump header")
        magic, n_u, n_bs = struct.unpack("<4sII", head)
        if magic != CHANNEL_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {CHANNEL_MAGIC!r}")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != n_u * n_bs:
        raise ValueError(f"{path}: expected {n_u * n_bs} complex entries, found {data.size}")
    return data.reshape(n_u, n_bs).astype(complex)
