"""World geometry: antenna arrays, passive phase-shifting panels, blockers,
and the angular / wave-vector primitives the channel engine consumes.

All positions are in a single global Cartesian frame, in meters. Elevation is
measured from the horizontal plane (so the z-component of a unit direction is
sin(phi)). A scene is immutable after construction; every function here is
pure and safe for concurrent reads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# Clamped-cosine-power exponents for the parametric element patterns.
BS_PATTERN_EXPONENT = 2.0
META_PATTERN_EXPONENT = 1.0

# Amplitude coefficient applied to single-bounce wall reflections.
DEFAULT_REFLECTION_COEFF = 0.7

_WORLD_UP = np.array([0.0, 0.0, 1.0])


class SceneError(ValueError):
    """Malformed scene description or geometrically inconsistent input."""


@dataclass(frozen=True)
class AngularPair:
    """Azimuth ``theta`` and elevation ``phi`` in radians.

    theta in [-pi, pi), measured in the xy-plane from +x; phi in
    [-pi/2, pi/2], measured from the horizontal plane toward +z.
    """

    theta: float
    phi: float


def wave_vector(angles: AngularPair, wavelength: float) -> np.ndarray:
    """3D wave vector (2*pi/wavelength) * [cos(phi)cos(theta), cos(phi)sin(theta), sin(phi)]."""
    if wavelength <= 0.0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    cp = math.cos(angles.phi)
    return (2.0 * math.pi / wavelength) * np.array(
        [cp * math.cos(angles.theta), cp * math.sin(angles.theta), math.sin(angles.phi)]
    )


def angles_to_direction(angles: AngularPair) -> np.ndarray:
    """Unit direction vector for an azimuth/elevation pair."""
    cp = math.cos(angles.phi)
    return np.array(
        [cp * math.cos(angles.theta), cp * math.sin(angles.theta), math.sin(angles.phi)]
    )


def direction_angles(direction: np.ndarray) -> AngularPair:
    """Azimuth/elevation of a (not necessarily unit) direction vector."""
    d = np.asarray(direction, dtype=float)
    n = np.linalg.norm(d)
    if n == 0.0:
        raise ValueError("cannot take angles of the zero vector")
    d = d / n
    return AngularPair(math.atan2(d[1], d[0]), math.asin(min(1.0, max(-1.0, d[2]))))


def orthonormal_basis(normal, up=_WORLD_UP) -> np.ndarray:
    """Right-handed orthonormal frame for a facet: rows (normal, u_x, u_y).

    u_x is horizontal (in-plane, perpendicular to ``up``) whenever the normal
    is not vertical; u_y completes the frame and points roughly along ``up``.
    """
    n = np.asarray(normal, dtype=float)
    nn = np.linalg.norm(n)
    if nn == 0.0:
        raise SceneError("facet normal must be nonzero")
    n = n / nn
    ux = np.cross(up, n)
    if np.linalg.norm(ux) < 1e-9:
        # Vertical normal (e.g. ceiling-mounted): pick a fixed horizontal axis.
        ux = np.array([1.0, 0.0, 0.0])
    ux = ux / np.linalg.norm(ux)
    uy = np.cross(n, ux)
    return np.vstack([n, ux, uy])


def local_angles(direction: np.ndarray, basis: np.ndarray) -> AngularPair:
    """Angles of a global direction in a facet frame (boresight = facet normal).

    The basis rows (normal, u_x, u_y) become the local (x, y, z) axes, so
    cos(phi)cos(theta) of the result is the direction's projection on the
    facet normal.
    """
    return direction_angles(basis @ np.asarray(direction, dtype=float))


def element_pattern(angles: AngularPair, exponent: float) -> float:
    """Clamped cosine-power radiation pattern, max(cos(phi)cos(theta), 0)**q.

    ``angles`` are in the element's local frame; cos(phi)cos(theta) is the
    projection of the outgoing/incoming direction onto the boresight axis.
    """
    c = math.cos(angles.phi) * math.cos(angles.theta)
    return max(c, 0.0) ** exponent


@dataclass(frozen=True, eq=False)
class ElementPattern:
    """Oriented clamped-cosine-power pattern, vectorized over directions."""

    basis: np.ndarray  # rows (normal, u_x, u_y)
    exponent: float

    def gain(self, directions: np.ndarray) -> np.ndarray:
        """Amplitude gain for unit direction(s) pointing away from the element."""
        c = np.asarray(directions) @ self.basis[0]
        return np.clip(c, 0.0, None) ** self.exponent


@dataclass(frozen=True, eq=False)
class AntennaArray:
    """A set of antenna element positions in the global frame."""

    element_positions: np.ndarray  # (N, 3) meters

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.element_positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise SceneError("array element positions must have shape (N, 3), N >= 1")
        if not np.all(np.isfinite(pos)):
            raise SceneError("array element positions must be finite")
        if len(np.unique(pos.round(decimals=12), axis=0)) != len(pos):
            raise SceneError("array element positions must be pairwise distinct")
        object.__setattr__(self, "element_positions", pos)

    @property
    def n_elements(self) -> int:
        return self.element_positions.shape[0]

    @classmethod
    def planar(cls, center, normal, rows: int, cols: int, spacing: float) -> "AntennaArray":
        """Uniform planar array centered on ``center``, facing ``normal``.

        ``cols`` elements step along the horizontal in-plane axis, ``rows``
        along the vertical one; ``spacing`` is in meters.
        """
        basis = orthonormal_basis(normal)
        return cls(_grid_positions(np.asarray(center, dtype=float), basis, rows, cols, spacing, spacing)[0])


def _grid_positions(center, basis, rows, cols, dx, dy):
    """Centered grid on a facet; returns (positions (L,3), local_x (L,), local_y (L,))."""
    if rows < 1 or cols < 1:
        raise SceneError("grid must have rows >= 1 and cols >= 1")
    i = np.arange(cols) - (cols - 1) / 2.0
    k = np.arange(rows) - (rows - 1) / 2.0
    # Element order: column-major over (i, k); index = i * rows + k.
    ii = np.repeat(i, rows)
    kk = np.tile(k, cols)
    local_x = ii * dx
    local_y = kk * dy
    positions = center + np.outer(local_x, basis[1]) + np.outer(local_y, basis[2])
    return positions, local_x, local_y


def array_response(array: AntennaArray, angles: AngularPair, wavelength: float) -> np.ndarray:
    """Unit-modulus response vector exp(j * k(angles) . p_n) over the array."""
    k = wave_vector(angles, wavelength)
    return np.exp(1j * (array.element_positions @ k))


@dataclass(frozen=True, eq=False)
class EmsPanel:
    """Planar grid of passive phase-shifting elements.

    ``cols`` elements along the horizontal in-plane axis u_x with pitch
    ``dx``, ``rows`` along u_y with pitch ``dy``. Element index runs
    column-major: l = i * rows + k for column i, row k.
    """

    center: np.ndarray
    basis: np.ndarray  # rows (normal, u_x, u_y), orthonormal
    rows: int
    cols: int
    dx: float
    dy: float
    element_positions: np.ndarray = field(init=False)
    local_x: np.ndarray = field(init=False)
    local_y: np.ndarray = field(init=False)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        basis = np.asarray(self.basis, dtype=float)
        if basis.shape != (3, 3) or np.max(np.abs(basis @ basis.T - np.eye(3))) > 1e-9:
            raise SceneError("panel basis must be a 3x3 orthonormal frame")
        if self.dx <= 0 or self.dy <= 0:
            raise SceneError("panel element pitch must be positive")
        pos, lx, ly = _grid_positions(center, basis, self.rows, self.cols, self.dx, self.dy)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "element_positions", pos)
        object.__setattr__(self, "local_x", lx)
        object.__setattr__(self, "local_y", ly)

    @property
    def normal(self) -> np.ndarray:
        return self.basis[0]

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    @classmethod
    def build(cls, center, normal, rows: int, cols: int, spacing: float) -> "EmsPanel":
        return cls(np.asarray(center, dtype=float), orthonormal_basis(normal), rows, cols, spacing, spacing)


@dataclass(frozen=True, eq=False)
class Blocker:
    """Axis-aligned box obstructing propagation."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise SceneError("blocker corners must be 3-vectors")
        if np.any(lo > hi):
            raise SceneError("blocker min corner must be <= max corner componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains_interior(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p > self.lo) and np.all(p < self.hi))


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable world description shared by every pipeline stage."""

    wavelength: float
    bs_position: np.ndarray
    bs_array: AntennaArray
    bs_basis: np.ndarray
    panels: tuple
    blockers: tuple
    test_points: np.ndarray  # (N_U, 3)
    tx_power: float  # sigma_s^2, linear watts
    noise_power: float  # sigma_n^2, linear watts
    reflection_coeff: float = DEFAULT_REFLECTION_COEFF
    bs_pattern_exponent: float = BS_PATTERN_EXPONENT
    meta_pattern_exponent: float = META_PATTERN_EXPONENT

    def __post_init__(self):
        if self.wavelength <= 0:
            raise SceneError("wavelength must be positive")
        if self.tx_power <= 0 or self.noise_power <= 0:
            raise SceneError("tx and noise powers must be positive (linear watts)")
        tp = np.atleast_2d(np.asarray(self.test_points, dtype=float))
        if tp.shape[1] != 3:
            raise SceneError("test points must be (N_U, 3)")
        if len(np.unique(tp.round(decimals=9), axis=0)) != len(tp):
            raise SceneError("test points must be distinct")
        object.__setattr__(self, "test_points", tp)
        object.__setattr__(self, "bs_position", np.asarray(self.bs_position, dtype=float))
        object.__setattr__(self, "panels", tuple(self.panels))
        object.__setattr__(self, "blockers", tuple(self.blockers))

    @property
    def n_points(self) -> int:
        return self.test_points.shape[0]

    @property
    def n_bs(self) -> int:
        return self.bs_array.n_elements

    @property
    def n_panels(self) -> int:
        return len(self.panels)

    def bs_pattern(self) -> ElementPattern:
        return ElementPattern(self.bs_basis, self.bs_pattern_exponent)

    def meta_pattern(self, panel_index: int) -> ElementPattern:
        return ElementPattern(self.panels[panel_index].basis, self.meta_pattern_exponent)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _require(mapping, key, context):
    if key not in mapping:
        raise SceneError(f"{context}: missing field '{key}'")
    return mapping[key]


def _vec3(value, context):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise SceneError(f"{context}: expected a finite [x, y, z] triple, got {value!r}")
    return arr


def _grid_test_points(spec, blockers, context):
    lo = np.asarray(_require(spec, "min", context), dtype=float)
    hi = np.asarray(_require(spec, "max", context), dtype=float)
    step = float(_require(spec, "step", context))
    height = float(_require(spec, "height", context))
    if lo.shape != (2,) or hi.shape != (2,):
        raise SceneError(f"{context}: grid min/max must be [x, y] pairs")
    if step <= 0 or np.any(hi < lo):
        raise SceneError(f"{context}: grid needs step > 0 and max >= min")
    nx = int(math.floor((hi[0] - lo[0]) / step + 1e-9)) + 1
    ny = int(math.floor((hi[1] - lo[1]) / step + 1e-9)) + 1
    xs = lo[0] + step * np.arange(nx)
    ys = lo[1] + step * np.arange(ny)
    pts = []
    for x in xs:
        for y in ys:
            p = np.array([x, y, height])
            if not any(b.contains_interior(p) for b in blockers):
                pts.append(p)
    if not pts:
        raise SceneError(f"{context}: grid produced no test points outside blockers")
    return np.vstack(pts)


def parse_scene(spec: dict, name: str = "scene") -> Scene:
    """Build a Scene from a parsed JSON document, validating field by field."""
    if not isinstance(spec, dict):
        raise SceneError(f"{name}: top level must be an object")
    if "wavelength_m" in spec and "carrier_hz" in spec:
        raise SceneError(f"{name}: give either 'wavelength_m' or 'carrier_hz', not both")
    if "wavelength_m" in spec:
        wavelength = float(spec["wavelength_m"])
    elif "carrier_hz" in spec:
        carrier = float(spec["carrier_hz"])
        if carrier <= 0:
            raise SceneError(f"{name}.carrier_hz: must be positive")
        wavelength = SPEED_OF_LIGHT / carrier
    else:
        raise SceneError(f"{name}: missing 'wavelength_m' or 'carrier_hz'")

    bs = _require(spec, "bs", name)
    bs_position = _vec3(_require(bs, "position", f"{name}.bs"), f"{name}.bs.position")
    arr = _require(bs, "array", f"{name}.bs")
    rows = int(_require(arr, "rows", f"{name}.bs.array"))
    cols = int(_require(arr, "cols", f"{name}.bs.array"))
    spacing = float(_require(arr, "spacing_wavelengths", f"{name}.bs.array")) * wavelength
    bs_normal = _vec3(arr.get("normal", [1.0, 0.0, 0.0]), f"{name}.bs.array.normal")
    bs_basis = orthonormal_basis(bs_normal)
    bs_array = AntennaArray(_grid_positions(bs_position, bs_basis, rows, cols, spacing, spacing)[0])

    blockers = []
    for i, b in enumerate(spec.get("blockers", [])):
        ctx = f"{name}.blockers[{i}]"
        blockers.append(Blocker(_vec3(_require(b, "min", ctx), ctx), _vec3(_require(b, "max", ctx), ctx)))

    panels = []
    for i, p in enumerate(spec.get("panels", [])):
        ctx = f"{name}.panels[{i}]"
        panels.append(
            EmsPanel.build(
                _vec3(_require(p, "center", ctx), f"{ctx}.center"),
                _vec3(_require(p, "normal", ctx), f"{ctx}.normal"),
                int(_require(p, "rows", ctx)),
                int(_require(p, "cols", ctx)),
                float(_require(p, "spacing_wavelengths", ctx)) * wavelength,
            )
        )

    tp_spec = _require(spec, "test_points", name)
    if isinstance(tp_spec, dict):
        grid = tp_spec.get("grid", tp_spec)
        test_points = _grid_test_points(grid, blockers, f"{name}.test_points.grid")
    else:
        test_points = np.vstack([_vec3(p, f"{name}.test_points[{i}]") for i, p in enumerate(tp_spec)])

    return Scene(
        wavelength=wavelength,
        bs_position=bs_position,
        bs_array=bs_array,
        bs_basis=bs_basis,
        panels=tuple(panels),
        blockers=tuple(blockers),
        test_points=test_points,
        tx_power=dbm_to_watts(float(_require(spec, "tx_power_dbm", name))),
        noise_power=dbm_to_watts(float(_require(spec, "noise_power_dbm", name))),
        reflection_coeff=float(spec.get("reflection_coeff", DEFAULT_REFLECTION_COEFF)),
        bs_pattern_exponent=float(spec.get("bs_pattern_exponent", BS_PATTERN_EXPONENT)),
        meta_pattern_exponent=float(spec.get("meta_pattern_exponent", META_PATTERN_EXPONENT)),
    )


def bundled_scene_names():
    root = resources.files("emschart") / "scenes"
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_scene(path_or_name) -> Scene:
    """Load a scene from a JSON file path or a bundled scene name."""
    path = Path(path_or_name)
    if not path.exists() and path.suffix == "" and "/" not in str(path_or_name):
        candidate = resources.files("emschart") / "scenes" / f"{path_or_name}.json"
        if candidate.is_file():
            path = Path(str(candidate))
    if not path.exists():
        raise SceneError(f"scene file not found: {path_or_name}")
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_scene(spec, name=path.stem)
