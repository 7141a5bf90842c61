"""Airfoil contours: .DAT parsing, normalization, repaneling, rotation.

The canonical airfoil is a 125-node closed loop in Selig order (trailing
edge, along the suction surface to the leading edge, back along the
pressure surface), chord-normalized to [0, 1].  Node 62 is the shared
leading-edge node, so each surface carries 63 nodes on a cosine-spaced
chordwise grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateChord,
    InvalidAirfoil,
    MalformedLine,
    NonFiniteValue,
    NonMonotonicSurface,
    SelfIntersecting,
    TooFewPoints,
)

log = logging.getLogger(__name__)

NODE_COUNT = 125          # nodes of the canonical closed loop
STATION_COUNT = 125       # chordwise sampling stations per surface
ROTATION_PIVOT = (0.25, 0.0)  # quarter chord

MIN_RAW_POINTS = 20
TE_GAP_LIMIT = 0.02
DUPLICATE_TOL = 1e-9


def cosine_stations(n: int) -> np.ndarray:
    """Chordwise abscissae x_k = (1 - cos(k*pi/(n-1)))/2, dense near x=0 and x=1."""
    if n < 3:
        raise ValueError("need at least 3 stations")
    k = np.arange(n, dtype=np.float64)
    x = 0.5 * (1.0 - np.cos(k * np.pi / (n - 1)))
    x[0] = 0.0
    x[-1] = 1.0
    return x


@dataclass(frozen=True)
class StationGrid:
    """Fixed chordwise resampling stations on [0, 1]."""

    stations: np.ndarray

    @classmethod
    def cosine(cls, n: int = STATION_COUNT) -> "StationGrid":
        return cls(cosine_stations(n))

    def __post_init__(self):
        x = np.asarray(self.stations, dtype=np.float64)
        object.__setattr__(self, "stations", x)
        if x.ndim != 1 or x.size < 3:
            raise ValueError("station grid must be a 1-D array of 3+ values")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("station grid endpoints must be exactly 0 and 1")
        if np.any(np.diff(x) <= 0.0):
            raise ValueError("station grid must be strictly increasing")
        if np.max(np.abs(x - cosine_stations(x.size))) > 1e-12:
            raise ValueError("station grid must be cosine-spaced")

    def __len__(self) -> int:
        return self.stations.size

    @property
    def surface_nodes(self) -> np.ndarray:
        """Every other station: the per-surface node abscissae of the loop."""
        if self.stations.size % 2 == 0:
            raise ValueError("surface nodes need an odd station count")
        return self.stations[::2]


CANONICAL_GRID = StationGrid.cosine(STATION_COUNT)


@dataclass
class RawContour:
    """Airfoil coordinates as read from a .DAT file, Selig or reversed order."""

    name: str
    points: np.ndarray  # (N, 2) float64

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)

    def validate(self) -> "RawContour":
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise InvalidAirfoil("contour points must be an (N, 2) array")
        if self.points.shape[0] < MIN_RAW_POINTS:
            raise TooFewPoints(
                f"{self.name!r}: {self.points.shape[0]} points, need >= {MIN_RAW_POINTS}")
        if not np.all(np.isfinite(self.points)):
            raise NonFiniteValue(f"{self.name!r}: non-finite coordinate")
        return self


@dataclass
class Airfoil:
    """Canonical 125-node Selig loop at unit chord."""

    name: str
    points: np.ndarray  # (125, 2) float64

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def validate(self) -> "Airfoil":
        p = self.points
        if p.shape != (NODE_COUNT, 2):
            raise InvalidAirfoil(f"{self.name!r}: expected {NODE_COUNT} points, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidAirfoil(f"{self.name!r}: non-finite coordinate")
        xmin, xmax = p[:, 0].min(), p[:, 0].max()
        if not (-1e-6 <= xmin <= 0.02):
            raise InvalidAirfoil(f"{self.name!r}: min x = {xmin:.6g} outside [-1e-6, 0.02]")
        if not (0.98 <= xmax <= 1.0 + 1e-6):
            raise InvalidAirfoil(f"{self.name!r}: max x = {xmax:.6g} outside [0.98, 1+1e-6]")
        gap = float(np.hypot(*(p[0] - p[-1])))
        if gap > TE_GAP_LIMIT:
            raise InvalidAirfoil(f"{self.name!r}: trailing-edge gap {gap:.4g} > {TE_GAP_LIMIT}")
        seg = np.hypot(*np.diff(p, axis=0).T)
        if np.any(seg <= DUPLICATE_TOL):
            raise InvalidAirfoil(f"{self.name!r}: coincident consecutive points")
        le = leading_edge_index(p)
        if p[:le + 1, 1].mean() < p[le:, 1].mean():
            raise InvalidAirfoil(f"{self.name!r}: not in Selig order (suction surface first)")
        return self


def leading_edge_index(points: np.ndarray) -> int:
    """Index of the minimum-x point; ties broken toward the smaller index."""
    return int(np.argmin(points[:, 0]))


def parse_dat(text: str) -> RawContour:
    """Parse Selig-format .DAT text: name line, then one `x y` pair per line."""
    lines = text.splitlines()
    if not lines:
        raise TooFewPoints("empty file")
    name = lines[0].strip()
    pts = []
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 2:
            raise MalformedLine(lineno, line)
        try:
            x, y = float(tokens[0]), float(tokens[1])
        except ValueError:
            raise MalformedLine(lineno, line) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise NonFiniteValue(f"line {lineno}: non-finite coordinate in {line!r}")
        pts.append((x, y))
    if len(pts) < MIN_RAW_POINTS:
        raise TooFewPoints(f"{name!r}: {len(pts)} points, need >= {MIN_RAW_POINTS}")
    return RawContour(name=name, points=np.array(pts, dtype=np.float64))


def write_dat(name: str, points: np.ndarray) -> str:
    """Emit Selig-format .DAT text with 9 significant digits."""
    rows = "\n".join(f"{x:.9g} {y:.9g}" for x, y in np.asarray(points, dtype=np.float64))
    return f"{name}\n{rows}\n"


def normalize(contour: RawContour) -> RawContour:
    """Shift/scale to unit chord with the leading edge at x = 0; fix reversed order."""
    contour.validate()
    pts = contour.points.copy()
    x = pts[:, 0]
    span = float(x.max() - x.min())
    if span < 1e-6:
        raise DegenerateChord(f"{contour.name!r}: chord span {span:.3g}")
    pts[:, 0] = (pts[:, 0] - x.min()) / span
    pts[:, 1] = pts[:, 1] / span
    le = leading_edge_index(pts)
    if 0 < le < len(pts) - 1:
        upper_mean = pts[:le + 1, 1].mean()
        lower_mean = pts[le:, 1].mean()
        if upper_mean < lower_mean:
            pts = pts[::-1].copy()
            log.info("%s: reversed point order, reordering to Selig", contour.name)
    return RawContour(name=contour.name, points=pts)


def _monotone_surface(surface: np.ndarray, name: str) -> np.ndarray:
    """Keep points of strictly increasing x; error if > 5% of them fold back."""
    x = surface[:, 0]
    keep = np.empty(len(surface), dtype=bool)
    keep[0] = True
    last = x[0]
    violations = 0
    for i in range(1, len(surface)):
        if x[i] > last:
            keep[i] = True
            last = x[i]
        else:
            keep[i] = False
            violations += 1
    if violations > 0.05 * len(surface):
        raise NonMonotonicSurface(
            f"{name!r}: {violations}/{len(surface)} points violate monotonic x")
    if violations:
        log.warning("%s: dropped %d non-monotonic surface points", name, violations)
    return surface[keep]


def _segments_cross(a: np.ndarray, b: np.ndarray) -> bool:
    """Strict proper-intersection test between segment sets a and b, (M,2,2) each."""
    def orient(p, q, r):
        return ((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))

    p1, p2 = a[:, None, 0, :], a[:, None, 1, :]
    p3, p4 = b[None, :, 0, :], b[None, :, 1, :]
    o1 = orient(p1, p2, p3)
    o2 = orient(p1, p2, p4)
    o3 = orient(p3, p4, p1)
    o4 = orient(p3, p4, p2)
    return bool(np.any(((o1 > 0) != (o2 > 0)) & ((o3 > 0) != (o4 > 0))
                       & (o1 != 0) & (o2 != 0) & (o3 != 0) & (o4 != 0)))


def resample_loop(points: np.ndarray, surface_stations: np.ndarray, name: str = "") -> np.ndarray:
    """Resample a Selig contour onto per-surface stations, returning a merged loop.

    The contour is split at the minimum-x point; each surface becomes a
    piecewise-linear function of x (fold-backs dropped, see
    NonMonotonicSurface) and is sampled at `surface_stations`.  The output
    has 2*len(stations)-1 nodes: suction surface from trailing edge to the
    shared leading-edge node, then the pressure surface back.
    """
    pts = np.asarray(points, dtype=np.float64)
    le = leading_edge_index(pts)
    if le == 0 or le == len(pts) - 1:
        raise InvalidAirfoil(f"{name!r}: leading edge at contour endpoint")
    upper = _monotone_surface(pts[:le + 1][::-1], name)   # LE -> TE, increasing x
    lower = _monotone_surface(pts[le:], name)
    if _segments_cross(np.stack([upper[1:-1], upper[2:]], axis=1),
                       np.stack([lower[1:-1], lower[2:]], axis=1)):
        raise SelfIntersecting(f"{name!r}: suction and pressure surfaces cross")
    s = np.asarray(surface_stations, dtype=np.float64)
    yu = np.interp(s, upper[:, 0], upper[:, 1])
    yl = np.interp(s, lower[:, 0], lower[:, 1])
    # vertex-touching crossings evade the strict segment test; negative
    # thickness beyond repaneling noise means the surfaces swapped sides
    if np.min(yu - yl) < -1e-3:
        raise SelfIntersecting(f"{name!r}: pressure surface above suction surface")
    loop = np.empty((2 * len(s) - 1, 2), dtype=np.float64)
    loop[:len(s), 0] = s[::-1]
    loop[:len(s), 1] = yu[::-1]
    loop[len(s):, 0] = s[1:]
    loop[len(s):, 1] = yl[1:]
    return loop


def repanel(contour: RawContour, grid: StationGrid = CANONICAL_GRID) -> Airfoil:
    """Resample a normalized contour into the canonical 125-node loop."""
    if len(grid) != STATION_COUNT:
        raise ValueError(f"canonical repaneling requires {STATION_COUNT} stations")
    loop = resample_loop(contour.points, grid.surface_nodes, contour.name)
    return Airfoil(name=contour.name, points=loop).validate()


def rotate(airfoil: Airfoil, aoa: float) -> Airfoil:
    """Rigid nose-up rotation by `aoa` degrees about the quarter chord.

    Equivalent to holding the freestream horizontal and pitching the
    airfoil to incidence `aoa`.  rotate(a, 0) returns coordinates
    bit-identical to the input.
    """
    if not -90.0 <= aoa <= 90.0:
        raise ValueError(f"aoa {aoa} outside [-90, 90]")
    if aoa == 0.0:
        return replace(airfoil, points=airfoil.points.copy())
    a = math.radians(aoa)
    c, s = math.cos(a), math.sin(a)
    px, py = ROTATION_PIVOT
    dx = airfoil.points[:, 0] - px
    dy = airfoil.points[:, 1] - py
    rotated = np.column_stack((c * dx + s * dy + px, -s * dx + c * dy + py))
    return Airfoil(name=f"{airfoil.name} rot{aoa:+g}", points=rotated)


def split_surfaces(airfoil: Airfoil) -> tuple[np.ndarray, np.ndarray]:
    """(upper, lower) surfaces, each leading-edge first with increasing x."""
    le = leading_edge_index(airfoil.points)
    upper = airfoil.points[:le + 1][::-1].copy()
    lower = airfoil.points[le:].copy()
    return upper, lower


def max_thickness(airfoil: Airfoil, n_probe: int = 400) -> float:
    """Maximum vertical thickness of the loop, probed on a fine chordwise grid."""
    upper, lower = split_surfaces(airfoil)
    xs = np.linspace(max(upper[0, 0], lower[0, 0]), min(upper[-1, 0], lower[-1, 0]), n_probe)
    yu = np.interp(xs, upper[:, 0], upper[:, 1])
    yl = np.interp(xs, lower[:, 0], lower[:, 1])
    return float(np.max(yu - yl))


def contour_deviation(original: np.ndarray, loop: np.ndarray) -> float:
    """Max distance from any original point to the repaneled polyline."""
    p = np.asarray(original, dtype=np.float64)[:, None, :]
    a = np.asarray(loop, dtype=np.float64)[None, :-1, :]
    b = np.asarray(loop, dtype=np.float64)[None, 1:, :]
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=-1), 1e-30)
    t = np.clip(np.sum((p - a) * ab, axis=-1) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    dist = np.linalg.norm(p - proj, axis=-1)
    return float(dist.min(axis=1).max())
