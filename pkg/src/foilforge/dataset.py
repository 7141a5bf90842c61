"""Dataset assembly: solver sweeps, the seven case encodings, Cp/outline
rasterization for the CNN, external Cp-file ingestion, grouped train/test
splitting, and the AFDS binary container.
"""

from __future__ import annotations

import logging
import math
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import geometry
from .errors import (
    AllSamplesFailed,
    BadMagic,
    ChecksumMismatch,
    EmptyCorpus,
    FoilforgeError,
    InsufficientPoints,
    MalformedLine,
    TooFewSamples,
    TruncatedFile,
    VersionMismatch,
)
from .fileio import atomic_write_bytes
from .geometry import Airfoil, CANONICAL_GRID, RawContour, STATION_COUNT
from .panelflow import CpDistribution, FlowCondition, solve_cp

log = logging.getLogger(__name__)

MAGIC = b"AFDS"
FORMAT_VERSION = 1

IMAGE_SIZE = 200
CP_WINDOW = (-8.0, 2.0)              # raster Cp range, +2 at the top row
OUTLINE_WINDOW = ((-0.05, 1.05), (-0.55, 0.55))

AOA_SCALE = 15.0
RE_LOG_MIN = 4.0                     # log10(1e4)
RE_LOG_MAX = math.log10(9e6)

DEFAULT_RE = 2e6
DEFAULT_MACH = 0.5
DEFAULT_CP_LIMIT = 25.0

CASE_IDS = ("c1", "c2a", "c2b", "c3", "c4a", "c4b", "c5")
_CASE_TAG = {c: i + 1 for i, c in enumerate(CASE_IDS)}
_TAG_CASE = {v: k for k, v in _CASE_TAG.items()}
_SOURCE_TAG = {"builtin_solver": 0, "ingested": 1}
_TAG_SOURCE = {v: k for k, v in _SOURCE_TAG.items()}


@dataclass(frozen=True)
class CaseSpec:
    """One of the seven input/output wirings."""

    case_id: str

    def __post_init__(self):
        if self.case_id not in CASE_IDS:
            raise ValueError(f"unknown case {self.case_id!r}")

    @property
    def direction(self) -> str:
        return "cp_to_shape" if self.case_id in ("c1", "c2a", "c2b", "c3") else "shape_to_cp"

    @property
    def uses_re_input(self) -> bool:
        return self.case_id in ("c3", "c5")

    @property
    def rotation_protocol(self) -> bool:
        return self.case_id in ("c2b", "c4b")

    @property
    def n_scalars(self) -> int:
        return 2 if self.uses_re_input else 1

    @property
    def dnn_input_width(self) -> int:
        return 250 + self.n_scalars

    @property
    def tag(self) -> int:
        return _CASE_TAG[self.case_id]


@dataclass
class Sample:
    """One (airfoil, condition, Cp) triple in the case-appropriate frame."""

    airfoil: Airfoil
    condition: FlowCondition
    cp: CpDistribution
    source: str
    id: str


@dataclass
class EncodedPair:
    """Network-ready input/target arrays for one sample."""

    target_vector: np.ndarray            # (250,)
    input_vector: np.ndarray | None = None   # (251,) or (252,) in DNN mode
    input_image: np.ndarray | None = None    # (200, 200) uint8 in CNN mode
    scalars: np.ndarray | None = None         # (1,) or (2,) in CNN mode


@dataclass
class Dataset:
    samples: list[Sample]
    split: np.ndarray        # uint8 per sample: 0 train, 1 test
    seed: int
    case: CaseSpec

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(self.split == 0)

    @property
    def test_indices(self) -> np.ndarray:
        return np.flatnonzero(self.split == 1)


def sample_id(name: str, condition: FlowCondition) -> str:
    return f"{name.replace('|', '/')}||{condition.key()}"


def default_aoa_grid(case: CaseSpec) -> list[float]:
    return [0.0] if case.case_id == "c1" else [float(a) for a in range(16)]


def default_re_grid(case: CaseSpec) -> list[float]:
    if case.uses_re_input:
        return list(np.logspace(RE_LOG_MIN, RE_LOG_MAX, 27))
    return [DEFAULT_RE]


def sweep_generate(corpus: list[RawContour], case: CaseSpec,
                   aoa_grid: list[float] | None = None,
                   re_grid: list[float] | None = None,
                   mach: float = DEFAULT_MACH,
                   cp_limit: float = DEFAULT_CP_LIMIT,
                   threads: int = 1) -> Dataset:
    """Run the built-in solver over corpus x AoA x Re and collect samples.

    Failed or out-of-range solves are dropped with a logged reason; the
    inviscid solution is Re-independent, so each (airfoil, AoA) pair is
    solved once and shared across the Re grid.  Output order is the
    deterministic key (name, aoa, re) regardless of thread count.
    """
    if not corpus:
        raise EmptyCorpus("no airfoils supplied")
    aoas = default_aoa_grid(case) if aoa_grid is None else [float(a) for a in aoa_grid]
    res = default_re_grid(case) if re_grid is None else [float(r) for r in re_grid]
    if not aoas or not res:
        raise ValueError("empty AoA or Re grid")
    for a in aoas:
        FlowCondition(a, res[0], mach).validate(sweep=True)
    for r in res:
        FlowCondition(aoas[0], r, mach).validate(sweep=True)

    def solve_airfoil(contour: RawContour) -> list[Sample]:
        out = []
        try:
            foil = geometry.repanel(geometry.normalize(contour))
        except FoilforgeError as exc:
            log.warning("dropped airfoil %s: %s", contour.name, exc)
            return out
        name = foil.name.replace("|", "/")
        for aoa in aoas:
            try:
                if case.rotation_protocol:
                    shape = replace(geometry.rotate(foil, aoa), name=name)
                    cp0 = solve_cp(shape, FlowCondition(aoa, res[0], mach),
                                   freestream_aoa=0.0)
                else:
                    shape = replace(foil, name=name)
                    cp0 = solve_cp(shape, FlowCondition(aoa, res[0], mach))
            except FoilforgeError as exc:
                log.info("dropped %s aoa=%g: %s", name, aoa, exc)
                continue
            peak = max(np.abs(cp0.cp_suction).max(), np.abs(cp0.cp_pressure).max())
            if peak > cp_limit:
                log.info("dropped %s aoa=%g: |cp| %.1f beyond %g", name, aoa, peak, cp_limit)
                continue
            for re in res:
                cond = FlowCondition(aoa, re, mach)
                cp = CpDistribution(stations=cp0.stations, cp_suction=cp0.cp_suction,
                                    cp_pressure=cp0.cp_pressure, cl=cp0.cl, condition=cond)
                out.append(Sample(airfoil=shape, condition=cond, cp=cp,
                                  source="builtin_solver", id=sample_id(name, cond)))
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(solve_airfoil, corpus))
    else:
        chunks = [solve_airfoil(c) for c in corpus]
    samples = [s for chunk in chunks for s in chunk]
    if not samples:
        raise AllSamplesFailed("every sweep sample failed or was dropped")
    samples.sort(key=lambda s: (s.airfoil.name, s.condition.aoa, s.condition.re))
    return Dataset(samples=samples, split=np.zeros(len(samples), dtype=np.uint8),
                   seed=0, case=case)


# --- encoding ----------------------------------------------------------------

def normalized_scalars(condition: FlowCondition, case: CaseSpec) -> np.ndarray:
    aoa_n = condition.aoa / AOA_SCALE
    if case.uses_re_input:
        re_n = (math.log10(condition.re) - RE_LOG_MIN) / (RE_LOG_MAX - RE_LOG_MIN)
        return np.array([aoa_n, re_n])
    return np.array([aoa_n])


def shape_vector(airfoil: Airfoil) -> np.ndarray:
    return np.concatenate([airfoil.points[:, 0], airfoil.points[:, 1]])


def cp_vector(cp: CpDistribution) -> np.ndarray:
    return np.concatenate([cp.cp_suction, cp.cp_pressure])


def encode(sample: Sample, case: CaseSpec, mode: str = "dnn") -> EncodedPair:
    """Build the network input/target arrays for one sample.

    DNN inputs are [125 + 125 signal values, aoa/15, (log-normalized Re)];
    targets are always the 250-value complementary signal.  CNN inputs
    replace the signal block with a 200x200 raster and carry the scalars
    in a sidecar that joins after the flatten layer.
    """
    scal = normalized_scalars(sample.condition, case)
    if case.direction == "cp_to_shape":
        signal, target = cp_vector(sample.cp), shape_vector(sample.airfoil)
        content = "cp_curves"
    else:
        signal, target = shape_vector(sample.airfoil), cp_vector(sample.cp)
        content = "airfoil_outline"
    if mode == "dnn":
        return EncodedPair(target_vector=target,
                           input_vector=np.concatenate([signal, scal]))
    if mode == "cnn":
        return EncodedPair(target_vector=target, input_image=rasterize(sample, content),
                           scalars=scal)
    raise ValueError(f"unknown mode {mode!r}")


def encode_dataset(ds: Dataset, mode: str) -> dict[str, np.ndarray]:
    """Stack per-sample encodings into training-ready arrays."""
    pairs = [encode(s, ds.case, mode) for s in ds.samples]
    out = {"targets": np.stack([p.target_vector for p in pairs])}
    if mode == "dnn":
        out["inputs"] = np.stack([p.input_vector for p in pairs])
    else:
        out["images"] = np.stack([p.input_image for p in pairs])
        out["scalars"] = np.stack([p.scalars for p in pairs])
    return out


# --- rasterization ------------------------------------------------------------

def _bresenham(img: np.ndarray, r0: int, c0: int, r1: int, c1: int) -> None:
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dc - dr
    while True:
        img[r0, c0] = 255
        if r0 == r1 and c0 == c1:
            return
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c0 += sc
        if e2 < dc:
            err += dc
            r0 += sr


def _draw_polyline(img: np.ndarray, cols: np.ndarray, rows: np.ndarray) -> None:
    for k in range(len(cols) - 1):
        _bresenham(img, rows[k], cols[k], rows[k + 1], cols[k + 1])


def _to_pixel(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    idx = np.floor((IMAGE_SIZE - 1) * (values - lo) / (hi - lo))
    return np.clip(idx, 0, IMAGE_SIZE - 1).astype(np.int64)


def rasterize_cp_curves(cp: CpDistribution) -> np.ndarray:
    """Both Cp curves in one 200x200 monochrome raster, Cp window [-8, 2]."""
    img = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    cols = _to_pixel(cp.stations.stations, 0.0, 1.0)
    lo, hi = CP_WINDOW
    for curve in (cp.cp_suction, cp.cp_pressure):
        rows = _to_pixel(hi - curve, 0.0, hi - lo)
        _draw_polyline(img, cols, rows)
    return img


def rasterize_outline(points: np.ndarray) -> np.ndarray:
    """Airfoil polyline raster, fixed aspect-true window x [-0.05, 1.05]."""
    img = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    (x0, x1), (y0, y1) = OUTLINE_WINDOW
    cols = _to_pixel(points[:, 0], x0, x1)
    rows = _to_pixel(y1 - points[:, 1], 0.0, y1 - y0)
    _draw_polyline(img, cols, rows)
    return img


def rasterize(sample: Sample, content: str) -> np.ndarray:
    """Deterministic 200x200 monochrome raster (background 0, lines 255)."""
    if content == "cp_curves":
        return rasterize_cp_curves(sample.cp)
    if content == "airfoil_outline":
        return rasterize_outline(sample.airfoil.points)
    raise ValueError(f"unknown raster content {content!r}")


def write_pgm(img: np.ndarray) -> bytes:
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + img.astype(np.uint8).tobytes()


# --- external Cp ingestion -----------------------------------------------------

def ingest_xfoil_cp(cp_file: str, airfoil: Airfoil, condition: FlowCondition) -> Sample:
    """Build a sample from two-column `x Cp` text (e.g. an XFOIL CPWR dump).

    This is the supported path for genuinely Re-dependent (viscous) data;
    the file's surface order is split at minimum x, each side resampled to
    the fixed stations.  cl is approximated by the normal-force integral
    of the ingested distribution.
    """
    rows = []
    for lineno, line in enumerate(cp_file.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        try:
            float(tokens[0])
        except ValueError:
            continue  # non-numeric header
        if len(tokens) < 2:
            raise MalformedLine(lineno, line)
        try:
            rows.append((float(tokens[0]), float(tokens[1])))
        except ValueError:
            raise MalformedLine(lineno, line) from None
    if len(rows) < 40:
        raise InsufficientPoints(f"{len(rows)} Cp rows, need >= 40")
    data = np.array(rows)
    le = int(np.argmin(data[:, 0]))

    def resample(seg: np.ndarray) -> np.ndarray:
        order = np.argsort(seg[:, 0], kind="stable")
        return np.interp(CANONICAL_GRID.stations, seg[order, 0], seg[order, 1])

    cp_suction = resample(data[:le + 1])
    cp_pressure = resample(data[le:])
    cl = float(np.trapezoid(cp_pressure - cp_suction, CANONICAL_GRID.stations))
    cp = CpDistribution(stations=CANONICAL_GRID, cp_suction=cp_suction,
                        cp_pressure=cp_pressure, cl=cl,
                        condition=condition).validate()
    name = airfoil.name.replace("|", "/")
    return Sample(airfoil=replace(airfoil, name=name), condition=condition, cp=cp,
                  source="ingested", id=sample_id(name, condition))


# --- splitting -----------------------------------------------------------------

def split(ds: Dataset, ratio: float = 0.8, seed: int = 0) -> Dataset:
    """Grouped train/test split: every sample of one airfoil name lands on
    one side, with the train prefix sized as close to `ratio` as the
    grouping allows."""
    n = len(ds.samples)
    if n < 5:
        raise TooFewSamples(f"{n} samples, need >= 5")
    names = sorted({s.airfoil.name for s in ds.samples})
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(names))
    counts = {name: 0 for name in names}
    for s in ds.samples:
        counts[s.airfoil.name] += 1
    target = ratio * n
    train_names = set()
    cum = 0
    for i in order:
        name = names[i]
        if cum >= target:
            break
        # stop before this group if that lands closer to the target
        if abs(cum - target) <= abs(cum + counts[name] - target):
            break
        train_names.add(name)
        cum += counts[name]
    tags = np.array([0 if s.airfoil.name in train_names else 1 for s in ds.samples],
                    dtype=np.uint8)
    return Dataset(samples=ds.samples, split=tags, seed=seed, case=ds.case)


# --- persistence -----------------------------------------------------------------

def _pack_sample(s: Sample, tag: int) -> bytes:
    id_bytes = s.id.encode("utf-8")
    parts = [struct.pack("<H", len(id_bytes)), id_bytes,
             struct.pack("<3d", s.condition.aoa, s.condition.re, s.condition.mach),
             struct.pack("<d", s.cp.cl),
             s.airfoil.points.astype("<f8").tobytes(),
             s.cp.cp_suction.astype("<f8").tobytes(),
             s.cp.cp_pressure.astype("<f8").tobytes(),
             struct.pack("<BB", _SOURCE_TAG[s.source], tag)]
    return b"".join(parts)


def save_dataset(ds: Dataset, path: str) -> None:
    """AFDS container: magic, version u32, then a CRC-protected body of
    case tag u8, seed u64, sample count u64 and fixed-layout records."""
    body = bytearray()
    body += struct.pack("<BQQ", ds.case.tag, ds.seed & 0xFFFFFFFFFFFFFFFF, len(ds.samples))
    for s, tag in zip(ds.samples, ds.split):
        body += _pack_sample(s, int(tag))
    blob = MAGIC + struct.pack("<I", FORMAT_VERSION) + bytes(body)
    blob += struct.pack("<I", zlib.crc32(bytes(body)))
    atomic_write_bytes(path, blob)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFile(f"needed {n} bytes at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise TruncatedFile("file shorter than the header")
    if blob[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {blob[:4]!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    r = _Reader(blob[8:])
    case_tag, seed, count = r.unpack("<BQQ")
    if case_tag not in _TAG_CASE:
        raise BadMagic(f"unknown case tag {case_tag}")
    case = CaseSpec(_TAG_CASE[case_tag])
    samples = []
    tags = np.empty(count, dtype=np.uint8)
    for i in range(count):
        (id_len,) = r.unpack("<H")
        sid = r.take(id_len).decode("utf-8")
        aoa, re, mach = r.unpack("<3d")
        cl = r.unpack("<d")[0]
        pts = np.frombuffer(r.take(8 * 2 * geometry.NODE_COUNT), dtype="<f8")
        cp_s = np.frombuffer(r.take(8 * STATION_COUNT), dtype="<f8").copy()
        cp_p = np.frombuffer(r.take(8 * STATION_COUNT), dtype="<f8").copy()
        src, tag = r.unpack("<BB")
        name = sid.rsplit("||", 1)[0]
        cond = FlowCondition(aoa, re, mach)
        foil = Airfoil(name=name, points=pts.reshape(geometry.NODE_COUNT, 2).copy())
        cp = CpDistribution(stations=CANONICAL_GRID, cp_suction=cp_s, cp_pressure=cp_p,
                            cl=cl, condition=cond)
        samples.append(Sample(airfoil=foil, condition=cond, cp=cp,
                              source=_TAG_SOURCE.get(src, "builtin_solver"), id=sid))
        tags[i] = tag
    body_end = 8 + r.pos
    if len(blob) < body_end + 4:
        raise TruncatedFile("missing checksum")
    (crc_stored,) = struct.unpack("<I", blob[body_end:body_end + 4])
    if zlib.crc32(blob[8:body_end]) != crc_stored:
        raise ChecksumMismatch("body CRC32 does not match")
    return Dataset(samples=samples, split=tags, seed=seed, case=case)


def export_csv(ds: Dataset) -> str:
    """One row per sample with the full coordinate and Cp payload."""
    n = geometry.NODE_COUNT
    header = (["id", "name", "aoa", "re", "mach", "cl", "source", "split"]
              + [f"x{i}" for i in range(n)] + [f"y{i}" for i in range(n)]
              + [f"cps{i}" for i in range(STATION_COUNT)]
              + [f"cpp{i}" for i in range(STATION_COUNT)])
    lines = [",".join(header)]
    for s, tag in zip(ds.samples, ds.split):
        fields = [s.id.replace(",", ";"), s.airfoil.name.replace(",", ";"),
                  f"{s.condition.aoa:.9g}", f"{s.condition.re:.9g}",
                  f"{s.condition.mach:.9g}", f"{s.cp.cl:.9g}", s.source,
                  "test" if tag else "train"]
        for arr in (s.airfoil.points[:, 0], s.airfoil.points[:, 1],
                    s.cp.cp_suction, s.cp.cp_pressure):
            fields.extend(f"{v:.9g}" for v in arr)
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"
