"""The two surrogate architectures, their case wiring, training and
checkpoints.

DNN: dense 251/252 -> 125 -> 250 -> 236 -> 375 -> 250 (linear out).
CNN: three 3x3 conv + 2x2 pool blocks (32/64/128 maps) on a 200x200
raster, flatten to 67,712 features, scalars appended, then the same
dense head.  Rasters enter the network scaled to {0, 1}.
"""

from __future__ import annotations

import logging
import struct
import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import neuralcore as nc
from .dataset import (CaseSpec, Dataset, Sample, encode_dataset, normalized_scalars,
                      rasterize, rasterize_cp_curves, rasterize_outline)
from .errors import (
    BadMagic,
    CaseMismatch,
    ChecksumMismatch,
    EmptyTrainSplit,
    NumericalDivergence,
    SpecMismatch,
    TruncatedFile,
    VersionMismatch,
)
from .fileio import atomic_write_bytes
from .geometry import Airfoil, CANONICAL_GRID, NODE_COUNT
from .panelflow import CpDistribution, FlowCondition

log = logging.getLogger(__name__)

MAGIC = b"AFNC"
FORMAT_VERSION = 1

OUTPUT_WIDTH = 250
DNN_HIDDEN = (125, 250, 236, 375)
CNN_CHANNELS = ((1, 32), (32, 64), (64, 128))
IMAGE_EXTENT = 200
# expected feature-map chain for a 200x200 input: conv/pool three times
CNN_MAP_SIZES = (198, 99, 97, 48, 46, 23)
CNN_FLAT_WIDTH = 23 * 23 * 128

_KIND_TAG = {"dnn": 0, "cnn": 1}
_TAG_KIND = {v: k for k, v in _KIND_TAG.items()}
_LAYER_TAG = {"dense": 1, "relu": 2, "conv2d": 3, "maxpool2d": 4, "flatten": 5,
              "concat_scalars": 6}
_TAG_LAYER = {v: k for k, v in _LAYER_TAG.items()}
_LAYER_EXTENT_COUNT = {"dense": 2, "conv2d": 2, "concat_scalars": 1,
                       "relu": 0, "maxpool2d": 0, "flatten": 0}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if not (self.learning_rate > 0 and self.batch_size >= 1 and self.epochs >= 1):
            raise ValueError(f"invalid training config {self}")
        return self


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    case: CaseSpec
    layer_specs: tuple[nc.LayerSpec, ...]


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: list[np.ndarray]
    seed: int
    final_train_loss: float
    final_test_loss: float


def _dense_head(widths: tuple[int, ...], first_in: int) -> list[nc.LayerSpec]:
    specs = []
    w_in = first_in
    for w in widths:
        specs.append(nc.LayerSpec("dense", (w_in, w)))
        specs.append(nc.LayerSpec("relu"))
        w_in = w
    specs.append(nc.LayerSpec("dense", (w_in, OUTPUT_WIDTH)))
    return specs


def build_dnn(case: CaseSpec) -> ModelSpec:
    """Dense stack with hidden widths (125, 250, 236, 375) and a linear
    250-wide output; the input width is 251 or 252 depending on the case."""
    specs = _dense_head(DNN_HIDDEN, case.dnn_input_width)
    return ModelSpec(kind="dnn", case=case, layer_specs=tuple(specs))


def conv_chain_extents(h0: int = IMAGE_EXTENT) -> list[int]:
    sizes = []
    h = h0
    for _ in CNN_CHANNELS:
        h = h - 2
        sizes.append(h)
        h = h // 2
        sizes.append(h)
    return sizes


def build_cnn(case: CaseSpec) -> ModelSpec:
    """Conv(32)-pool-conv(64)-pool-conv(128)-pool feature stack on the
    200x200 raster, scalars joined after flatten, then the dense head."""
    sizes = conv_chain_extents()
    if tuple(sizes) != CNN_MAP_SIZES:
        raise AssertionError(f"conv chain {sizes} != expected {CNN_MAP_SIZES}")
    flat = CNN_CHANNELS[-1][1] * sizes[-1] ** 2
    if flat != CNN_FLAT_WIDTH:
        raise AssertionError(f"flatten width {flat} != expected {CNN_FLAT_WIDTH}")
    specs = []
    for c_in, c_out in CNN_CHANNELS:
        specs.append(nc.LayerSpec("conv2d", (c_in, c_out)))
        specs.append(nc.LayerSpec("relu"))
        specs.append(nc.LayerSpec("maxpool2d"))
    specs.append(nc.LayerSpec("flatten"))
    specs.append(nc.LayerSpec("concat_scalars", (case.n_scalars,)))
    specs.extend(_dense_head(DNN_HIDDEN, flat + case.n_scalars))
    return ModelSpec(kind="cnn", case=case, layer_specs=tuple(specs))


def build_model(kind: str, case: CaseSpec) -> ModelSpec:
    if kind == "dnn":
        return build_dnn(case)
    if kind == "cnn":
        return build_cnn(case)
    raise ValueError(f"unknown model kind {kind!r}")


def parameter_count(spec: ModelSpec) -> int:
    n = 0
    for ls in spec.layer_specs:
        if ls.kind == "dense":
            n += ls.extents[0] * ls.extents[1] + ls.extents[1]
        elif ls.kind == "conv2d":
            n += ls.extents[1] * ls.extents[0] * 9 + ls.extents[1]
    return n


def _network(spec: ModelSpec) -> nc.Network:
    return nc.Network(nc.build_layers(list(spec.layer_specs)))


def _images_to_input(images: np.ndarray) -> np.ndarray:
    return images[:, None, :, :].astype(np.float64) / 255.0


def _batch_forward(net: nc.Network, kind: str, arrays: dict, idx: np.ndarray) -> np.ndarray:
    if kind == "dnn":
        return net.forward(arrays["inputs"][idx])
    return net.forward(_images_to_input(arrays["images"][idx]), arrays["scalars"][idx])


def _split_loss(net: nc.Network, kind: str, arrays: dict, idx: np.ndarray,
                batch_size: int) -> float:
    if idx.size == 0:
        return float("nan")
    total = 0.0
    for lo in range(0, idx.size, batch_size):
        chunk = idx[lo:lo + batch_size]
        loss, _ = nc.mse(_batch_forward(net, kind, arrays, chunk), arrays["targets"][chunk])
        total += loss * chunk.size
    return total / idx.size


def train(spec: ModelSpec, data: Dataset, config: TrainConfig
          ) -> tuple[Checkpoint, list[tuple[float, float]]]:
    """Mini-batch Adam over the train split with per-epoch reshuffling.

    Returns the final checkpoint and a history of exactly `epochs`
    (train_mse, test_mse) pairs; the test entry is NaN when the dataset
    has no test split.  Identical seed, config and data give bit-identical
    results.
    """
    config.validate()
    if data.case != spec.case:
        raise CaseMismatch(f"model wired for {spec.case.case_id}, data is {data.case.case_id}")
    train_idx = data.train_indices
    test_idx = data.test_indices
    if train_idx.size == 0:
        raise EmptyTrainSplit("no training samples")
    arrays = encode_dataset(data, spec.kind)

    net = _network(spec)
    nc.init_params(net.layers, config.seed)
    state = nc.AdamState.for_params(net.params)
    history: list[tuple[float, float]] = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, epoch])))
        order = train_idx[rng.permutation(train_idx.size)]
        running = 0.0
        for lo in range(0, order.size, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            net.zero_grads()
            try:
                pred = _batch_forward(net, spec.kind, arrays, batch)
            except NumericalDivergence as exc:
                raise NumericalDivergence(f"{exc} at epoch {epoch}", epoch=epoch) from None
            loss, dpred = nc.mse(pred, arrays["targets"][batch])
            if not np.isfinite(loss):
                raise NumericalDivergence(f"loss diverged at epoch {epoch}", epoch=epoch)
            net.backward(dpred)
            nc.adam_step(net.params, net.grads, state, config.learning_rate)
            running += loss * batch.size
        train_loss = running / order.size
        test_loss = _split_loss(net, spec.kind, arrays, test_idx, config.batch_size)
        history.append((train_loss, test_loss))
        log.info("epoch %d/%d: train %.3e test %.3e (%.2fs)", epoch + 1, config.epochs,
                 train_loss, test_loss, time.perf_counter() - t0)
    ckpt = Checkpoint(spec=spec, params=[p.copy() for p in net.params], seed=config.seed,
                      final_train_loss=history[-1][0], final_test_loss=history[-1][1])
    return ckpt, history


# --- prediction -----------------------------------------------------------------

def _checkpoint_network(ckpt: Checkpoint) -> nc.Network:
    net = _network(ckpt.spec)
    params = net.params
    if len(params) != len(ckpt.params):
        raise SpecMismatch("checkpoint parameter list does not match the layer table")
    for dst, src in zip(params, ckpt.params):
        if dst.shape != src.shape:
            raise SpecMismatch(f"parameter shape {src.shape} != layer shape {dst.shape}")
        dst[...] = src
    return net


def _forward_one(ckpt: Checkpoint, signal: np.ndarray | None, image: np.ndarray | None,
                 scalars: np.ndarray) -> np.ndarray:
    net = _checkpoint_network(ckpt)
    if ckpt.spec.kind == "dnn":
        x = np.concatenate([signal, scalars])[None, :]
        return net.forward(x)[0]
    return net.forward(_images_to_input(image[None]), scalars[None, :])[0]


def predict_shape(ckpt: Checkpoint, cp: CpDistribution, condition: FlowCondition) -> Airfoil:
    """Airfoil loop predicted from a Cp distribution (125 x then 125 y).

    The output is not validated against the airfoil invariants: judging
    prediction quality is the evaluation module's job.
    """
    case = ckpt.spec.case
    if case.direction != "cp_to_shape":
        raise CaseMismatch(f"case {case.case_id} does not predict shapes")
    scal = normalized_scalars(condition, case)
    if ckpt.spec.kind == "dnn":
        out = _forward_one(ckpt, np.concatenate([cp.cp_suction, cp.cp_pressure]), None, scal)
    else:
        out = _forward_one(ckpt, None, rasterize_cp_curves(cp), scal)
    pts = np.column_stack((out[:NODE_COUNT], out[NODE_COUNT:]))
    return Airfoil(name=f"predicted {condition.key()}", points=pts)


def predict_cp(ckpt: Checkpoint, airfoil: Airfoil, condition: FlowCondition) -> CpDistribution:
    """Cp distribution predicted from an airfoil (125 suction, 125 pressure)."""
    case = ckpt.spec.case
    if case.direction != "shape_to_cp":
        raise CaseMismatch(f"case {case.case_id} does not predict Cp")
    scal = normalized_scalars(condition, case)
    if ckpt.spec.kind == "dnn":
        signal = np.concatenate([airfoil.points[:, 0], airfoil.points[:, 1]])
        out = _forward_one(ckpt, signal, None, scal)
    else:
        out = _forward_one(ckpt, None, rasterize_outline(airfoil.points), scal)
    return CpDistribution(stations=CANONICAL_GRID, cp_suction=out[:125], cp_pressure=out[125:],
                          cl=float("nan"), condition=condition)


def predict_sample(ckpt: Checkpoint, sample: Sample) -> np.ndarray:
    """Raw 250-value network output for one dataset sample."""
    case = ckpt.spec.case
    scal = normalized_scalars(sample.condition, case)
    if ckpt.spec.kind == "dnn":
        if case.direction == "cp_to_shape":
            signal = np.concatenate([sample.cp.cp_suction, sample.cp.cp_pressure])
        else:
            signal = np.concatenate([sample.airfoil.points[:, 0], sample.airfoil.points[:, 1]])
        return _forward_one(ckpt, signal, None, scal)
    content = "cp_curves" if case.direction == "cp_to_shape" else "airfoil_outline"
    return _forward_one(ckpt, None, rasterize(sample, content), scal)


# --- persistence -----------------------------------------------------------------

def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """AFNC container: magic, version, then a CRC-protected body holding
    the layer table, seed, final losses and all parameters (weights then
    bias per layer, row-major float64 little-endian)."""
    body = bytearray()
    body += struct.pack("<BB", _KIND_TAG[ckpt.spec.kind], ckpt.spec.case.tag)
    body += struct.pack("<H", len(ckpt.spec.layer_specs))
    for ls in ckpt.spec.layer_specs:
        ext = tuple(ls.extents) + (0,) * (4 - len(ls.extents))
        body += struct.pack("<B4I", _LAYER_TAG[ls.kind], *ext)
    body += struct.pack("<Q", ckpt.seed & 0xFFFFFFFFFFFFFFFF)
    body += struct.pack("<2d", ckpt.final_train_loss, ckpt.final_test_loss)
    for p in ckpt.params:
        body += p.astype("<f8").tobytes()
    blob = MAGIC + struct.pack("<I", FORMAT_VERSION) + bytes(body)
    blob += struct.pack("<I", zlib.crc32(bytes(body)))
    atomic_write_bytes(path, blob)


def _param_shapes(layer_specs: tuple[nc.LayerSpec, ...]) -> list[tuple[int, ...]]:
    shapes = []
    for ls in layer_specs:
        if ls.kind == "dense":
            shapes.append((ls.extents[0], ls.extents[1]))
            shapes.append((ls.extents[1],))
        elif ls.kind == "conv2d":
            shapes.append((ls.extents[1], ls.extents[0], 3, 3))
            shapes.append((ls.extents[1],))
    return shapes


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise TruncatedFile("file shorter than the header")
    if blob[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {blob[:4]!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    if len(blob) < 12:
        raise TruncatedFile("missing checksum")
    body, crc_stored = blob[8:-4], struct.unpack("<I", blob[-4:])[0]

    off = 0

    def unpack(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(body):
            raise TruncatedFile(f"needed {size} bytes at offset {off}")
        vals = struct.unpack_from(fmt, body, off)
        off += size
        return vals

    kind_tag, case_tag = unpack("<BB")
    if kind_tag not in _TAG_KIND:
        raise SpecMismatch(f"unknown model kind tag {kind_tag}")
    from .dataset import CASE_IDS  # local to avoid import cycle at module load
    if not 1 <= case_tag <= len(CASE_IDS):
        raise SpecMismatch(f"unknown case tag {case_tag}")
    (n_layers,) = unpack("<H")
    specs = []
    for _ in range(n_layers):
        tag, *ext = unpack("<B4I")
        if tag not in _TAG_LAYER:
            raise SpecMismatch(f"unknown layer tag {tag}")
        kind = _TAG_LAYER[tag]
        specs.append(nc.LayerSpec(kind, tuple(ext[:_LAYER_EXTENT_COUNT[kind]])))
    (seed,) = unpack("<Q")
    train_loss, test_loss = unpack("<2d")
    shapes = _param_shapes(tuple(specs))
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(body) - off != expected:
        raise SpecMismatch(
            f"parameter block is {len(body) - off} bytes, layer table implies {expected}")
    if zlib.crc32(body) != crc_stored:
        raise ChecksumMismatch("body CRC32 does not match")
    params = []
    for s in shapes:
        size = int(np.prod(s)) * 8
        params.append(np.frombuffer(body[off:off + size], dtype="<f8").reshape(s).copy())
        off += size
    spec = ModelSpec(kind=_TAG_KIND[kind_tag], case=CaseSpec(CASE_IDS[case_tag - 1]),
                     layer_specs=tuple(specs))
    return Checkpoint(spec=spec, params=params, seed=seed,
                      final_train_loss=train_loss, final_test_loss=test_loss)
