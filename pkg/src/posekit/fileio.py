"""File formats: binary tensor container, pose documents, scene truth.

The tensor container is deliberately minimal so it can be parsed from any
language in a few lines. Byte layout (everything little-endian):

    offset  size  field
    0       4     magic "PTNS"
    4       2     format version, currently 1
    6       4     height
    10      4     width
    14      4     channels
    18      1     dtype code, 1 = 32-bit float
    19      4     payload length in bytes (= height*width*channels*4)
    23      ...   payload, channel-major, row-major within a channel

JSON documents are written with sorted keys and no whitespace so identical
content yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError, TensorFormatError
from .featuremaps import FeatureMaps, InputGeometry
from .skeleton import NUM_KEYPOINTS, Keypoint, PoseSkeleton
from .synth import GroundTruthPerson, RenderConfig

TENSOR_MAGIC = b"PTNS"
TENSOR_VERSION = 1
_DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHIIIBI")
TENSOR_HEADER_SIZE = _HEADER.size  # 23

POSE_SCHEMA_VERSION = 1
SCENE_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Tensor container
# ---------------------------------------------------------------------------

def tensor_bytes(maps: FeatureMaps) -> bytes:
    payload = np.ascontiguousarray(maps.data, dtype="<f4").tobytes()
    header = _HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION,
                          maps.height, maps.width, maps.channels,
                          _DTYPE_F32, len(payload))
    return header + payload


def write_tensor(maps: FeatureMaps, path) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_bytes(maps))


def parse_tensor(buf: bytes) -> FeatureMaps:
    if len(buf) < TENSOR_HEADER_SIZE:
        raise TensorFormatError(
            "header", f"file is {len(buf)} bytes, header needs {TENSOR_HEADER_SIZE}"
        )
    magic, version, height, width, channels, dtype, payload_len = \
        _HEADER.unpack_from(buf)
    if magic != TENSOR_MAGIC:
        raise TensorFormatError("magic", f"expected {TENSOR_MAGIC!r}, got {magic!r}")
    if version != TENSOR_VERSION:
        raise TensorFormatError("version", f"unsupported version {version}")
    if min(height, width, channels) < 1:
        raise TensorFormatError("dimensions", "all dimensions must be >= 1")
    if dtype != _DTYPE_F32:
        raise TensorFormatError("dtype", f"unknown dtype code {dtype}")
    expected = height * width * channels * 4
    if payload_len != expected:
        raise TensorFormatError(
            "payload_length", f"header declares {payload_len} bytes, dims need {expected}"
        )
    actual = len(buf) - TENSOR_HEADER_SIZE
    if actual < expected:
        raise TensorFormatError("payload", f"truncated: {actual} of {expected} bytes")
    if actual > expected:
        raise TensorFormatError("payload", f"{actual - expected} trailing bytes")
    data = np.frombuffer(buf, dtype="<f4", count=expected // 4,
                         offset=TENSOR_HEADER_SIZE)
    data = data.reshape(channels, height, width).astype(np.float32)
    if not np.isfinite(data).all():
        raise TensorFormatError("payload", "non-finite values")
    return FeatureMaps(data)


def read_tensor(path) -> FeatureMaps:
    with open(path, "rb") as fh:
        return parse_tensor(fh.read())


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------

def _dump_canonical(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("ascii")


def _require_keys(obj, keys: tuple, what: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{what} must be an object, got {type(obj).__name__}")
    missing = [k for k in keys if k not in obj]
    unknown = [k for k in obj if k not in keys]
    if missing:
        raise SchemaError(f"{what} is missing field(s) {missing}")
    if unknown:
        raise SchemaError(f"{what} has unknown field(s) {unknown}")


def _require_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{what} must be a number, got {type(value).__name__}")
    return float(value)


def _require_int(value, what: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{what} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise SchemaError(f"{what} must be >= {minimum}, got {value}")
    return value


# ---------------------------------------------------------------------------
# Pose documents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseDocument:
    """Decoded skeletons plus the geometry they were mapped through."""

    geometry: InputGeometry
    skeletons: tuple
    schema_version: int = POSE_SCHEMA_VERSION


def _geometry_to_json(geo: InputGeometry) -> dict:
    return {
        "net_input_height": geo.net_input_height,
        "net_input_width": geo.net_input_width,
        "original_height": geo.original_height,
        "original_width": geo.original_width,
        "stride": geo.stride,
        "pad": list(geo.pad),
    }


def _geometry_from_json(obj) -> InputGeometry:
    _require_keys(obj, ("net_input_height", "net_input_width", "original_height",
                        "original_width", "stride", "pad"), "geometry")
    pad = obj["pad"]
    if not (isinstance(pad, list) and len(pad) == 4):
        raise SchemaError("geometry.pad must be a 4-element array")
    return InputGeometry(
        net_input_height=_require_int(obj["net_input_height"], "net_input_height", 1),
        net_input_width=_require_int(obj["net_input_width"], "net_input_width", 1),
        original_height=_require_int(obj["original_height"], "original_height", 1),
        original_width=_require_int(obj["original_width"], "original_width", 1),
        stride=_require_int(obj["stride"], "stride", 1),
        pad=tuple(_require_int(p, "pad entry") for p in pad),
    )


def pose_document_bytes(doc: PoseDocument) -> bytes:
    skeletons = []
    for sk in doc.skeletons:
        entries = []
        for kp in sk.keypoints:
            if kp is None:
                entries.append(None)
            else:
                entries.append({"kind": int(kp.kind), "x": float(kp.x),
                                "y": float(kp.y), "score": float(kp.score)})
        skeletons.append({"score": float(sk.score), "keypoints": entries})
    return _dump_canonical({
        "schema_version": doc.schema_version,
        "geometry": _geometry_to_json(doc.geometry),
        "skeletons": skeletons,
    })


def write_poses(doc: PoseDocument, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pose_document_bytes(doc))


def _skeleton_from_json(obj, index: int) -> PoseSkeleton:
    _require_keys(obj, ("score", "keypoints"), f"skeletons[{index}]")
    entries = obj["keypoints"]
    if not (isinstance(entries, list) and len(entries) == NUM_KEYPOINTS):
        raise SchemaError(
            f"skeletons[{index}].keypoints must hold exactly {NUM_KEYPOINTS} entries"
        )
    keypoints = []
    for slot, entry in enumerate(entries):
        if entry is None:
            keypoints.append(None)
            continue
        _require_keys(entry, ("kind", "x", "y", "score"),
                      f"skeletons[{index}].keypoints[{slot}]")
        kind = _require_int(entry["kind"], "kind")
        if kind != slot:
            raise SchemaError(
                f"skeletons[{index}].keypoints[{slot}] has kind {kind}, expected {slot}"
            )
        keypoints.append(Keypoint(id=-1, kind=kind,
                                  x=_require_number(entry["x"], "x"),
                                  y=_require_number(entry["y"], "y"),
                                  score=_require_number(entry["score"], "score")))
    present = sum(kp is not None for kp in keypoints)
    if present == 0:
        raise SchemaError(f"skeletons[{index}] has no keypoints")
    return PoseSkeleton(keypoints=tuple(keypoints),
                        score=_require_number(obj["score"], "score"),
                        num_keypoints=present)


def parse_poses(buf: bytes) -> PoseDocument:
    try:
        obj = json.loads(buf)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    _require_keys(obj, ("schema_version", "geometry", "skeletons"), "document")
    version = _require_int(obj["schema_version"], "schema_version")
    if version != POSE_SCHEMA_VERSION:
        raise SchemaError(
            f"schema_version {version} not supported (expected {POSE_SCHEMA_VERSION})"
        )
    if not isinstance(obj["skeletons"], list):
        raise SchemaError("skeletons must be an array")
    skeletons = tuple(_skeleton_from_json(sk, i) for i, sk in enumerate(obj["skeletons"]))
    return PoseDocument(geometry=_geometry_from_json(obj["geometry"]),
                        skeletons=skeletons)


def read_poses(path) -> PoseDocument:
    with open(path, "rb") as fh:
        return parse_poses(fh.read())


# ---------------------------------------------------------------------------
# Scene truth
# ---------------------------------------------------------------------------

def scene_truth_bytes(persons, cfg: RenderConfig) -> bytes:
    rows = []
    for person in persons:
        rows.append([
            None if pos is None else [float(pos[0]), float(pos[1])]
            for pos in person.keypoints
        ])
    return _dump_canonical({
        "schema_version": SCENE_SCHEMA_VERSION,
        "map_height": cfg.map_height,
        "map_width": cfg.map_width,
        "sigma": cfg.sigma,
        "limb_width": cfg.limb_width,
        "seed": cfg.seed,
        "persons": rows,
    })


def write_scene_truth(persons, cfg: RenderConfig, path) -> None:
    with open(path, "wb") as fh:
        fh.write(scene_truth_bytes(persons, cfg))


def read_scene_truth(path):
    """Returns ``(persons, render_config)``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        obj = json.loads(buf)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    _require_keys(obj, ("schema_version", "map_height", "map_width", "sigma",
                        "limb_width", "seed", "persons"), "scene truth")
    version = _require_int(obj["schema_version"], "schema_version")
    if version != SCENE_SCHEMA_VERSION:
        raise SchemaError(
            f"schema_version {version} not supported (expected {SCENE_SCHEMA_VERSION})"
        )
    cfg = RenderConfig(
        map_height=_require_int(obj["map_height"], "map_height", 1),
        map_width=_require_int(obj["map_width"], "map_width", 1),
        sigma=_require_number(obj["sigma"], "sigma"),
        limb_width=_require_number(obj["limb_width"], "limb_width"),
        seed=_require_int(obj["seed"], "seed"),
    )
    if not isinstance(obj["persons"], list):
        raise SchemaError("persons must be an array")
    persons = []
    for i, row in enumerate(obj["persons"]):
        if not (isinstance(row, list) and len(row) == NUM_KEYPOINTS):
            raise SchemaError(f"persons[{i}] must hold exactly {NUM_KEYPOINTS} entries")
        positions = []
        for j, pos in enumerate(row):
            if pos is None:
                positions.append(None)
            else:
                if not (isinstance(pos, list) and len(pos) == 2):
                    raise SchemaError(f"persons[{i}][{j}] must be [x, y] or null")
                positions.append((_require_number(pos[0], "x"),
                                  _require_number(pos[1], "y")))
        persons.append(GroundTruthPerson(tuple(positions)))
    return tuple(persons), cfg
