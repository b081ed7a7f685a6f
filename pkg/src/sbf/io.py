"""Readers and writers for every on-disk format.

All binary formats are little-endian. Readers turn every malformed input
into a typed ``FormatError`` or ``InputError``.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .annotate import PointAnnotationSet
from .core import get_layout, SkeletonFrame
from .errors import (
    BadMagic,
    ChecksumError,
    HeaderMismatch,
    JointCountMismatch,
    SchemaError,
    TruncatedFile,
)
from .sbfmaps import SbfFrame, SbfMaps
from .spr import HeadParams

# --- keypoint JSON ----------------------------------------------------------


@dataclass
class KeypointSequence:
    width: int
    height: int
    fps: float
    layout: str
    frames: list[SkeletonFrame]
    times: list[int]

    @property
    def graph(self):
        return get_layout(self.layout)


def _require(d, key, kind, where):
    if not isinstance(d, dict) or key not in d:
        raise SchemaError(f"{where}: missing field {key!r}")
    v = d[key]
    if isinstance(v, bool) or (kind is not None and not isinstance(v, kind)):
        raise SchemaError(f"{where}: field {key!r} has wrong type {type(v).__name__}")
    return v


def read_keypoints(path) -> KeypointSequence:
    """Read a keypoint file into per-time skeleton frames.

    Schema: ``{"width", "height", "fps", "layout", "persons": [{"id", "frames":
    [{"t", "kps": [[x, y, c], ...]}]}]}``. Unknown fields are ignored.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e})") from None
    width = _require(doc, "width", int, "file")
    height = _require(doc, "height", int, "file")
    fps = _require(doc, "fps", (int, float), "file")
    layout = _require(doc, "layout", str, "file")
    graph = get_layout(layout)
    by_time: dict[int, list[tuple[int, np.ndarray]]] = {}
    for i, person in enumerate(_require(doc, "persons", list, "file")):
        pid = _require(person, "id", int, f"person {i}")
        for j, fr in enumerate(_require(person, "frames", list, f"person {pid}")):
            where = f"person {pid} frame {j}"
            t = _require(fr, "t", int, where)
            kps = _require(fr, "kps", list, where)
            for row in kps:
                if (not isinstance(row, list) or len(row) != 3
                        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in row)):
                    raise SchemaError(f"{where}: each keypoint must be [x, y, c], got {row!r}")
            if len(kps) != graph.joints:
                raise JointCountMismatch(f"{where}: {len(kps)} keypoints, layout {layout} has {graph.joints}")
            by_time.setdefault(t, []).append((pid, np.array(kps, dtype=np.float64)))
    times = sorted(by_time)
    frames = [SkeletonFrame(tuple(kp for _, kp in by_time[t]), tuple(pid for pid, _ in by_time[t]))
              for t in times]
    return KeypointSequence(width, height, fps, layout, frames, times)


def write_keypoints(path, seq: KeypointSequence) -> None:
    persons: dict[int, list] = {}
    for t, frame in zip(seq.times, seq.frames):
        for pid, kp in zip(frame.person_ids, frame.persons):
            persons.setdefault(pid, []).append({"t": int(t), "kps": kp.tolist()})
    doc = {
        "width": int(seq.width), "height": int(seq.height), "fps": seq.fps, "layout": seq.layout,
        "persons": [{"id": pid, "frames": frs} for pid, frs in sorted(persons.items())],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


# --- Middlebury .flo ----------------------------------------------------------

FLO_MAGIC = 202021.25
_FLO_HEADER = struct.Struct("<fii")


def write_flo(path, flow) -> None:
    uv = flow.uv if hasattr(flow, "uv") else np.asarray(flow)
    h, w = uv.shape[:2]
    with open(path, "wb") as f:
        f.write(_FLO_HEADER.pack(FLO_MAGIC, w, h))
        f.write(np.ascontiguousarray(uv, dtype="<f4").tobytes())


def read_flo(path) -> np.ndarray:
    """Return the flow as a float32 ``(h, w, 2)`` array."""
    data = Path(path).read_bytes()
    if len(data) < _FLO_HEADER.size:
        raise TruncatedFile(f"{path}: {len(data)} bytes, shorter than the .flo header")
    magic, w, h = _FLO_HEADER.unpack_from(data)
    if magic != FLO_MAGIC:
        raise BadMagic(f"{path}: bad .flo magic {magic!r}")
    if w < 0 or h < 0:
        raise HeaderMismatch(f"{path}: negative dimensions {w}x{h}")
    need = _FLO_HEADER.size + 8 * w * h
    if len(data) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, found {len(data)}")
    if len(data) > need:
        raise HeaderMismatch(f"{path}: {len(data) - need} trailing bytes")
    return np.frombuffer(data, dtype="<f4", offset=_FLO_HEADER.size).reshape(h, w, 2).copy()


# --- SBF container ------------------------------------------------------------

SBF_MAGIC = b"SBF1"
SBF_VERSION = 1
_SBF_HEADER = struct.Struct("<4sIIIIIBBHi")
VARIANT_CODES = {"joint": 0, "limb": 1}
KIND_BINARY, KIND_FLOAT = 0, 1


@dataclass(frozen=True)
class SbfHeader:
    """Container header.

    Frame ``k`` of the container holds the maps for source frame
    ``frame_base + k``: scale and body maps of that frame and the flow map
    of the motion from it to the next frame.
    """

    T: int
    H: int
    W: int
    J: int
    variant: str = "joint"
    kind: int = KIND_FLOAT
    frame_base: int = 0
    version: int = SBF_VERSION

    @property
    def channels(self) -> int:
        return self.J + 2

    @property
    def frame_bytes(self) -> int:
        n = self.channels * self.H * self.W
        return (n + 7) // 8 if self.kind == KIND_BINARY else 4 * n

    def pack(self) -> bytes:
        return _SBF_HEADER.pack(SBF_MAGIC, self.version, self.T, self.H, self.W, self.J,
                                VARIANT_CODES[self.variant], self.kind, 0, self.frame_base)


@dataclass
class SbfContainer:
    header: SbfHeader
    frames: np.ndarray  # (T, J+2, H, W); uint8 for binary payloads, float32 otherwise


def _as_frame_array(f) -> np.ndarray:
    if isinstance(f, SbfFrame):
        return f.tensor
    if isinstance(f, SbfMaps):
        return f.stack()
    return np.asarray(f)


def write_sbf(path, frames, variant: str = "joint", kind: int | None = None, frame_base: int = 0) -> SbfHeader:
    """Write frames of shape ``(J+2, H, W)``.

    ``kind`` defaults to bit-packed binary for integer/bool input and float32
    otherwise. Each frame is followed by the CRC32 of its payload.
    """
    arrs = [_as_frame_array(f) for f in frames]
    if not arrs:
        raise HeaderMismatch("no frames to write")
    shape = arrs[0].shape
    if len(shape) != 3 or shape[0] < 3 or any(a.shape != shape for a in arrs):
        raise HeaderMismatch(f"frames must share one (J+2, H, W) shape, got {[a.shape for a in arrs]}")
    if variant not in VARIANT_CODES:
        raise HeaderMismatch(f"unknown variant {variant!r}")
    if kind is None:
        kind = KIND_BINARY if arrs[0].dtype.kind in "biu" else KIND_FLOAT
    header = SbfHeader(len(arrs), shape[1], shape[2], shape[0] - 2, variant, kind, frame_base)
    with open(path, "wb") as f:
        f.write(header.pack())
        for a in arrs:
            if kind == KIND_BINARY:
                if not np.all((a == 0) | (a == 1)):
                    raise HeaderMismatch("binary payload requires values in {0, 1}")
                payload = np.packbits(a.astype(bool).ravel()).tobytes()
            else:
                payload = np.ascontiguousarray(a, dtype="<f4").tobytes()
            f.write(payload)
            f.write(struct.pack("<I", zlib.crc32(payload)))
    return header


def read_sbf_header(data: bytes, path="<bytes>") -> SbfHeader:
    if len(data) < _SBF_HEADER.size:
        raise TruncatedFile(f"{path}: shorter than the SBF header")
    magic, version, T, H, W, J, variant, kind, _reserved, base = _SBF_HEADER.unpack_from(data)
    if magic != SBF_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != SBF_VERSION:
        raise HeaderMismatch(f"{path}: unsupported version {version}")
    if min(T, H, W) == 0:
        raise HeaderMismatch(f"{path}: zero dimension in header (T={T}, H={H}, W={W})")
    names = {v: k for k, v in VARIANT_CODES.items()}
    if variant not in names or kind not in (KIND_BINARY, KIND_FLOAT):
        raise HeaderMismatch(f"{path}: bad variant/kind codes {variant}/{kind}")
    return SbfHeader(T, H, W, J, names[variant], kind, base, version)


def read_sbf(path) -> SbfContainer:
    data = Path(path).read_bytes()
    header = read_sbf_header(data, path)
    fb = header.frame_bytes
    need = _SBF_HEADER.size + header.T * (fb + 4)
    if len(data) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, found {len(data)}")
    if len(data) > need:
        raise HeaderMismatch(f"{path}: {len(data) - need} trailing bytes")
    shape = (header.channels, header.H, header.W)
    n = shape[0] * shape[1] * shape[2]
    frames = []
    off = _SBF_HEADER.size
    for t in range(header.T):
        payload = data[off:off + fb]
        (crc,) = struct.unpack_from("<I", data, off + fb)
        if zlib.crc32(payload) != crc:
            raise ChecksumError(f"{path}: CRC mismatch in frame {t}")
        if header.kind == KIND_BINARY:
            bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
            if bits[n:].any():
                raise HeaderMismatch(f"{path}: non-zero padding bits in frame {t}")
            frames.append(bits[:n].reshape(shape))
        else:
            frames.append(np.frombuffer(payload, dtype="<f4").reshape(shape))
        off += fb + 4
    return SbfContainer(header, np.stack(frames))


# --- head parameters ------------------------------------------------------------

HEAD_MAGIC = b"SPRH"
HEAD_VERSION = 1
_HEAD_HEADER = struct.Struct("<4sIIII")


def head_params_bytes(params: HeadParams) -> bytes:
    parts = [_HEAD_HEADER.pack(HEAD_MAGIC, HEAD_VERSION, params.in_dim, params.hidden, params.out_dim)]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays()]
    return b"".join(parts)


def head_params_from_bytes(data: bytes, path="<bytes>") -> HeadParams:
    if len(data) < _HEAD_HEADER.size:
        raise TruncatedFile(f"{path}: shorter than the head-params header")
    magic, version, in_dim, hidden, out = _HEAD_HEADER.unpack_from(data)
    if magic != HEAD_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != HEAD_VERSION:
        raise HeaderMismatch(f"{path}: unsupported version {version}")
    shapes = [(hidden, in_dim), (hidden,), (hidden, hidden), (hidden,), (out, hidden), (out,)]
    need = _HEAD_HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(data) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, found {len(data)}")
    if len(data) > need:
        raise HeaderMismatch(f"{path}: {len(data) - need} trailing bytes")
    arrays = []
    off = _HEAD_HEADER.size
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(s).copy())
        off += 8 * n
    return HeadParams(*arrays)


def write_head_params(path, params: HeadParams) -> None:
    Path(path).write_bytes(head_params_bytes(params))


def read_head_params(path) -> HeadParams:
    return head_params_from_bytes(Path(path).read_bytes(), path)


# --- annotation records -----------------------------------------------------------


def write_annotations(path, annotation_sets) -> int:
    """Write one JSON line per record; returns the record count."""
    n = 0
    with open(path, "w") as f:
        for ann in annotation_sets:
            for rec in ann.records():
                f.write(json.dumps(rec, separators=(",", ":")) + "\n")
                n += 1
    return n


def read_annotations(path) -> list[dict]:
    records = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}:{i + 1}: {e}") from None
        for key in ("head", "frame", "person", "seed", "points"):
            if not isinstance(rec, dict) or key not in rec:
                raise SchemaError(f"{path}:{i + 1}: missing field {key!r}")
        pts = rec["points"]
        if not isinstance(pts, list) or any(not isinstance(p, list) or len(p) != 3 for p in pts):
            raise SchemaError(f"{path}:{i + 1}: points must be [[row, col, label], ...]")
        records.append(rec)
    return records


def annotation_sets_from_records(records: list[dict]) -> list[PointAnnotationSet]:
    """Regroup records (scale records are per joint) into annotation sets."""
    out: list[PointAnnotationSet] = []
    current = None
    groups: list = []
    for rec in records:
        key = (rec["head"], rec["frame"], rec["person"], rec["seed"])
        if rec["head"] != "scale" or key != current or rec.get("joint") == 0:
            if groups:
                out.append(PointAnnotationSet(current[0], tuple(groups), current[3], current[1], current[2]))
            groups = []
            current = key
        groups.append(np.asarray(rec["points"], dtype=np.int64).reshape(-1, 3))
    if groups:
        out.append(PointAnnotationSet(current[0], tuple(groups), current[3], current[1], current[2]))
    return out


# --- images -------------------------------------------------------------------------


def write_image(path, rgb: np.ndarray) -> None:
    """Write a ``(3, h, w)`` float image in [0, 1] as 8-bit PNG."""
    arr = np.clip(np.rint(np.moveaxis(np.asarray(rgb), 0, -1) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_image(path, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Read a PNG as ``(3, h, w)`` float in [0, 1], optionally resized to ``shape``."""
    try:
        img = Image.open(path).convert("RGB")
    except OSError as e:
        raise SchemaError(f"{path}: cannot read image ({e})") from None
    if shape is not None and img.size != (shape[1], shape[0]):
        img = img.resize((shape[1], shape[0]), Image.BILINEAR)
    return np.moveaxis(np.asarray(img, dtype=np.float64) / 255.0, -1, 0)


BACKGROUND = np.array([16.0, 16.0, 16.0])
BODY_GREY = np.array([200.0, 200.0, 200.0])
FLOW_GREY = np.array([110.0, 110.0, 110.0])
OVERLAY_ALPHA = 0.6


def palette(n: int) -> np.ndarray:
    """Distinct 8-bit colours, one per joint."""
    from .synth import joint_palette

    return np.rint(joint_palette(n) * 255.0)


def render_png(frame, path, colors: np.ndarray | None = None, scale: int = 4) -> None:
    """Render one frame: body and flow as grey overlays, scale channels in joint colours.

    ``frame`` is an ``SbfFrame``, ``SbfMaps`` or a ``(J+2, h, w)`` array in
    channel order ``[S/V..., B, F]``. Output is enlarged ``scale`` times with
    nearest-neighbour sampling.
    """
    t = _as_frame_array(frame).astype(np.float64)
    J = t.shape[0] - 2
    colors = palette(J) if colors is None else np.asarray(colors, dtype=np.float64)
    img = np.empty(t.shape[1:] + (3,))
    img[...] = BACKGROUND
    for ch, grey in ((J, BODY_GREY), (J + 1, FLOW_GREY)):
        a = (OVERLAY_ALPHA * np.clip(t[ch], 0.0, 1.0))[..., None]
        img = img * (1.0 - a) + grey * a
    for k in range(J):
        a = np.clip(t[k], 0.0, 1.0)[..., None]
        img = img * (1.0 - a) + colors[k] * a
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    if scale > 1:
        out = out.repeat(scale, axis=0).repeat(scale, axis=1)
    Image.fromarray(out, mode="RGB").save(path, format="PNG")
