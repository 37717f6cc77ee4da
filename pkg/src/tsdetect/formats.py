"""File formats: detection/ground-truth text streams and the TSDW1 weights container.

Detection files are line-oriented, one frame per line:

    <sequence_id> <frame_index> [x1 y1 x2 y2 score]...

Ground-truth files carry 4-tuples (no score). Sequence ids contain no
whitespace and frame indices are nondecreasing within a sequence. Reals are
written with 6 decimal places; that canonical formatting defines equality for
golden files, and write(read(f)) reproduces a canonical file byte for byte.

TSDW1 is a little-endian binary container for named tensors:

    magic b"TSDW1\\n"
    entry: name_len u16 | name bytes (utf-8) | rank u8 | extents u32 each
           | values f32, row-major

Names are unique, every tensor has rank >= 1 with all extents >= 1, and
values are widened to float64 on load. A minimal 23-byte container (magic,
name "tensor", rank 1, extents [1], value 1.0) is:

    54 53 44 57 31 0A 06 00 74 65 6E 73 6F 72 01 01 00 00 00 00 00 80 3F
"""

from __future__ import annotations

import struct

import numpy as np

from .boxes import Box, FrameDetections, SequenceDataset
from .errors import (
    DetectionFormatError,
    DuplicateWeightNameError,
    ExtentOverflowError,
    InvalidBoxError,
    TruncatedWeightsError,
    WeightsFormatError,
)
from .tensor import Tensor

MAGIC = b"TSDW1\n"

# Product of extents above this is treated as a corrupt header rather than a
# plausible tensor.
_MAX_VALUES = 1 << 31


def _format_real(v: float) -> str:
    return f"{v:.6f}"


def _parse_frames(path: str, tuple_len: int, with_score: bool) -> SequenceDataset:
    dataset = SequenceDataset()
    last_index: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) < 2:
                raise DetectionFormatError("expected sequence id and frame index", lineno)
            sid = tokens[0]
            try:
                fidx = int(tokens[1])
            except ValueError:
                raise DetectionFormatError(
                    f"frame index {tokens[1]!r} is not an integer", lineno
                ) from None
            if fidx < 0:
                raise DetectionFormatError(f"frame index {fidx} is negative", lineno)
            if sid in last_index and fidx < last_index[sid]:
                raise DetectionFormatError(
                    f"frame index {fidx} out of order for sequence {sid!r}", lineno
                )
            last_index[sid] = fidx
            rest = tokens[2:]
            if len(rest) % tuple_len:
                raise DetectionFormatError(
                    f"expected {tuple_len}-tuples of box values, got {len(rest)} tokens",
                    lineno,
                )
            boxes = []
            for k in range(0, len(rest), tuple_len):
                try:
                    vals = [float(v) for v in rest[k : k + tuple_len]]
                except ValueError:
                    raise DetectionFormatError(
                        f"box value in {rest[k:k + tuple_len]} is not a number", lineno
                    ) from None
                try:
                    if with_score:
                        boxes.append(Box(vals[0], vals[1], vals[2], vals[3], vals[4]))
                    else:
                        boxes.append(Box(vals[0], vals[1], vals[2], vals[3], 1.0))
                except InvalidBoxError as exc:
                    raise DetectionFormatError(str(exc), lineno) from None
            try:
                dataset.add(FrameDetections(sid, fidx, boxes))
            except InvalidBoxError as exc:
                raise DetectionFormatError(str(exc), lineno) from None
    return dataset


def read_detections(path: str) -> SequenceDataset:
    """Parse a scored detection file (5-tuples per box)."""
    return _parse_frames(path, 5, with_score=True)


def read_ground_truth(path: str) -> SequenceDataset:
    """Parse a ground-truth file (4-tuples per box, score fixed at 1.0)."""
    return _parse_frames(path, 4, with_score=False)


def _frame_lines(dataset: SequenceDataset, with_score: bool) -> list[str]:
    lines = []
    for sid in sorted(dataset.sequence_ids()):
        for frame in dataset.sequence(sid):
            parts = [sid, str(frame.frame_index)]
            for b in frame.boxes:
                vals = [b.x1, b.y1, b.x2, b.y2] + ([b.score] if with_score else [])
                parts.extend(_format_real(v) for v in vals)
            lines.append(" ".join(parts))
    return lines


def write_detections(dataset: SequenceDataset, path: str) -> None:
    """Write canonical form: sequences sorted by id, frames ascending, 6-decimal reals."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in _frame_lines(dataset, with_score=True):
            fh.write(line + "\n")


def write_ground_truth(dataset: SequenceDataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in _frame_lines(dataset, with_score=False):
            fh.write(line + "\n")


def write_pgm(image, path: str) -> None:
    """Binary PGM (P5, maxval 255) for grayscale uint8 rasters."""
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim != 2:
        raise DetectionFormatError(f"PGM image must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4 and pos < len(blob):
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":  # comment line
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if len(fields) < 4 or fields[0] != b"P5":
        raise DetectionFormatError(f"{path!r} is not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise DetectionFormatError(f"unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    data = blob[pos : pos + w * h]
    if len(data) != w * h:
        raise DetectionFormatError(f"PGM payload truncated in {path!r}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


def read_weights(path: str) -> dict[str, Tensor]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise WeightsFormatError(
            f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}"
        )
    pos = len(MAGIC)
    out: dict[str, Tensor] = {}

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedWeightsError(
                f"container ended while reading {what} (offset {pos}, need {n} bytes)"
            )
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        if name_len == 0:
            raise WeightsFormatError(f"empty tensor name at offset {pos}")
        try:
            name = take(name_len, "name").decode("utf-8", errors="strict")
        except UnicodeDecodeError as exc:
            raise WeightsFormatError(f"tensor name is not valid utf-8: {exc}") from None
        if name in out:
            raise DuplicateWeightNameError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1, f"rank of {name!r}"))
        if rank == 0:
            raise WeightsFormatError(f"tensor {name!r} has rank 0")
        extents = struct.unpack(f"<{rank}I", take(4 * rank, f"extents of {name!r}"))
        count = 1
        for e in extents:
            if e == 0:
                raise ExtentOverflowError(f"tensor {name!r} has a zero extent")
            count *= e
            if count > _MAX_VALUES:
                raise ExtentOverflowError(
                    f"tensor {name!r} extents {extents} overflow the value budget"
                )
        values = struct.unpack(f"<{count}f", take(4 * count, f"values of {name!r}"))
        out[name] = Tensor(values, dims=tuple(extents))
    return out


def write_weights(weights: dict[str, Tensor], path: str) -> None:
    """Write entries in the mapping's iteration order; float32 values."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, tensor in weights.items():
            encoded = name.encode("utf-8")
            if not encoded or len(encoded) > 0xFFFF:
                raise WeightsFormatError(f"tensor name {name!r} not encodable")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.rank))
            fh.write(struct.pack(f"<{tensor.rank}I", *tensor.dims))
            flat = tensor.data.ravel()
            fh.write(struct.pack(f"<{flat.size}f", *(float(v) for v in flat)))
