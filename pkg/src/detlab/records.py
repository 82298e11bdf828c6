"""Record-file container and Example payload encoding.

The container frames each payload as

    length:8 LE | masked_crc32c(length):4 LE | payload | masked_crc32c(payload):4 LE

and every payload is an Example message in protobuf wire encoding:

    Example  { 1: Features }
    Features { 1: map<string, Feature> }     # map entry: 1=key, 2=value
    Feature  { oneof: 1=BytesList, 2=FloatList, 3=Int64List }
    *List    { 1: repeated value }

Files written here are consumable by the standard detection training
ecosystem; everything is implemented from the wire format up so the output
is bit-exact and fully testable without that ecosystem installed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO

from .errors import CorruptionError, MappingError, ValidationError
from .ingest import AnnotatedImage, LabelMap

# CRC-32C (Castagnoli), reflected polynomial.
_CRC32C_POLY = 0x82F63B78


def _build_table() -> list[int]:
    table = []
    for index in range(256):
        crc = index
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC32C_POLY if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC_TABLE = _build_table()


def crc32c(data: bytes) -> int:
    """Plain (unmasked) CRC-32C of ``data``."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc = (crc >> 8) ^ _CRC_TABLE[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFFFFFF


def masked_crc32c(data: bytes) -> int:
    """CRC-32C with the record-container rotation mask applied."""
    crc = crc32c(data)
    return (((crc >> 15) | (crc << 17)) + 0xA282EAD8) & 0xFFFFFFFF


@dataclass
class RecordFileStats:
    record_count: int = 0
    total_payload_bytes: int = 0


def write_records(sink: BinaryIO, payloads: list[bytes]) -> RecordFileStats:
    """Write payloads to ``sink`` in container framing; returns stats."""
    stats = RecordFileStats()
    for payload in payloads:
        length = struct.pack("<Q", len(payload))
        try:
            sink.write(length)
            sink.write(struct.pack("<I", masked_crc32c(length)))
            sink.write(payload)
            sink.write(struct.pack("<I", masked_crc32c(payload)))
        except OSError as exc:
            raise CorruptionError(
                f"write failed after {stats.record_count} records: {exc}"
            ) from exc
        stats.record_count += 1
        stats.total_payload_bytes += len(payload)
    return stats


def read_records(source: BinaryIO) -> list[bytes]:
    """Read and CRC-validate every record; returns payloads in order."""
    payloads = []
    offset = 0
    while True:
        header = source.read(12)
        if not header:
            return payloads
        if len(header) < 12:
            raise CorruptionError(f"truncated record header at byte {offset}")
        (length,) = struct.unpack("<Q", header[:8])
        (length_crc,) = struct.unpack("<I", header[8:12])
        if masked_crc32c(header[:8]) != length_crc:
            raise CorruptionError(f"length CRC mismatch at byte {offset}")
        body = source.read(length + 4)
        if len(body) < length + 4:
            raise CorruptionError(f"truncated record payload at byte {offset + 12}")
        payload, (payload_crc,) = body[:length], struct.unpack("<I", body[length:])
        if masked_crc32c(payload) != payload_crc:
            raise CorruptionError(f"payload CRC mismatch at byte {offset + 12}")
        payloads.append(payload)
        offset += 12 + length + 4


# --- protobuf wire primitives -------------------------------------------

_WIRETYPE_VARINT = 0
_WIRETYPE_LENGTH = 2


def _varint(value: int) -> bytes:
    if value < 0:
        value &= (1 << 64) - 1  # two's complement, 10 bytes
    out = bytearray()
    while True:
        bits = value & 0x7F
        value >>= 7
        if value:
            out.append(0x80 | bits)
        else:
            out.append(bits)
            return bytes(out)


def _tag(field_number: int, wire_type: int) -> bytes:
    return _varint((field_number << 3) | wire_type)


def _length_delimited(field_number: int, payload: bytes) -> bytes:
    return _tag(field_number, _WIRETYPE_LENGTH) + _varint(len(payload)) + payload


@dataclass
class FeatureValue:
    """Exactly one of the three list variants is set (empty list counts)."""

    bytes_list: list[bytes] | None = None
    float_list: list[float] | None = None
    int64_list: list[int] | None = None

    def __post_init__(self):
        populated = [
            v for v in (self.bytes_list, self.float_list, self.int64_list)
            if v is not None
        ]
        if len(populated) != 1:
            raise ValidationError("FeatureValue must populate exactly one variant")

    def encode(self) -> bytes:
        if self.bytes_list is not None:
            body = b"".join(_length_delimited(1, v) for v in self.bytes_list)
            return _length_delimited(1, body)
        if self.float_list is not None:
            packed = struct.pack(f"<{len(self.float_list)}f", *self.float_list)
            body = _length_delimited(1, packed) if self.float_list else b""
            return _length_delimited(2, body)
        assert self.int64_list is not None
        packed = b"".join(_varint(v) for v in self.int64_list)
        body = _length_delimited(1, packed) if self.int64_list else b""
        return _length_delimited(3, body)


@dataclass
class ExampleRecord:
    features: dict[str, FeatureValue] = field(default_factory=dict)

    def encode(self) -> bytes:
        """Serialize deterministically: map entries in ascending key order."""
        entries = b""
        for key in sorted(self.features):
            entry = _length_delimited(1, key.encode("utf-8"))
            entry += _length_delimited(2, self.features[key].encode())
            entries += _length_delimited(1, entry)
        return _length_delimited(1, entries)


def encode_detection_example(
    img: AnnotatedImage,
    image_bytes: bytes,
    image_format: str,
    labelmap: LabelMap,
) -> bytes:
    """Serialize one annotated image to the standard detection Example keys.

    Box coordinates are normalized to [0, 1] by the image dimensions.
    """
    if not image_bytes:
        raise ValidationError("image_bytes must be non-empty")
    ids = labelmap.ids_by_name()
    for box in img.boxes:
        if box.class_name not in ids:
            raise MappingError(f"class '{box.class_name}' not in labelmap")

    filename = img.filename.encode("utf-8")
    example = ExampleRecord(
        {
            "image/encoded": FeatureValue(bytes_list=[image_bytes]),
            "image/format": FeatureValue(bytes_list=[image_format.encode("utf-8")]),
            "image/filename": FeatureValue(bytes_list=[filename]),
            "image/source_id": FeatureValue(bytes_list=[filename]),
            "image/height": FeatureValue(int64_list=[int(img.height)]),
            "image/width": FeatureValue(int64_list=[int(img.width)]),
            "image/object/bbox/xmin": FeatureValue(
                float_list=[b.xmin / img.width for b in img.boxes]
            ),
            "image/object/bbox/xmax": FeatureValue(
                float_list=[b.xmax / img.width for b in img.boxes]
            ),
            "image/object/bbox/ymin": FeatureValue(
                float_list=[b.ymin / img.height for b in img.boxes]
            ),
            "image/object/bbox/ymax": FeatureValue(
                float_list=[b.ymax / img.height for b in img.boxes]
            ),
            "image/object/class/text": FeatureValue(
                bytes_list=[b.class_name.encode("utf-8") for b in img.boxes]
            ),
            "image/object/class/label": FeatureValue(
                int64_list=[ids[b.class_name] for b in img.boxes]
            ),
        }
    )
    return example.encode()
