import io
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detlab.errors import CorruptionError, MappingError, ValidationError
from detlab.ingest import AnnotatedImage, BoundingBox, LabelMap
from detlab.records import (
    ExampleRecord,
    FeatureValue,
    crc32c,
    encode_detection_example,
    masked_crc32c,
    read_records,
    write_records,
)
from helpers.crc_oracle import crc32c_bitwise, mask_bitwise
from helpers.wire_oracle import decode_example


class TestCrc32c:
    def test_standard_check_vector(self):
        # classic Castagnoli check input, pre-mask
        assert crc32c(b"123456789") == 0xE3069283

    def test_matches_bitwise_oracle(self):
        rng = random.Random(7)
        for _ in range(50):
            data = rng.randbytes(rng.randrange(0, 64))
            assert crc32c(data) == crc32c_bitwise(data)
            assert masked_crc32c(data) == mask_bitwise(crc32c_bitwise(data))

    def test_mask_of_zero_crc(self):
        assert (((0 >> 15) | (0 << 17)) + 0xA282EAD8) & 0xFFFFFFFF == 0xA282EAD8

    def test_deterministic(self):
        assert masked_crc32c(b"abc") == masked_crc32c(b"abc")


class TestContainer:
    def test_empty_list_gives_empty_file(self):
        sink = io.BytesIO()
        stats = write_records(sink, [])
        assert sink.getvalue() == b""
        assert stats.record_count == 0

    def test_framing_size(self):
        sink = io.BytesIO()
        write_records(sink, [b"hello"])
        assert len(sink.getvalue()) == 8 + 4 + 5 + 4

    def test_round_trip(self):
        payloads = [b"", b"x", b"abc" * 100]
        sink = io.BytesIO()
        stats = write_records(sink, payloads)
        assert stats.record_count == 3
        assert stats.total_payload_bytes == sum(len(p) for p in payloads)
        assert read_records(io.BytesIO(sink.getvalue())) == payloads

    def test_random_round_trips(self):
        rng = random.Random(1234)
        for _ in range(20):
            payloads = [
                rng.randbytes(int(2 ** rng.uniform(0, 16)))
                for _ in range(rng.randrange(0, 100))
            ]
            sink = io.BytesIO()
            write_records(sink, payloads)
            assert read_records(io.BytesIO(sink.getvalue())) == payloads

    def test_empty_file_reads_empty(self):
        assert read_records(io.BytesIO(b"")) == []

    def test_single_bit_flip_detected(self):
        sink = io.BytesIO()
        write_records(sink, [b"payload-data"])
        raw = bytearray(sink.getvalue())
        # flip a bit inside the payload region (after 12-byte header)
        raw[14] ^= 0x40
        with pytest.raises(CorruptionError, match="payload CRC"):
            read_records(io.BytesIO(bytes(raw)))

    def test_length_corruption_detected(self):
        sink = io.BytesIO()
        write_records(sink, [b"payload-data"])
        raw = bytearray(sink.getvalue())
        raw[0] ^= 0x01
        with pytest.raises(CorruptionError, match="length CRC"):
            read_records(io.BytesIO(bytes(raw)))

    def test_truncation_detected_with_offset(self):
        sink = io.BytesIO()
        write_records(sink, [b"abcdef", b"ghijkl"])
        raw = sink.getvalue()[:-3]
        # second record starts at byte 22; its payload region at byte 34
        with pytest.raises(CorruptionError, match="byte 34"):
            read_records(io.BytesIO(raw))


def _labelmap():
    return LabelMap(((1, "cat"), (2, "dog")))


def _image():
    return AnnotatedImage(
        "a.png",
        200,
        100,
        [
            BoundingBox(50, 10, 150, 90, "cat"),
            BoundingBox(0, 0, 200, 100, "dog"),
        ],
    )


class TestExampleEncoding:
    def test_feature_value_requires_exactly_one_variant(self):
        with pytest.raises(ValidationError):
            FeatureValue()
        with pytest.raises(ValidationError):
            FeatureValue(bytes_list=[], int64_list=[])

    def test_normalized_coordinates(self):
        encoded = encode_detection_example(_image(), b"\x89PNG", "png", _labelmap())
        decoded = decode_example(encoded)
        assert decoded["image/object/bbox/xmin"] == ("float", [0.25, 0.0])
        assert decoded["image/object/bbox/xmax"] == ("float", [0.75, 1.0])
        # 0.1 and 0.9 are not float32-exact; compare through a float32 round trip
        assert decoded["image/object/bbox/ymin"][1] == pytest.approx([0.1, 0.0])
        assert decoded["image/object/bbox/ymax"][1] == pytest.approx([0.9, 1.0])

    def test_scalar_keys(self):
        encoded = encode_detection_example(_image(), b"imgbytes", "png", _labelmap())
        decoded = decode_example(encoded)
        assert decoded["image/encoded"] == ("bytes", [b"imgbytes"])
        assert decoded["image/format"] == ("bytes", [b"png"])
        assert decoded["image/filename"] == ("bytes", [b"a.png"])
        assert decoded["image/source_id"] == ("bytes", [b"a.png"])
        assert decoded["image/height"] == ("int64", [100])
        assert decoded["image/width"] == ("int64", [200])
        assert decoded["image/object/class/text"] == ("bytes", [b"cat", b"dog"])
        assert decoded["image/object/class/label"] == ("int64", [1, 2])

    def test_zero_boxes_lists_empty_but_present(self):
        img = AnnotatedImage("b.png", 64, 64, [])
        decoded = decode_example(
            encode_detection_example(img, b"x", "png", _labelmap())
        )
        for key in (
            "image/object/bbox/xmin",
            "image/object/bbox/xmax",
            "image/object/bbox/ymin",
            "image/object/bbox/ymax",
            "image/object/class/text",
            "image/object/class/label",
        ):
            assert decoded[key][1] == []

    def test_unknown_class_rejected(self):
        img = AnnotatedImage("c.png", 10, 10, [BoundingBox(1, 1, 5, 5, "bird")])
        with pytest.raises(MappingError, match="bird"):
            encode_detection_example(img, b"x", "png", _labelmap())

    def test_empty_image_bytes_rejected(self):
        with pytest.raises(ValidationError):
            encode_detection_example(_image(), b"", "png", _labelmap())

    def test_deterministic_serialization(self):
        a = encode_detection_example(_image(), b"x", "png", _labelmap())
        b = encode_detection_example(_image(), b"x", "png", _labelmap())
        assert a == b

    def test_random_images_decode_back(self):
        rng = random.Random(99)
        classes = ["ant", "bee", "cow"]
        lm = LabelMap(tuple((i, n) for i, n in enumerate(sorted(classes), 1)))
        for _ in range(100):
            w, h = rng.randrange(10, 500), rng.randrange(10, 500)
            boxes = []
            for _ in range(rng.randrange(0, 6)):
                x1, x2 = sorted(rng.sample(range(0, w + 1), 2))
                y1, y2 = sorted(rng.sample(range(0, h + 1), 2))
                boxes.append(BoundingBox(x1, y1, x2, y2, rng.choice(classes)))
            img = AnnotatedImage(f"img{rng.randrange(10**6)}.png", w, h, boxes)
            payload = rng.randbytes(rng.randrange(1, 64))
            decoded = decode_example(
                encode_detection_example(img, payload, "png", lm)
            )
            assert decoded["image/encoded"][1] == [payload]
            assert decoded["image/width"][1] == [w]
            assert decoded["image/height"][1] == [h]
            xmins = decoded["image/object/bbox/xmin"][1]
            xmaxs = decoded["image/object/bbox/xmax"][1]
            ymins = decoded["image/object/bbox/ymin"][1]
            ymaxs = decoded["image/object/bbox/ymax"][1]
            labels = decoded["image/object/class/label"][1]
            texts = decoded["image/object/class/text"][1]
            assert (
                len(xmins) == len(xmaxs) == len(ymins) == len(ymaxs)
                == len(labels) == len(texts) == len(boxes)
            )
            for got, box in zip(xmins, boxes):
                assert got == pytest.approx(box.xmin / w, abs=1e-7)
                assert 0.0 <= got <= 1.0
            for lo, hi in zip(xmins, xmaxs):
                assert lo < hi
            for lo, hi in zip(ymins, ymaxs):
                assert lo < hi
            names = lm.names_by_id()
            assert [names[i].encode() for i in labels] == texts

    @given(
        st.lists(
            st.one_of(
                st.builds(
                    FeatureValue,
                    bytes_list=st.lists(st.binary(max_size=16), max_size=4),
                ),
                st.builds(
                    FeatureValue,
                    float_list=st.lists(
                        st.floats(width=32, allow_nan=False, allow_infinity=False),
                        max_size=4,
                    ),
                ),
                st.builds(
                    FeatureValue,
                    int64_list=st.lists(
                        st.integers(min_value=-(2**63), max_value=2**63 - 1),
                        max_size=4,
                    ),
                ),
            ),
            max_size=6,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_arbitrary_features_decode_back(self, values):
        record = ExampleRecord({f"key/{i}": v for i, v in enumerate(values)})
        decoded = decode_example(record.encode())
        assert set(decoded) == set(record.features)
        for key, feature in record.features.items():
            kind, got = decoded[key]
            if feature.bytes_list is not None:
                assert (kind, got) == ("bytes", feature.bytes_list)
            elif feature.int64_list is not None:
                assert (kind, got) == ("int64", feature.int64_list)
            else:
                expected = [struct.unpack("<f", struct.pack("<f", v))[0]
                            for v in feature.float_list]
                assert kind == "float"
                assert got == expected
