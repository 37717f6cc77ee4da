import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsdetect import formats
from tsdetect.boxes import Box, FrameDetections, SequenceDataset
from tsdetect.errors import (
    DetectionFormatError,
    DuplicateWeightNameError,
    ExtentOverflowError,
    TruncatedWeightsError,
    WeightsFormatError,
)
from tsdetect.tensor import Tensor

DATA = Path(__file__).parent / "data"

# Minimal valid container documented in formats: magic, name "tensor",
# rank 1, extents [1], value 1.0.
FIXTURE_23 = bytes.fromhex("5453445731" "0A" "0600" "74656E736F72" "01" "01000000" "0000803F")


def make_dataset(frames):
    ds = SequenceDataset()
    for sid, fidx, boxes in frames:
        ds.add(FrameDetections(sid, fidx, boxes))
    return ds


class TestDetectionText:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.txt"
        p.write_text("")
        assert formats.read_detections(str(p)).frames == []

    def test_single_frame_round_trip(self, tmp_path):
        ds = make_dataset([("s", 0, [Box(1.0, 2.0, 3.5, 4.25, 0.75)])])
        p = tmp_path / "one.txt"
        formats.write_detections(ds, str(p))
        back = formats.read_detections(str(p))
        b = back.frames[0].boxes[0]
        assert (b.x1, b.y1, b.x2, b.y2, b.score) == (1.0, 2.0, 3.5, 4.25, 0.75)

    def test_zero_box_frame_round_trip(self, tmp_path):
        ds = make_dataset([("neg", 3, [])])
        p = tmp_path / "neg.txt"
        formats.write_detections(ds, str(p))
        back = formats.read_detections(str(p))
        assert back.frames[0].frame_index == 3 and back.frames[0].boxes == []

    def test_write_read_write_is_fixed_point(self, tmp_path):
        ds = make_dataset(
            [
                ("b", 0, [Box(0.1234567, 2, 30.5555555, 44, 0.5)]),
                ("a", 1, [Box(5, 6, 7, 8, 0.25), Box(1, 1, 2, 2, 1.0)]),
                ("a", 0, []),
            ]
        )
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        formats.write_detections(ds, str(p1))
        formats.write_detections(formats.read_detections(str(p1)), str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_ground_truth_round_trip(self, tmp_path):
        ds = make_dataset([("s", 0, [Box(1, 2, 3, 4)])])
        p = tmp_path / "gt.txt"
        formats.write_ground_truth(ds, str(p))
        assert p.read_text() == "s 0 1.000000 2.000000 3.000000 4.000000\n"
        back = formats.read_ground_truth(str(p))
        assert back.frames[0].boxes[0].score == 1.0

    def test_golden_fixture_parses(self):
        ds = formats.read_detections(str(DATA / "golden_cand_seed42.txt"))
        assert ds.n_frames() == 60
        assert ds.n_boxes() == 416

    @pytest.mark.parametrize(
        "line,reason",
        [
            ("s", "frame index"),
            ("s x", "integer"),
            ("s -1", "negative"),
            ("s 0 1.0 2.0 3.0", "tuples"),
            ("s 0 1.0 2.0 3.0 4.0 bad", "number"),
            ("s 0 5.0 2.0 3.0 4.0 0.5", "area"),
            ("s 0 1.0 2.0 3.0 4.0 1.5", "score"),
        ],
    )
    def test_malformed_line_names_line_and_reason(self, tmp_path, line, reason):
        p = tmp_path / "bad.txt"
        p.write_text("s 0 1.0 2.0 3.0 4.0 0.5\n" + line + "\n")
        with pytest.raises(DetectionFormatError) as err:
            formats.read_detections(str(p))
        assert err.value.line == 2
        assert reason in str(err.value)

    def test_out_of_order_frames_rejected(self, tmp_path):
        p = tmp_path / "ooo.txt"
        p.write_text("s 1\ns 0\n")
        with pytest.raises(DetectionFormatError) as err:
            formats.read_detections(str(p))
        assert err.value.line == 2

    def test_interleaved_sequences_allowed(self, tmp_path):
        p = tmp_path / "mix.txt"
        p.write_text("a 0\nb 0\na 1\nb 2\n")
        ds = formats.read_detections(str(p))
        assert ds.sequence_ids() == ["a", "b"]

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["s0", "s1"]),
                st.floats(0, 500),
                st.floats(0, 500),
                st.floats(1, 100),
                st.floats(1, 100),
                st.floats(0, 1),
            ),
            max_size=12,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip_random_datasets(self, tmp_path_factory, rows):
        tmp = tmp_path_factory.mktemp("rt")
        ds = SequenceDataset()
        for i, (sid, x, y, w, h, score) in enumerate(rows):
            ds.add(
                FrameDetections(
                    sid, i, [Box(round(x, 6), round(y, 6), round(x + w, 6), round(y + h, 6), round(score, 6))]
                )
            )
        p1, p2 = tmp / "r1.txt", tmp / "r2.txt"
        formats.write_detections(ds, str(p1))
        formats.write_detections(formats.read_detections(str(p1)), str(p2))
        assert p1.read_bytes() == p2.read_bytes()


class TestWeightsContainer:
    def test_empty_container(self, tmp_path):
        p = tmp_path / "w.tsdw1"
        p.write_bytes(formats.MAGIC)
        assert formats.read_weights(str(p)) == {}

    def test_documented_23_byte_fixture(self, tmp_path):
        assert len(FIXTURE_23) == 23
        p = tmp_path / "w.tsdw1"
        p.write_bytes(FIXTURE_23)
        weights = formats.read_weights(str(p))
        assert list(weights) == ["tensor"]
        assert weights["tensor"].dims == (1,)
        assert weights["tensor"].data[0] == 1.0

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        weights = {
            "a.weight": Tensor(rng.normal(size=(2, 2)).astype(np.float32).astype(np.float64)),
            "a.bias": Tensor(rng.normal(size=(2,)).astype(np.float32).astype(np.float64)),
        }
        p1, p2 = tmp_path / "w1", tmp_path / "w2"
        formats.write_weights(weights, str(p1))
        formats.write_weights(formats.read_weights(str(p1)), str(p2))
        assert p1.read_bytes() == p2.read_bytes()
        back = formats.read_weights(str(p1))
        assert np.array_equal(back["a.weight"].data, weights["a.weight"].data)

    @given(
        st.dictionaries(
            st.text(st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=12),
            st.tuples(
                st.lists(st.integers(1, 4), min_size=1, max_size=3),
                st.integers(0, 2**32),
            ),
            max_size=5,
        )
    )
    @settings(max_examples=40, deadline=None)
    def test_round_trip_random_maps(self, tmp_path_factory, layout):
        tmp = tmp_path_factory.mktemp("wts")
        weights = {}
        for name, (dims, seed) in layout.items():
            rng = np.random.default_rng(seed)
            values = rng.normal(size=tuple(dims)).astype(np.float32).astype(np.float64)
            weights[name] = Tensor(values)
        p1, p2 = tmp / "w1", tmp / "w2"
        formats.write_weights(weights, str(p1))
        formats.write_weights(formats.read_weights(str(p1)), str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "w"
        p.write_bytes(b"NOPE!\n")
        with pytest.raises(WeightsFormatError):
            formats.read_weights(str(p))

    def test_truncated_values(self, tmp_path):
        p = tmp_path / "w"
        p.write_bytes(FIXTURE_23[:-2])
        with pytest.raises(TruncatedWeightsError):
            formats.read_weights(str(p))

    def test_duplicate_name(self, tmp_path):
        entry = FIXTURE_23[len(formats.MAGIC):]
        p = tmp_path / "w"
        p.write_bytes(formats.MAGIC + entry + entry)
        with pytest.raises(DuplicateWeightNameError):
            formats.read_weights(str(p))

    def test_zero_extent(self, tmp_path):
        blob = bytearray(FIXTURE_23)
        blob[15] = 0  # extents[0] -> 0
        p = tmp_path / "w"
        p.write_bytes(bytes(blob))
        with pytest.raises(ExtentOverflowError):
            formats.read_weights(str(p))

    def test_extent_overflow(self, tmp_path):
        head = formats.MAGIC + struct.pack("<H", 1) + b"t" + struct.pack("<B", 3)
        head += struct.pack("<3I", 0xFFFFFFFF, 0xFFFFFFFF, 2)
        p = tmp_path / "w"
        p.write_bytes(head)
        with pytest.raises(ExtentOverflowError):
            formats.read_weights(str(p))

    def test_exhaustive_structural_corruption(self, tmp_path):
        """Every single-byte mutation of a structural field must be rejected.

        Structural bytes of the 23-byte fixture: magic [0:6), name_len [6:8),
        rank [14], extents [15:19). Name and value bytes are payload, not
        structure.
        """
        structural = list(range(0, 8)) + [14] + list(range(15, 19))
        p = tmp_path / "w"
        for pos in structural:
            for value in range(256):
                if value == FIXTURE_23[pos]:
                    continue
                blob = bytearray(FIXTURE_23)
                blob[pos] = value
                p.write_bytes(bytes(blob))
                with pytest.raises(WeightsFormatError):
                    formats.read_weights(str(p))


class TestPgm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, size=(24, 32), dtype=np.uint8)
        p = tmp_path / "f.pgm"
        formats.write_pgm(img, str(p))
        assert np.array_equal(formats.read_pgm(str(p)), img)

    def test_rejects_non_pgm(self, tmp_path):
        p = tmp_path / "f.pgm"
        p.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
        with pytest.raises(DetectionFormatError):
            formats.read_pgm(str(p))

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "f.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(DetectionFormatError):
            formats.read_pgm(str(p))
