import pytest
from hypothesis import given, strategies as st

from tsdetect.boxes import (
    Box,
    FrameDetections,
    SequenceDataset,
    area,
    iou,
    pairwise_iou_matrix,
)
from tsdetect.errors import InvalidBoxError


def random_box(draw_floats):
    # Coordinates quantized to the canonical 6-decimal file precision; sub-ulp
    # coordinate differences would otherwise defeat exact-equality properties.
    x1, y1, w, h, score = (round(v, 6) for v in draw_floats)
    return Box(x1, y1, x1 + w, y1 + h, score)


box_strategy = st.builds(
    random_box,
    st.tuples(
        st.floats(-100, 100),
        st.floats(-100, 100),
        st.floats(0.1, 200),
        st.floats(0.1, 200),
        st.floats(0, 1),
    ),
)


class TestBoxInvariants:
    def test_rejects_zero_area(self):
        with pytest.raises(InvalidBoxError):
            Box(0, 0, 0, 10)
        with pytest.raises(InvalidBoxError):
            Box(0, 0, 10, 0)
        with pytest.raises(InvalidBoxError):
            Box(5, 5, 4, 10)

    def test_rejects_score_out_of_range(self):
        with pytest.raises(InvalidBoxError):
            Box(0, 0, 1, 1, score=1.5)
        with pytest.raises(InvalidBoxError):
            Box(0, 0, 1, 1, score=-0.1)


class TestArea:
    def test_unit_square(self):
        assert area(Box(0, 0, 1, 1)) == 1.0

    def test_ten_square(self):
        assert area(Box(0, 0, 10, 10)) == 100.0

    def test_rectangle(self):
        # (2.5, 0, 7.5, 4): 5 * 4
        assert area(Box(2.5, 0, 7.5, 4)) == pytest.approx(20.0)


class TestIou:
    def test_identity(self):
        b = Box(3, 4, 13, 24, 0.5)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0

    def test_half_shift(self):
        # intersection 5x10 = 50, union 100 + 100 - 50 = 150
        assert iou(Box(0, 0, 10, 10), Box(5, 0, 15, 10)) == pytest.approx(1 / 3, abs=1e-12)

    def test_edge_touch_is_zero(self):
        assert iou(Box(0, 0, 10, 10), Box(10, 0, 20, 10)) == 0.0

    @given(box_strategy, box_strategy)
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0

    @given(box_strategy, box_strategy)
    def test_positive_iff_overlapping(self, a, b):
        overlaps = min(a.x2, b.x2) > max(a.x1, b.x1) and min(a.y2, b.y2) > max(a.y1, b.y1)
        assert (iou(a, b) > 0) == overlaps

    @given(box_strategy, box_strategy)
    def test_one_iff_identical(self, a, b):
        if iou(a, b) == 1.0:
            assert (a.x1, a.y1, a.x2, a.y2) == (b.x1, b.y1, b.x2, b.y2)

    @given(st.lists(box_strategy, max_size=8))
    def test_matrix_agrees_with_pairwise(self, boxes):
        mat = pairwise_iou_matrix(boxes)
        for i, a in enumerate(boxes):
            for j, b in enumerate(boxes):
                expected = 0.0 if i == j else iou(a, b)
                assert mat[i, j] == pytest.approx(expected, abs=1e-12)


class TestSequenceDataset:
    def test_duplicate_frame_key_rejected(self):
        ds = SequenceDataset()
        ds.add(FrameDetections("a", 0, []))
        with pytest.raises(InvalidBoxError):
            ds.add(FrameDetections("a", 0, []))

    def test_sequence_sorted_by_frame(self):
        ds = SequenceDataset()
        ds.add(FrameDetections("a", 2, []))
        ds.add(FrameDetections("a", 0, []))
        ds.add(FrameDetections("b", 1, []))
        assert [f.frame_index for f in ds.sequence("a")] == [0, 2]
        assert ds.sequence_ids() == ["a", "b"]

    def test_negative_frame_index_rejected(self):
        with pytest.raises(InvalidBoxError):
            FrameDetections("a", -1, [])
