import math
import random

import numpy as np
import pytest

from tsdetect.boxes import Box, FrameDetections, SequenceDataset
from tsdetect.errors import EvaluationError
from tsdetect.evaluate import (
    average_precision,
    ap_over_range,
    evaluate,
    false_positive_rate,
    match,
    recall_trace,
)


def dataset(frames):
    ds = SequenceDataset()
    for sid, fidx, boxes in frames:
        ds.add(FrameDetections(sid, fidx, boxes))
    return ds


def jittered(gt, dx, score):
    return Box(gt.x1 + dx, gt.y1, gt.x2 + dx, gt.y2, score)


class TestMatch:
    def test_perfect_single(self):
        gt = Box(0, 0, 10, 10)
        r = match([gt.with_score(0.9)], [gt], 0.5)
        assert (r.n_tp, r.n_fp, r.n_fn) == (1, 0, 0)
        assert r.matches[0].iou == pytest.approx(1.0)

    def test_no_predictions(self):
        r = match([], [Box(0, 0, 10, 10), Box(20, 20, 30, 30)], 0.5)
        assert (r.n_tp, r.n_fp, r.n_fn) == (0, 0, 2)

    def test_high_scoring_miss_plus_low_scoring_hit(self):
        gt = Box(0, 0, 10, 10)
        far = Box(100, 100, 110, 110, 0.9)
        near = gt.with_score(0.7)
        r = match([far, near], [gt], 0.5)
        assert (r.n_tp, r.n_fp, r.n_fn) == (1, 1, 0)
        by_pred = {m.pred_index: m for m in r.matches}
        assert by_pred[0].gt_index is None
        assert by_pred[1].gt_index == 0

    def test_each_gt_matched_once(self):
        gt = Box(0, 0, 10, 10)
        r = match([gt.with_score(0.9), gt.with_score(0.8)], [gt], 0.5)
        assert (r.n_tp, r.n_fp) == (1, 1)

    def test_score_tie_lower_index_first(self):
        gt = Box(0, 0, 10, 10)
        a = jittered(gt, 1.0, 0.8)
        b = gt.with_score(0.8)
        # a (index 0) grabs the GT despite b having perfect overlap.
        r = match([a, b], [gt], 0.5)
        by_pred = {m.pred_index: m for m in r.matches}
        assert by_pred[0].gt_index == 0
        assert by_pred[1].gt_index is None


class TestAveragePrecision:
    def test_perfect_detector(self):
        gt = Box(0, 0, 10, 10)
        results = [match([gt.with_score(1.0)], [gt], 0.5) for _ in range(5)]
        assert average_precision(results) == pytest.approx(1.0)

    def test_hand_case_half(self):
        gt = Box(0, 0, 10, 10)
        far = Box(100, 100, 110, 110, 0.9)
        r = match([far, gt.with_score(0.7)], [gt], 0.5)
        assert average_precision([r]) == pytest.approx(0.5)

    def test_no_true_positive(self):
        gt = Box(0, 0, 10, 10)
        r = match([Box(100, 100, 110, 110, 0.9)], [gt], 0.5)
        assert average_precision([r]) == 0.0

    def test_no_ground_truth_is_nan(self):
        r = match([Box(0, 0, 10, 10, 0.9)], [], 0.5)
        assert math.isnan(average_precision([r]))

    def _random_results(self, seed, n_frames=8, thresh=0.5):
        rng = random.Random(seed)
        results = []
        for f in range(n_frames):
            gt = Box(f * 50, 0, f * 50 + 30, 30)
            preds = []
            for _ in range(rng.randint(0, 4)):
                dx = rng.uniform(-15, 15)
                preds.append(jittered(gt, dx, rng.random()))
            results.append(match(preds, [gt], thresh))
        return results

    @pytest.mark.parametrize("seed", range(20))
    def test_score_scaling_invariance(self, seed):
        rng = random.Random(seed)
        frames = []
        c = rng.uniform(0.1, 1.0)
        base_results, scaled_results = [], []
        for f in range(6):
            gt = Box(f * 50, 0, f * 50 + 30, 30)
            preds = [jittered(gt, rng.uniform(-15, 15), rng.random()) for _ in range(3)]
            scaled = [b.with_score(b.score * c) for b in preds]
            base_results.append(match(preds, [gt], 0.5))
            scaled_results.append(match(scaled, [gt], 0.5))
        assert average_precision(base_results) == pytest.approx(
            average_precision(scaled_results), abs=1e-12
        )

    @pytest.mark.parametrize("seed", range(10))
    def test_duplicate_of_matched_gt_never_helps(self, seed):
        rng = random.Random(seed + 1000)
        gt = Box(0, 0, 40, 40)
        preds = [jittered(gt, rng.uniform(-5, 5), rng.random()) for _ in range(4)]
        base = average_precision([match(preds, [gt], 0.5)])
        best = max(preds, key=lambda b: b.score)
        dup = best.with_score(min(1.0, best.score))
        extended = average_precision([match(preds + [dup], [gt], 0.5)])
        assert extended <= base + 1e-12


class TestApOverRange:
    def test_single_threshold_equals_ap(self):
        gt_box = Box(0, 0, 10, 10)
        gts = dataset([("s", 0, [gt_box])])
        preds = dataset([("s", 0, [gt_box.with_score(0.9)])])
        out = ap_over_range(preds, gts, [0.5])
        r = match([gt_box.with_score(0.9)], [gt_box], 0.5)
        assert out[0.5] == pytest.approx(average_precision([r]))

    def test_perfect_detector_all_thresholds(self):
        gt_box = Box(0, 0, 10, 10)
        gts = dataset([("s", i, [gt_box]) for i in range(4)])
        preds = dataset([("s", i, [gt_box.with_score(1.0)]) for i in range(4)])
        out = ap_over_range(preds, gts, [0.5, 0.75, 0.95])
        assert all(v == pytest.approx(1.0) for v in out.values())

    def test_empty_threshold_list_rejected(self):
        gts = dataset([("s", 0, [Box(0, 0, 10, 10)])])
        with pytest.raises(EvaluationError):
            ap_over_range(gts, gts, [])

    def test_degraded_localization_monotone(self):
        # Boxes jittered to IoU ~0.6: high AP at 0.5, zero at 0.75.
        gts_frames, pred_frames = [], []
        for i in range(10):
            gt = Box(i * 100, 0, i * 100 + 40, 40)
            gts_frames.append(("s", i, [gt]))
            pred_frames.append(("s", i, [jittered(gt, 10.0, 0.9)]))  # IoU = 30/50 = 0.6
        out = ap_over_range(dataset(pred_frames), dataset(gts_frames), [0.5, 0.75])
        assert out[0.5] == pytest.approx(1.0)
        assert out[0.75] == 0.0

    @pytest.mark.parametrize("seed", range(100))
    def test_threshold_monotonicity(self, seed):
        rng = random.Random(seed)
        gts_frames, pred_frames = [], []
        for i in range(rng.randint(1, 6)):
            gt = Box(i * 100, 0, i * 100 + rng.uniform(20, 50), rng.uniform(20, 50))
            gts_frames.append(("s", i, [gt]))
            preds = [
                jittered(gt, rng.uniform(-12, 12), rng.random())
                for _ in range(rng.randint(0, 4))
            ]
            pred_frames.append(("s", i, preds))
        thresholds = [0.5, 0.65, 0.8, 0.95]
        out = ap_over_range(dataset(pred_frames), dataset(gts_frames), thresholds)
        values = [out[t] for t in thresholds]
        for lo, hi in zip(values, values[1:]):
            assert lo >= hi - 1e-12


class TestEvaluateReport:
    def _datasets(self):
        gt = Box(0, 0, 40, 40)
        gts = dataset([("s", 0, [gt]), ("s", 1, [gt]), ("s", 2, [])])
        preds = dataset(
            [
                ("s", 0, [gt.with_score(0.9)]),
                ("s", 1, [jittered(gt, 100.0, 0.8)]),  # miss
                ("s", 2, [gt.with_score(0.7)]),        # FP on a negative frame
            ]
        )
        return preds, gts

    def test_counts_and_rates(self):
        preds, gts = self._datasets()
        report = evaluate(preds, gts, [0.5])
        assert (report.tp, report.fp, report.fn) == (1, 2, 1)
        assert report.precision == pytest.approx(1 / 3)
        assert report.recall == pytest.approx(1 / 2)
        p, r = report.precision, report.recall
        assert report.f1 == pytest.approx(2 * p * r / (p + r))
        assert report.mean_iou == pytest.approx(1.0)

    def test_f1_zero_when_rates_zero(self):
        gts = dataset([("s", 0, [Box(0, 0, 10, 10)])])
        preds = dataset([("s", 0, [])])
        report = evaluate(preds, gts, [0.5])
        assert report.precision == 0.0 and report.recall == 0.0 and report.f1 == 0.0

    def test_rates_recomputable_from_counts(self):
        preds, gts = self._datasets()
        report = evaluate(preds, gts, [0.5, 0.75])
        assert report.precision == pytest.approx(report.tp / (report.tp + report.fp))
        assert report.recall == pytest.approx(report.tp / (report.tp + report.fn))

    def test_subrange_mean(self):
        preds, gts = self._datasets()
        report = evaluate(preds, gts, [0.5, 0.6, 0.7, 0.75, 0.9])
        expected = np.mean(
            [report.ap_per_threshold[t] for t in (0.5, 0.6, 0.7, 0.75)]
        )
        assert report.ap_subrange == pytest.approx(expected)

    def test_area_buckets(self):
        small_gt = Box(0, 0, 20, 20)        # area 400 < 32^2
        large_gt = Box(100, 100, 250, 250)  # area 22500 > 96^2
        gts = dataset([("s", 0, [small_gt, large_gt])])
        preds = dataset([("s", 0, [small_gt.with_score(0.9), large_gt.with_score(0.8)])])
        report = evaluate(preds, gts, [0.5])
        assert report.ap_small == pytest.approx(1.0)
        assert report.ap_large == pytest.approx(1.0)
        assert math.isnan(report.ap_medium)  # no medium objects anywhere

    def test_sequence_mismatch_lists_ids(self):
        gts = dataset([("a", 0, [Box(0, 0, 10, 10)])])
        preds = dataset([("b", 0, [Box(0, 0, 10, 10, 0.5)])])
        with pytest.raises(EvaluationError) as err:
            evaluate(preds, gts, [0.5])
        assert "'a'" in str(err.value) and "'b'" in str(err.value)

    def test_report_lines_format(self):
        preds, gts = self._datasets()
        lines = evaluate(preds, gts, [0.5]).lines()
        assert all("\t" in line for line in lines)
        names = [line.split("\t")[0] for line in lines]
        assert "ap_0.50" in names and "precision" in names and "tp" in names


class TestRecallTrace:
    def _make(self, hits):
        gt = Box(0, 0, 40, 40)
        gts_frames, pred_frames = [], []
        for i, hit in enumerate(hits):
            gts_frames.append(("s", i, [gt]))
            pred_frames.append(("s", i, [gt.with_score(0.9)] if hit else []))
        return dataset(pred_frames), dataset(gts_frames)

    def test_all_hits(self):
        preds, gts = self._make([True] * 4)
        rows = recall_trace(preds, gts)
        assert [r.hits for r in rows] == [(1,)] * 4

    def test_all_misses(self):
        preds, gts = self._make([False] * 3)
        rows = recall_trace(preds, gts)
        assert [r.hits for r in rows] == [(0,)] * 3

    def test_alternating(self):
        preds, gts = self._make([True, False, True, False])
        rows = recall_trace(preds, gts)
        assert [r.n_hit for r in rows] == [1, 0, 1, 0]
        assert [r.frame_index for r in rows] == [0, 1, 2, 3]

    def test_score_threshold_applies(self):
        gt = Box(0, 0, 40, 40)
        gts = dataset([("s", 0, [gt])])
        preds = dataset([("s", 0, [gt.with_score(0.3)])])
        rows = recall_trace(preds, gts, score_thresh=0.5)
        assert rows[0].hits == (0,)


class TestFalsePositiveRate:
    def _frames(self, boxed_frames, total):
        frames = []
        for i in range(total):
            boxes = [Box(0, 0, 10, 10, 0.9)] if i < boxed_frames else []
            frames.append(FrameDetections("neg", i, boxes))
        return frames

    def test_no_boxes(self):
        report = false_positive_rate(self._frames(0, 10))
        assert report.rate == 0.0 and report.n_fp_boxes == 0

    def test_every_frame_flagged(self):
        report = false_positive_rate(self._frames(10, 10))
        assert report.rate == 1.0 and report.n_fp_boxes == 10

    def test_zero_frames_rejected(self):
        with pytest.raises(EvaluationError):
            false_positive_rate([])

    def test_score_threshold(self):
        frames = [FrameDetections("neg", 0, [Box(0, 0, 10, 10, 0.2)])]
        report = false_positive_rate(frames, score_thresh=0.5)
        assert report.rate == 0.0 and report.n_fp_boxes == 0

    def test_published_negative_ratio(self):
        # 11180 flagged boxes spread one-per-frame over 109554 frames.
        report = false_positive_rate(self._frames(11180, 109554))
        assert report.n_frames == 109554
        assert report.n_fp_boxes == 11180
        assert report.rate == pytest.approx(11180 / 109554)
        assert f"{report.rate:.2%}" == "10.21%"
