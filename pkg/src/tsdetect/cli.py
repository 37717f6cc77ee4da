"""Command-line front end.

Subcommands: postprocess (confidence recalibration / NMS variants), eval
(metrics report, recall trace, negative-frame analysis), synth (benchmark
generation), temporal-demo (calibrated convolution + context integrator over
a frame sequence), sweep-delta (neighbor-threshold sweep), and make-weights
(demo weight containers).

Every command is deterministic given its flags and seed. Exit codes: 0 on
success, 1 on IO/data errors, 2 on usage errors. The TSDETECT_THREADS
environment variable caps per-frame parallelism (0 = auto).
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import formats, synth
from .boxes import Box, FrameDetections, SequenceDataset
from .errors import ConfigError
from .evaluate import evaluate, false_positive_rate, recall_trace
from .gtconv import FrameSequenceBuffer, gtconv_forward, layer_from_weights
from .hqim import LstmState, cell_from_weights, convlstm_step, progressive_accumulate, stack_from_weights
from .pac import PacParams, classical_nms, pac_select, soft_nms
from .prng import SplitMix64
from .tensor import Tensor, conv2d


def thread_cap() -> int:
    """Worker count from TSDETECT_THREADS; 0 or unset means auto."""
    raw = os.environ.get("TSDETECT_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"TSDETECT_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError(f"TSDETECT_THREADS must be >= 0, got {value}")
    return value if value > 0 else (os.cpu_count() or 1)


def _map_frames(fn, frames: list) -> list:
    workers = thread_cap()
    if workers <= 1 or len(frames) < 2:
        return [fn(f) for f in frames]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, frames))


def _parse_ap_range(range_str: str) -> list[float]:
    parts = range_str.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) != 3:
        raise ConfigError(f"--ap-range must be lo:step:hi or a single value, got {range_str!r}")
    lo, step, hi = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise ConfigError(f"invalid --ap-range {range_str!r}")
    out = []
    t = lo
    while t <= hi + 1e-9:
        out.append(round(t, 6))
        t += step
    return out


def _parse_deltas(deltas_str: str) -> list[float]:
    values = []
    for tok in deltas_str.split(","):
        tok = tok.strip()
        if tok:
            values.append(float(tok))
    deduped = []
    for v in values:
        if v in deduped:
            print(f"warning: duplicate delta {v:g} ignored", file=sys.stderr)
        else:
            deduped.append(v)
    return deduped


def _read_config_section(path: str | None, section: str, allowed: dict[str, type]) -> dict:
    """Load one module's section from an INI file; explicit flags win later.

    Unknown keys are rejected by name; sections for other modules are left
    alone.
    """
    if not path:
        return {}
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path):
        raise ConfigError(f"config file {path!r} not found")
    if not parser.has_section(section):
        return {}
    out = {}
    for key, raw in parser.items(section):
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} in section [{section}]")
        try:
            out[key] = allowed[key](raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} has malformed value {raw!r}") from None
    return out


def _resolve(args, name: str, config: dict, default):
    """Flag beats config beats built-in default."""
    flag = getattr(args, name)
    if flag is not None:
        return flag
    return config.get(name, default)


_PAC_KEYS = {
    "theta": float,
    "delta": float,
    "nms_iou": float,
    "sigma": float,
    "soft_mode": str,
}
_EVAL_KEYS = {"ap_range": str, "score_thresh": float}


def cmd_postprocess(args) -> int:
    cfg = _read_config_section(args.config, "pac", _PAC_KEYS)
    theta = _resolve(args, "theta", cfg, 0.5)
    delta = _resolve(args, "delta", cfg, 0.8)
    nms_iou = _resolve(args, "nms_iou", cfg, 0.65)
    sigma = _resolve(args, "sigma", cfg, 0.5)
    soft_mode = _resolve(args, "soft_mode", cfg, "linear")

    def process(frame: FrameDetections) -> FrameDetections:
        if args.method == "pac":
            boxes = pac_select(frame.boxes, PacParams(theta, delta, nms_iou))
        elif args.method == "nms":
            boxes = classical_nms(frame.boxes, nms_iou)
        else:
            boxes = soft_nms(frame.boxes, nms_iou, soft_mode, sigma)
        return FrameDetections(frame.sequence_id, frame.frame_index, boxes)

    dataset = formats.read_detections(args.infile)
    processed = SequenceDataset()
    for frame in _map_frames(process, dataset.frames):
        processed.add(frame)
    formats.write_detections(processed, args.out)
    return 0


def _canonical_scores(dataset: SequenceDataset) -> SequenceDataset:
    """Round values through the 6-decimal text form, as a file write/read would."""
    out = SequenceDataset()
    for frame in dataset.frames:
        boxes = [
            Box(
                float(f"{b.x1:.6f}"),
                float(f"{b.y1:.6f}"),
                float(f"{b.x2:.6f}"),
                float(f"{b.y2:.6f}"),
                float(f"{b.score:.6f}"),
            )
            for b in frame.boxes
        ]
        out.add(FrameDetections(frame.sequence_id, frame.frame_index, boxes))
    return out


def cmd_eval(args) -> int:
    if not args.negative and not args.gt:
        raise ConfigError("--gt is required unless --negative is given")
    cfg = _read_config_section(args.config, "eval", _EVAL_KEYS)
    ap_range = _resolve(args, "ap_range", cfg, "0.5:0.05:0.95")
    score_thresh = _resolve(args, "score_thresh", cfg, 0.5)

    preds = formats.read_detections(args.pred)
    if args.negative:
        fp = false_positive_rate(preds.frames, score_thresh)
        for line in fp.lines():
            print(line)
        return 0
    gts = formats.read_ground_truth(args.gt)
    thresholds = _parse_ap_range(ap_range)
    report = evaluate(preds, gts, thresholds, score_thresh=score_thresh)
    for line in report.lines():
        print(line)

    trace_rows = None
    if args.trace:
        trace_rows = recall_trace(preds, gts, score_thresh=score_thresh)
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("# sequence\tframe\tn_gt\tn_hit\tfraction\n")
            for r in trace_rows:
                frac = r.n_hit / r.n_gt if r.n_gt else 0.0
                fh.write(f"{r.sequence_id}\t{r.frame_index}\t{r.n_gt}\t{r.n_hit}\t{frac:.6f}\n")

    if args.plot_dir:
        from . import plotting

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        recall_pts, precision_pts = _pr_points(preds, gts, thresholds[0])
        plotting.save_pr_curve_figure(
            recall_pts,
            precision_pts,
            str(plot_dir / "pr_curve.png"),
            label=f"precision-recall @ IoU {thresholds[0]:g}",
        )
        if trace_rows is None:
            trace_rows = recall_trace(preds, gts, score_thresh=score_thresh)
        plotting.save_recall_trace_figure(trace_rows, str(plot_dir / "recall_trace.png"))
    return 0


def _pr_points(preds, gts, iou_thresh):
    from .evaluate import _paired_frames, match

    pairs = _paired_frames(preds, gts)
    results = [match(p, g, iou_thresh) for p, g in pairs]
    pooled = [m for r in results for m in r.matches]
    n_gt = sum(len(r.gt_covered) for r in results)
    if not pooled or n_gt == 0:
        return np.array([0.0]), np.array([0.0])
    order = sorted(range(len(pooled)), key=lambda i: (-pooled[i].score, i))
    tp = np.array([pooled[i].gt_index is not None for i in order], dtype=float)
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(1.0 - tp)
    return tp_cum / n_gt, tp_cum / (tp_cum + fp_cum)


def _load_synth_config(args) -> synth.SynthConfig:
    values: dict[str, str] = {}
    if args.config:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not parser.read(args.config):
            raise ConfigError(f"config file {args.config!r} not found")
        if parser.has_section("synth"):
            values.update(dict(parser.items("synth")))
    if args.seed is not None:
        values["seed"] = str(args.seed)
    return synth.SynthConfig.from_mapping(values)


def cmd_synth(args) -> int:
    cfg = _load_synth_config(args)
    gt = synth.generate_ground_truth(cfg)
    if args.out_gt:
        formats.write_ground_truth(gt, args.out_gt)
    if args.out_cand:
        cands = synth.corrupt_candidates(gt, cfg)
        formats.write_detections(cands, args.out_cand)
    if args.out_frames:
        out_dir = Path(args.out_frames)
        out_dir.mkdir(parents=True, exist_ok=True)
        for idx, frame in enumerate(synth.render_frames(cfg)):
            formats.write_pgm(frame, str(out_dir / f"frame_{idx:05d}.pgm"))
    return 0


def _demo_frames(args) -> list[Tensor]:
    if args.frames == "synthetic":
        cfg = synth.SynthConfig(
            n_frames=args.n_frames,
            image_w=64,
            image_h=48,
            start_x=18.0,
            start_y=20.0,
            vel_x=2.0,
            vel_y=1.0,
            size_min=12.0,
            size_max=20.0,
            seed=args.seed,
        )
        rasters = synth.render_frames(cfg)
    else:
        frame_dir = Path(args.frames)
        if not frame_dir.is_dir():
            raise ConfigError(f"--frames must be 'synthetic' or a directory, got {args.frames!r}")
        paths = sorted(frame_dir.glob("*.pgm"))
        if not paths:
            raise ConfigError(f"no .pgm rasters found in {args.frames!r}")
        rasters = [formats.read_pgm(str(p)) for p in paths]
    return [Tensor(r[None, :, :] / 255.0) for r in rasters]


def cmd_temporal_demo(args) -> int:
    if args.k < 1:
        raise ConfigError(f"--k must be >= 1, got {args.k}")
    weights = formats.read_weights(args.weights)
    layer = layer_from_weights(weights)
    cell = cell_from_weights(weights)
    stack = stack_from_weights(weights)
    needed = 2 * (args.k - 1)
    if len(stack.reducers) < needed:
        missing = [
            f"hqim.acc.reducer{i}.{part}"
            for i in range(len(stack.reducers), needed)
            for part in ("weight", "bias")
        ]
        raise ConfigError(f"missing weight entries for k={args.k}: {', '.join(missing)}")
    frames = _demo_frames(args)

    calibration_zeroed = all(
        not np.any(weights[name].data)
        for name in ("gtconv.f_w.weight", "gtconv.f_w.bias", "gtconv.f_b.weight", "gtconv.f_b.bias")
    )
    max_dev = 0.0

    buffer = FrameSequenceBuffer(capacity=args.k)
    state: LstmState | None = None
    hidden_window: list[Tensor] = []
    for idx, x in enumerate(frames):
        buffer.push(x)
        feat = gtconv_forward(x, buffer, layer)
        if calibration_zeroed:
            base_out = conv2d(x, layer.base)
            max_dev = max(max_dev, float(np.abs(feat.data - base_out.data).max()))
        if state is None:
            state = LstmState.zeros(cell.hidden_channels, feat.dims[1], feat.dims[2])
        h, state = convlstm_step(feat, state, cell)
        hidden_window.append(h)
        if len(hidden_window) > args.k:
            hidden_window.pop(0)
        fused = progressive_accumulate(hidden_window, stack)
        means = " ".join(f"{v:.6f}" for v in fused.data.mean(axis=(1, 2)))
        maxes = " ".join(f"{v:.6f}" for v in fused.data.max(axis=(1, 2)))
        print(f"frame\t{idx}\tmean\t{means}\tmax\t{maxes}")
    if calibration_zeroed:
        print(f"reduction_invariant\tconfirmed\tmax_abs_dev={max_dev:.2e}")
    return 0


def cmd_sweep_delta(args) -> int:
    deltas = _parse_deltas(args.deltas)
    if not deltas:
        raise ConfigError("--deltas must list at least one value")
    pac_cfg = _read_config_section(args.config, "pac", _PAC_KEYS)
    eval_cfg = _read_config_section(args.config, "eval", _EVAL_KEYS)
    theta = _resolve(args, "theta", pac_cfg, 0.5)
    nms_iou = _resolve(args, "nms_iou", pac_cfg, 0.65)
    ap_range = _resolve(args, "ap_range", eval_cfg, "0.5:0.05:0.95")
    score_thresh = _resolve(args, "score_thresh", eval_cfg, 0.5)

    dataset = formats.read_detections(args.infile)
    gts = formats.read_ground_truth(args.gt)
    thresholds = _parse_ap_range(ap_range)

    sweep_metrics: dict[str, list[float]] = {
        "ap_0.5-0.75": [],
        "ap_0.50": [],
        "ap_0.75": [],
        "ap_medium": [],
        "ap_large": [],
    }
    for delta in deltas:
        params = PacParams(theta, delta, nms_iou)
        processed = SequenceDataset()
        for frame in _map_frames(
            lambda f: FrameDetections(f.sequence_id, f.frame_index, pac_select(f.boxes, params)),
            dataset.frames,
        ):
            processed.add(frame)
        report = evaluate(
            _canonical_scores(processed), gts, thresholds, score_thresh=score_thresh
        )
        print(f"# delta\t{delta:g}")
        for line in report.lines():
            print(line)
        sweep_metrics["ap_0.5-0.75"].append(report.ap_subrange)
        sweep_metrics["ap_0.50"].append(report.ap_per_threshold.get(0.5, float("nan")))
        sweep_metrics["ap_0.75"].append(report.ap_per_threshold.get(0.75, float("nan")))
        sweep_metrics["ap_medium"].append(report.ap_medium)
        sweep_metrics["ap_large"].append(report.ap_large)

    print("# sweep\tdelta\t" + "\t".join(sweep_metrics))
    for i, delta in enumerate(deltas):
        row = "\t".join(f"{sweep_metrics[name][i]:.6f}" for name in sweep_metrics)
        print(f"sweep\t{delta:g}\t{row}")

    if args.plot_dir:
        from . import plotting

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        plotting.save_delta_sweep_figure(
            deltas, sweep_metrics, str(plot_dir / "delta_sweep.png")
        )
    return 0


def _random_conv(rng: SplitMix64, dims: tuple[int, ...], scale: float = 0.2) -> Tensor:
    values = [rng.uniform_in(-scale, scale) for _ in range(int(np.prod(dims)))]
    return Tensor(np.float32(values).astype(np.float64), dims=dims)


def cmd_make_weights(args) -> int:
    c = args.channels
    if c % 2:
        raise ConfigError(f"--channels must be even, got {c}")
    k = args.k
    rng = SplitMix64(args.seed)

    def tensor(dims: tuple[int, ...]) -> Tensor:
        if args.zero:
            return Tensor.zeros(dims)
        return _random_conv(rng, dims)

    weights: dict[str, Tensor] = {}
    weights["gtconv.base.weight"] = tensor((c, 1, 3, 3))
    weights["gtconv.base.bias"] = tensor((c,))
    weights["gtconv.f_agg_gap.weight"] = tensor((1, 1, 1, 1, 1))
    weights["gtconv.f_agg_gap.bias"] = tensor((1,))
    weights["gtconv.f_agg_sap.weight"] = tensor((1, 1, 1, 1, 1))
    weights["gtconv.f_agg_sap.bias"] = tensor((1,))
    weights["gtconv.bn.mean"] = Tensor.zeros((1,))
    weights["gtconv.bn.var"] = Tensor.full((1,), 1.0)
    weights["gtconv.bn.gamma"] = Tensor.full((1,), 0.0 if args.zero else 1.0)
    weights["gtconv.bn.beta"] = Tensor.zeros((1,))
    weights["gtconv.f_w.weight"] = Tensor.zeros((c, 1, 3, 1, 1)) if args.zero_calibration or args.zero else tensor((c, 1, 3, 1, 1))
    weights["gtconv.f_w.bias"] = Tensor.zeros((c,)) if args.zero_calibration or args.zero else tensor((c,))
    weights["gtconv.f_b.weight"] = Tensor.zeros((c, 1, 3, 1, 1)) if args.zero_calibration or args.zero else tensor((c, 1, 3, 1, 1))
    weights["gtconv.f_b.bias"] = Tensor.zeros((c,)) if args.zero_calibration or args.zero else tensor((c,))
    weights["gtconv.sap_attn.weight"] = tensor((1, 1, 1, 1))
    weights["gtconv.sap_attn.bias"] = tensor((1,))
    for gate in ("W_f", "W_i", "W_o", "W_C"):
        weights[f"hqim.cell.{gate}.weight"] = tensor((c, 2 * c, 3, 3))
        weights[f"hqim.cell.{gate}.bias"] = tensor((c,))
    weights["hqim.cell.F.weight"] = tensor((c, c, 3, 3))
    weights["hqim.cell.F.bias"] = tensor((c,))
    for idx in range(2 * (k - 1)):
        weights[f"hqim.acc.reducer{idx}.weight"] = tensor((c // 2, c, 3, 3))
        weights[f"hqim.acc.reducer{idx}.bias"] = tensor((c // 2,))

    formats.write_weights(weights, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsdetect",
        description="Detection post-processing, temporal inference, evaluation, and synthetic benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("postprocess", help="recalibrate and/or suppress candidate boxes")
    p.add_argument("--method", required=True, choices=("pac", "nms", "softnms"))
    p.add_argument("--in", dest="infile", required=True, help="input detection file")
    p.add_argument("--out", required=True, help="output detection file")
    p.add_argument("--config", help="INI file; [pac] section supplies defaults")
    p.add_argument("--theta", type=float, help="neighbor-graph IoU threshold (default 0.5)")
    p.add_argument("--delta", type=float, help="low/high-neighbor IoU threshold (default 0.8)")
    p.add_argument("--nms-iou", type=float, help="final suppression threshold (default 0.65)")
    p.add_argument("--sigma", type=float, help="gaussian soft decay width (default 0.5)")
    p.add_argument("--soft-mode", choices=("linear", "gaussian"))
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="scored detection file")
    p.add_argument("--gt", help="ground-truth file (4-tuples)")
    p.add_argument("--config", help="INI file; [eval] section supplies defaults")
    p.add_argument("--ap-range", help="lo:step:hi IoU thresholds (default 0.5:0.05:0.95)")
    p.add_argument("--score-thresh", type=float, help="operating score threshold (default 0.5)")
    p.add_argument("--negative", action="store_true", help="treat all frames as object-free")
    p.add_argument("--trace", help="write a per-frame recall trace to this path")
    p.add_argument("--plot-dir", help="also render figures into this directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic sequence benchmark")
    p.add_argument("--config", help="INI config with a [synth] section")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out-gt", help="ground-truth output path")
    p.add_argument("--out-cand", help="candidate detections output path")
    p.add_argument("--out-frames", help="directory for grayscale PGM rasters")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("temporal-demo", help="run the temporal modules over a sequence")
    p.add_argument("--weights", required=True, help="weights container")
    p.add_argument("--frames", default="synthetic", help="'synthetic' or a directory of PGM rasters")
    p.add_argument("--k", type=int, default=4, help="context window length")
    p.add_argument("--seed", type=int, default=42, help="seed for synthetic frames")
    p.add_argument("--n-frames", type=int, default=8, help="synthetic frame count")
    p.set_defaults(func=cmd_temporal_demo)

    p = sub.add_parser("sweep-delta", help="neighbor-threshold sweep with one report per value")
    p.add_argument("--in", dest="infile", required=True, help="candidate detection file")
    p.add_argument("--gt", required=True, help="ground-truth file")
    p.add_argument("--deltas", required=True, help="comma-separated delta values")
    p.add_argument("--config", help="INI file; [pac] and [eval] sections supply defaults")
    p.add_argument("--theta", type=float)
    p.add_argument("--nms-iou", type=float)
    p.add_argument("--ap-range", help="lo:step:hi IoU thresholds (default 0.5:0.05:0.95)")
    p.add_argument("--score-thresh", type=float)
    p.add_argument("--plot-dir", help="also render the sweep figure into this directory")
    p.set_defaults(func=cmd_sweep_delta)

    p = sub.add_parser("make-weights", help="write a demo weights container")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--channels", type=int, default=2, help="feature channels (even)")
    p.add_argument("--k", type=int, default=4, help="context window the reducers support")
    p.add_argument("--zero", action="store_true", help="all parameters zero")
    p.add_argument(
        "--zero-calibration", action="store_true", help="zero only the factor generators"
    )
    p.set_defaults(func=cmd_make_weights)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
