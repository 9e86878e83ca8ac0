"""Command-line entry points for the pipeline stages and the service.

Every subcommand is a thin wrapper over the library: identical inputs
produce identical artifacts.  Options may come from a JSON config file
(--config); explicit flags win over config values.
"""

from __future__ import annotations

import argparse
import json
import math
import shlex
import sys
from pathlib import Path

from .annotations import (
    AnnotatedObject,
    Bfov,
    FrameAnnotations,
    bfov_to_erabox,
    parse_dataset,
    write_dataset,
)
from .detectors import (
    ExternalProcessDetector,
    OracleDetector,
    StubDetector,
    WindowDetection,
)
from .evaluation import EvalConfig, evaluate, report_csv, report_table
from .fusion import FusionParams, fuse
from .geometry import ProjectionParams, SphereCoord, WindowSpec, default_window_plan
from .imaging import read_image, render_window, write_png
from .pipeline import (
    FrameDetections,
    RealignParams,
    parse_detections,
    run_frame,
    write_detections,
)


def _deg(rad: float) -> float:
    return round(math.degrees(rad), 6)


def plan_to_json(plan: list[WindowSpec]) -> list[dict]:
    return [
        {
            "lat": _deg(w.center.lat),
            "lon": _deg(w.center.lon),
            "fov_h": _deg(w.params.fov_h),
            "fov_w": _deg(w.params.fov_w),
            "d": w.params.d,
            "out_w": w.out_w,
            "out_h": w.out_h,
        }
        for w in plan
    ]


def plan_from_json(windows: list[dict]) -> list[WindowSpec]:
    plan = []
    for w in windows:
        plan.append(
            WindowSpec(
                center=SphereCoord(
                    math.radians(w["lat"]), math.radians(w["lon"])
                ),
                params=ProjectionParams(
                    d=float(w.get("d", 1.0)),
                    fov_h=math.radians(w["fov_h"]),
                    fov_w=math.radians(w["fov_w"]),
                ),
                out_w=int(w.get("out_w", 864)),
                out_h=int(w.get("out_h", 864)),
            )
        )
    return plan


def load_plan(path: str | None, out_w: int, out_h: int) -> list[WindowSpec]:
    if path is None:
        return default_window_plan(out_w, out_h)
    raw = json.loads(Path(path).read_text())
    return plan_from_json(raw["windows"])


def _input_frames(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(
            p for p in path.iterdir() if p.suffix.lower() in (".png", ".erai")
        )
    return [path]


def _make_detector_factory(spec: str, plan_len: int):
    """Detector factory from a spec string: stub:<file>, oracle:<file>, exec:<cmd>.

    Returns a callable frame_id -> DetectorPort, plus a cleanup callable.
    """
    kind, _, arg = spec.partition(":")
    if kind == "stub":
        fixtures: dict = {}
        if arg:
            fixtures = json.loads(Path(arg).read_text()).get("frames", {})

        def stub_factory(frame_id: str):
            per_window = fixtures.get(frame_id, {})
            by_window = {
                int(idx): [WindowDetection(**d) for d in dets]
                for idx, dets in per_window.items()
            }
            return StubDetector(by_window)

        return stub_factory, lambda: None
    if kind == "oracle":
        if not arg:
            raise SystemExit("oracle detector needs a dataset: oracle:<path>")
        frames = {f.frame_id: f for f in parse_dataset(arg)}

        def oracle_factory(frame_id: str):
            if frame_id not in frames:
                raise SystemExit(f"oracle dataset has no frame {frame_id!r}")
            return OracleDetector(frames[frame_id])

        return oracle_factory, lambda: None
    if kind == "exec":
        if not arg:
            raise SystemExit("external detector needs a command: exec:<cmd>")
        detector = ExternalProcessDetector(shlex.split(arg))
        return (lambda frame_id: detector), detector.close
    raise SystemExit(f"unknown detector spec {spec!r}")


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


# ---------------------------------------------------------------------------
# subcommands

def cmd_project(args) -> int:
    plan = load_plan(args.plan, args.out_w, args.out_h)
    era = read_image(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = plan_to_json(plan)
    for i, spec in enumerate(plan):
        window = render_window(era, spec)
        name = f"window_{i:02d}.png"
        write_png(out_dir / name, window.raster)
        entries[i]["file"] = name
    manifest = {"source": Path(args.input).name, "windows": entries}
    (out_dir / "plan.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(plan)} windows to {out_dir}")
    return 0


def cmd_detect(args) -> int:
    plan = load_plan(args.plan, args.out_w, args.out_h)
    factory, cleanup = _make_detector_factory(args.detector, len(plan))
    params = RealignParams(sigma=args.sigma)
    frames = []
    try:
        for path in _input_frames(Path(args.input)):
            era = read_image(path)
            detector = factory(path.stem)
            dets = run_frame(era, plan, detector, params)
            frames.append(FrameDetections(path.stem, era.width, era.height, dets))
            print(f"{path.stem}: {len(dets)} detections", file=sys.stderr)
    finally:
        cleanup()
    write_detections(args.out, frames)
    return 0


def _fusion_params(args, sigma1: float | None = None, sigma2: float | None = None):
    return FusionParams(
        nms_iou=args.nms_iou,
        sigma1=sigma1 if sigma1 is not None else _parse_float_list(args.sigma1)[0],
        sigma2=sigma2 if sigma2 is not None else _parse_float_list(args.sigma2)[0],
        score_floor=args.score_floor,
    )


def cmd_fuse(args) -> int:
    frames = parse_detections(args.input)
    params = _fusion_params(args)
    out = [
        FrameDetections(
            f.frame_id, f.width, f.height, fuse(f.detections, params, f.width, args.mode)
        )
        for f in frames
    ]
    write_detections(args.out, out)
    total_in = sum(len(f.detections) for f in frames)
    total_out = sum(len(f.detections) for f in out)
    print(f"fused {total_in} -> {total_out} detections ({args.mode})", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    dataset = parse_dataset(args.dataset)
    detections = parse_detections(args.detections)
    cfg = EvalConfig(iou_thresholds=tuple(_parse_float_list(args.iou_thr)))
    sigma1s = _parse_float_list(args.sigma1)
    sigma2s = _parse_float_list(args.sigma2)

    if len(sigma1s) > 1 or len(sigma2s) > 1:
        _print_sweep_grid(dataset, detections, cfg, sigma1s, sigma2s, args)
        return 0

    reports = evaluate(dataset, detections, cfg)
    print(report_table(reports), end="")
    if args.out:
        Path(args.out).write_text(report_csv(reports))
    return 0


def _print_sweep_grid(dataset, detections, cfg, sigma1s, sigma2s, args) -> None:
    """Per-threshold grid of per-class AP over the penalty parameter sweep."""
    labels = sorted({o.label for f in dataset for o in f.objects})

    def run(params: FusionParams, mode: str):
        fused = [
            FrameDetections(
                f.frame_id,
                f.width,
                f.height,
                fuse(f.detections, params, f.width, mode),
            )
            for f in detections
        ]
        return evaluate(dataset, fused, cfg)

    rows: list[tuple[str, list]] = []
    for s1 in sigma1s:
        for s2 in sigma2s:
            rows.append(
                (f"sigma1={s1:g} sigma2={s2:g}", run(_fusion_params(args, s1, s2), "soft"))
            )
    rows.append(("NMS", run(_fusion_params(args, sigma1s[0], sigma2s[0]), "nms")))

    for t, thr in enumerate(cfg.iou_thresholds):
        header = [f"AP @ {thr:g}"] + labels + ["mAP"]
        table = [header]
        for name, reports in rows:
            report = reports[t]
            row = [name]
            row += [f"{report.per_class[label].ap * 100:.2f}" for label in labels]
            row.append(f"{report.map * 100:.2f}")
            table.append(row)
        widths = [max(len(r[i]) for r in table) for i in range(len(header))]
        for row in table:
            print("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                            for i, (c, w) in enumerate(zip(row, widths))))
        print()


def cmd_convert(args) -> int:
    frames = parse_dataset(args.input)
    out = []
    for frame in frames:
        objects = []
        for entry in frame.objects:
            if isinstance(entry.shape, Bfov):
                box = bfov_to_erabox(entry.shape, frame.width, frame.height)
                objects.append(AnnotatedObject(shape=box, source=entry.source))
            else:
                objects.append(entry)
        out.append(
            FrameAnnotations(frame.frame_id, frame.width, frame.height, objects)
        )
    write_dataset(args.out, out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.root, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing

def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse argv twice so JSON config supplies defaults and flags win."""
    args, _ = parser.parse_known_args(argv)
    config = getattr(args, "config", None)
    if config:
        sub = parser.subcommands[args.command]
        values = json.loads(Path(config).read_text())
        valid = {a.dest for a in sub._actions}
        unknown = set(values) - valid
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**values)
    return parser.parse_args(argv)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panodet",
        description="Multi-window object detection toolkit for equirectangular panoramas",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    p = sub.add_parser("project", help="render the window plan out of a panorama")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plan", help="window plan JSON; default: four stereographic windows")
    p.add_argument("--out-w", type=int, default=864)
    p.add_argument("--out-h", type=int, default=864)
    _add_common(p)
    p.set_defaults(func=cmd_project)
    parser.subcommands["project"] = p

    p = sub.add_parser("detect", help="run the detection pipeline over frames")
    p.add_argument("--input", required=True, help="panorama file or directory")
    p.add_argument("--detector", required=True, help="stub:<file> | oracle:<file> | exec:<cmd>")
    p.add_argument("--out", required=True)
    p.add_argument("--plan")
    p.add_argument("--out-w", type=int, default=864)
    p.add_argument("--out-h", type=int, default=864)
    p.add_argument("--sigma", type=float, default=0.6, help="re-alignment penalty")
    _add_common(p)
    p.set_defaults(func=cmd_detect)
    parser.subcommands["detect"] = p

    p = sub.add_parser("fuse", help="cross-window fusion of raw detections")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("soft", "nms"), default="soft")
    p.add_argument("--nms-iou", type=float, default=0.3)
    p.add_argument("--sigma1", default="0.3")
    p.add_argument("--sigma2", default="0.6")
    p.add_argument("--score-floor", type=float, default=0.001)
    _add_common(p)
    p.set_defaults(func=cmd_fuse)
    parser.subcommands["fuse"] = p

    p = sub.add_parser("eval", help="AP/mAP against ground truth; sweeps print a grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--iou-thr", default="0.5,0.4")
    p.add_argument("--sigma1", default="0.3", help="comma list sweeps the fusion penalty")
    p.add_argument("--sigma2", default="0.6", help="comma list sweeps the fusion penalty")
    p.add_argument("--nms-iou", type=float, default=0.3)
    p.add_argument("--score-floor", type=float, default=0.001)
    p.add_argument("--out", help="CSV report path")
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    parser.subcommands["eval"] = p

    p = sub.add_parser("convert", help="convert BFOV annotations to panorama boxes")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_convert)
    parser.subcommands["convert"] = p

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--root", required=True, help="dataset root directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--frontend", help="directory of built UI assets to serve at /")
    _add_common(p)
    p.set_defaults(func=cmd_serve)
    parser.subcommands["serve"] = p

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"panodet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
