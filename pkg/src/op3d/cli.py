"""Command-line entry point: gen-bench | project | classify | eval | sweep.

Exit codes: 0 success, 1 usage error, 2 runtime error. Flag values override a
--config JSON file, which overrides built-in defaults; the effective
configuration is echoed into every log header. All randomness funnels
through --seed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys

import numpy as np

from . import evalkit, iarm, match, posegen
from .core3d import normalize_to_unit
from .errors import Op3DError
from .io import load_geometry
from .match import ExternalClient, MatcherHandle, TemplateBank
from .project import (
    CameraConfig,
    ProjectionStyle,
    ViewAngles,
    VoxelParams,
    fixed_view_sets,
    project as project_image,
)

MATCHER_ENV = "OP3D_MATCHER"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="op3d", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-bench", parents=[], help="rotate a dataset into an open-pose benchmark")
    g.add_argument("--source", required=True)
    g.add_argument("--dataset", required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out", required=True)
    g.add_argument("--config")

    pr = sub.add_parser("project", help="project one sample to a grayscale PNG")
    pr.add_argument("--input", required=True)
    pr.add_argument("--style", required=True, choices=["depth", "render", "edge"])
    pr.add_argument("--phi1", type=float, default=90.0)
    pr.add_argument("--phi2", type=float, default=0.0)
    pr.add_argument("--rp", type=float, default=2.2)
    pr.add_argument("--fov", type=float, default=60.0)
    pr.add_argument("--size", type=int, default=224)
    pr.add_argument("--grid", type=int, default=128)
    pr.add_argument("--out", required=True)
    pr.add_argument("--config")

    c = sub.add_parser("classify", help="classify one open-pose sample")
    c.add_argument("--input", required=True)
    c.add_argument("--classes", required=True, help="text file, one class name per line")
    c.add_argument("--matcher", default="ref", choices=["ref", "extern"])
    c.add_argument("--bank", help="template bank directory (reference matcher)")
    c.add_argument("--endpoint", help="worker launch command or tcp://host:port "
                                      f"(default from ${MATCHER_ENV})")
    c.add_argument("--mode", default="diffusion", choices=["diffusion", "similarity"])
    c.add_argument("--views", default="iarm", choices=["iarm", "cube", "circular", "single"])
    c.add_argument("--styles", default="depth", help="comma list of depth,render,edge")
    c.add_argument("--R", type=int, default=10)
    c.add_argument("--etas", default=",".join(str(e) for e in iarm.DEFAULT_ETAS))
    c.add_argument("--fd", type=float, default=5.0)
    c.add_argument("--n-views", type=int, default=12)
    c.add_argument("--circular-phi1", type=float, default=30.0)
    c.add_argument("--trials", type=int, default=30)
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--rp", type=float, default=2.2)
    c.add_argument("--size", type=int, default=224)
    c.add_argument("--grid", type=int, default=128)
    c.add_argument("--trace", help="write per-(class, iteration) JSONL here")
    c.add_argument("--config")

    e = sub.add_parser("eval", help="aggregate a per-sample log into a report")
    e.add_argument("--log", required=True)
    e.add_argument("--split", help="restrict classes to a named split's unseen set")
    e.add_argument("--report", help="write a markdown report here (default stdout)")
    e.add_argument("--config")

    s = sub.add_parser("sweep", help="grid of runs over a benchmark directory")
    s.add_argument("--dataset", required=True, help="open-pose dir containing manifest.jsonl")
    s.add_argument("--bank", required=True)
    s.add_argument("--grid-spec", required=True, help="JSON file mapping parameter -> list of values")
    s.add_argument("--out", help="append one JSONL row per finished cell")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--config")
    return p


def _apply_config_file(parser: _Parser, args: argparse.Namespace, argv) -> argparse.Namespace:
    """Config-file values fill in flags the user did not pass explicitly."""
    if not getattr(args, "config", None):
        return args
    with open(args.config) as f:
        overrides = json.load(f)
    passed = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and attr not in passed:
            setattr(args, attr, value)
    return args


def _effective_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "command"}


def _parse_styles(text: str) -> list[ProjectionStyle]:
    return [ProjectionStyle.parse(s) for s in text.split(",") if s.strip()]


def _make_handle(args) -> MatcherHandle:
    if args.matcher == "ref":
        if not args.bank:
            raise Op3DError("--bank is required with the reference matcher")
        return MatcherHandle.reference(TemplateBank.load(args.bank), trials=args.trials)
    endpoint = args.endpoint or os.environ.get(MATCHER_ENV)
    if not endpoint:
        raise Op3DError(f"external matcher needs --endpoint or ${MATCHER_ENV}")
    client = ExternalClient(endpoint)
    return MatcherHandle.external(client, mode=args.mode, trials=args.trials)


def _cmd_gen_bench(args) -> int:
    manifest = posegen.generate_openpose_dataset(args.source, args.dataset, args.seed, args.out)
    print(json.dumps({
        "dataset": manifest.dataset_name,
        "seed": manifest.seed,
        "entries": len(manifest),
        "manifest": os.path.join(args.out, posegen.MANIFEST_NAME),
    }))
    return 0


def _cmd_project(args) -> int:
    geom = normalize_to_unit(load_geometry(args.input))
    cam = CameraConfig(r_p=args.rp, fov_deg=args.fov, image_px=args.size)
    vox = VoxelParams(grid=args.grid)
    img = project_image(geom, ViewAngles(args.phi1, args.phi2),
                        ProjectionStyle.parse(args.style), cam, vox)
    img.save_png(args.out)
    print(json.dumps({"out": args.out, "size": img.width}))
    return 0


def _cmd_classify(args) -> int:
    with open(args.classes) as f:
        classes = [line.strip() for line in f if line.strip()]
    geom = normalize_to_unit(load_geometry(args.input))
    handle = _make_handle(args)
    styles = _parse_styles(args.styles)
    cam = CameraConfig(r_p=args.rp, image_px=args.size)
    vox = VoxelParams(grid=args.grid)
    etas = tuple(float(v) for v in str(args.etas).split(","))
    cfg = iarm.RefineConfig(R=args.R, etas=etas, fd_step=args.fd)
    scorer = match.make_scorer(handle, styles, cam, vox)

    try:
        if args.views == "iarm":
            pred, traces = iarm.classify_openpose(
                geom, classes, scorer, cfg, styles, cam, vox, rng_seed=args.seed
            )
            scores = pred.scores
            probabilities = pred.probabilities
            predicted = pred.predicted_class
            angles = {c: pred.angles[c].as_tuple() for c in classes}
            if args.trace:
                with open(args.trace, "w") as f:
                    f.write(json.dumps({"kind": "header", "config": _effective_config(args)},
                                       sort_keys=True) + "\n")
                    for c in classes:
                        for step in traces[c].steps:
                            f.write(json.dumps({
                                "class": c, "r": step.r,
                                "phi": step.phi.as_tuple(), "score": step.score,
                            }, sort_keys=True) + "\n")
        else:
            views = fixed_view_sets(args.views, n_views=args.n_views,
                                    phi1=args.circular_phi1)
            scores = {c: float(np.mean([scorer(geom, phi, c, args.seed) for phi in views]))
                      for c in classes}
            probabilities = match.class_probabilities(scores)
            predicted = max(classes, key=lambda c: (probabilities[c], -classes.index(c)))
            angles = {c: None for c in classes}
        print(json.dumps({
            "predicted_class": predicted,
            "scores": scores,
            "probabilities": probabilities,
            "angles": angles,
        }, sort_keys=True))
        return 0
    finally:
        if handle.client is not None:
            handle.client.close()


def _cmd_eval(args) -> int:
    _header, records = evalkit.load_log(args.log)
    classes = None
    if args.split:
        classes = list(posegen.load_split(args.split).unseen_classes)
    report = evalkit.metrics_from_log(records, classes)
    text = report.format_markdown(title=args.split or "results")
    if args.report:
        with open(args.report, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    return 0


_SWEEP_KEYS = ("styles", "prompts", "R", "etas", "fd", "views")


def _cmd_sweep(args) -> int:
    with open(args.grid_spec) as f:
        grid = json.load(f)
    unknown = set(grid) - set(_SWEEP_KEYS)
    if unknown:
        raise Op3DError(f"unknown sweep dimensions {sorted(unknown)}; allowed {_SWEEP_KEYS}")
    manifest = posegen.PoseManifest.load(os.path.join(args.dataset, posegen.MANIFEST_NAME))
    handle = MatcherHandle.reference(TemplateBank.load(args.bank))
    cam = CameraConfig(image_px=args.size)
    vox = VoxelParams(grid=args.grid)

    keys = [k for k in _SWEEP_KEYS if k in grid]
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    seen = set()
    rows = []
    out_f = open(args.out, "a") if args.out else None
    try:
        for cell in cells:
            cell_key = json.dumps(cell, sort_keys=True)
            if cell_key in seen:
                print(f"warning: duplicate cell skipped: {cell_key}", file=sys.stderr)
                continue
            seen.add(cell_key)
            views = cell.get("views", "iarm")
            styles = _parse_styles(cell["styles"]) if "styles" in cell else [ProjectionStyle.DEPTH]
            R = int(cell.get("R", 10))
            if "etas" in cell:
                etas = tuple(float(v) for v in str(cell["etas"]).split(","))
            elif R == len(iarm.DEFAULT_ETAS):
                etas = iarm.DEFAULT_ETAS
            else:
                etas = tuple(iarm.RefineConfig.with_steps(R).etas)
            cfg = iarm.RefineConfig(R=R, etas=etas, fd_step=float(cell.get("fd", 5.0)))
            prompts = None
            if "prompts" in cell:
                prompts = {s: cell["prompts"] for s in styles}
            scorer = match.make_scorer(handle, styles, cam, vox, prompts=prompts)
            report, _records = evalkit.run_baseline(
                args.dataset, manifest, views, scorer, styles, cfg,
                cam=cam, vox=vox, rng_seed=args.seed, jobs=args.jobs,
            )
            row = {"cell": cell, "acc": round(report.acc, 1), "macc": round(report.macc, 1)}
            rows.append(row)
            if out_f:
                out_f.write(json.dumps(row, sort_keys=True) + "\n")
                out_f.flush()
    finally:
        if out_f:
            out_f.close()

    print(json.dumps({"header": {"config": _effective_config(args)}, "rows": rows},
                     sort_keys=True, indent=1))
    return 0


_COMMANDS = {
    "gen-bench": _cmd_gen_bench,
    "project": _cmd_project,
    "classify": _cmd_classify,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(parser, args, argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except Op3DError as e:
        print(f"op3d: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError) as e:
        print(f"op3d: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
