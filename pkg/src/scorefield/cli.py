"""Command-line entry points.

Guidance comes from one of three sources: ``--targets file.npz`` (arrays
``images`` (B,H,W,3) float in [0,1], optional ``bins`` (B,) int and
``n_bins``), ``--remote host:port`` for a denoiser served over the wire
protocol, or ``--demo-scene`` which synthesizes targets from the built-in
reference scene.
"""

import argparse
import json
import os
import sys

import numpy as np


def _add_guidance_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--targets", help="npz with target images per azimuth bin")
    src.add_argument("--remote", help="host:port of a guidance server")
    src.add_argument("--demo-scene", action="store_true", help="use the built-in reference scene")
    p.add_argument("--prior-width", type=float, default=0.0, help="oracle prior stddev s")


def _build_prior(args, resolution):
    from .guidance import MultiviewOraclePrior, DiffusionSchedule
    from .scenes import fixed_rig, rig_targets

    if args.remote:
        from .guidance import ConditionSet
        from .remote import ConditionTable, RemoteGuidanceClient

        host, _, port = args.remote.rpartition(":")
        table = ConditionTable([ConditionSet(text=args.text)] if args.text else [])
        return RemoteGuidanceClient((host, int(port)), table, DiffusionSchedule())
    if args.targets:
        data = np.load(args.targets)
        images = data["images"]
        if "bins" in data:
            n_bins = int(data["n_bins"][0]) if "n_bins" in data else images.shape[0]
            targets = {int(b): images[i] for i, b in enumerate(data["bins"])}
            return MultiviewOraclePrior(targets, n_bins=n_bins, s=args.prior_width)
        return MultiviewOraclePrior(images, s=args.prior_width)
    # demo scene fallback
    cams = fixed_rig(n=8, width=resolution, height=resolution)
    return MultiviewOraclePrior(rig_targets(cams), s=args.prior_width)


def _load_config(args):
    from .config import RunConfig

    if args.config:
        with open(args.config) as fh:
            return RunConfig.from_json(fh.read())
    cfg = RunConfig.desk() if args.preset == "desk" else RunConfig.paper() if args.preset == "paper" else RunConfig.tiny()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _common(p):
    p.add_argument("--config", help="JSON config file (see RunConfig)")
    p.add_argument("--preset", choices=["paper", "desk", "tiny"], default="desk")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workdir", default="runs/default")
    p.add_argument("--text", default=None, help="text condition token")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="scorefield", description="coarse-to-fine score-distilled 3D synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coarse", help="stage (a): distill a neural field")
    _common(p)
    _add_guidance_args(p)

    p = sub.add_parser("refine", help="stage (b): convert to a surface and refine")
    _common(p)
    _add_guidance_args(p)
    p.add_argument("--from", dest="src", required=True, help="coarse checkpoint")

    p = sub.add_parser("edit", help="re-distill a copy of a trained model against new guidance")
    _common(p)
    _add_guidance_args(p)
    p.add_argument("--from", dest="src", required=True, help="source checkpoint")

    p = sub.add_parser("export", help="write OBJ/MTL/PNG from a refined checkpoint")
    p.add_argument("--from", dest="src", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--atlas", type=int, default=1024)

    p = sub.add_parser("render", help="turntable renders from a checkpoint")
    p.add_argument("--from", dest="src", required=True)
    p.add_argument("--out", required=True, help="output directory for PNG frames")
    p.add_argument("--frames", type=int, default=24)
    p.add_argument("--resolution", type=int, default=128)

    args = parser.parse_args(argv)
    return _dispatch(args)


def _dispatch(args):
    from . import pipeline
    from .guidance import ConditionSet

    cond = ConditionSet(text=args.text) if getattr(args, "text", None) else None

    if args.command == "coarse":
        cfg = _load_config(args)
        state = pipeline.build_state(cfg)
        prior = _build_prior(args, cfg.coarse_res)
        rows = pipeline.run_coarse(state, prior, workdir=args.workdir, cond=cond)
        out = os.path.join(args.workdir, "coarse.ckpt")
        pipeline.save_run(out, state)
        print(json.dumps({"checkpoint": out, "iterations": state.iteration, "log_rows": len(rows)}))
        return 0

    if args.command == "refine":
        state = pipeline.load_run(args.src)
        prior = _build_prior(args, state.config.latent_res)
        if state.tetgrid is None:
            pipeline.init_fine_from_coarse(state)
        rows = pipeline.run_fine(state, prior, workdir=args.workdir, cond=cond)
        out = os.path.join(args.workdir, "fine.ckpt")
        pipeline.save_run(out, state)
        print(json.dumps({"checkpoint": out, "iterations": state.iteration, "log_rows": len(rows)}))
        return 0

    if args.command == "edit":
        base = pipeline.load_run(args.src)
        state = pipeline.edit_from_coarse(base)
        prior = _build_prior(args, base.config.edit_latent_res)
        rows = pipeline.run_edit(state, prior, workdir=args.workdir, cond=cond)
        out = os.path.join(args.workdir, "edit.ckpt")
        pipeline.save_run(out, state)
        print(json.dumps({"checkpoint": out, "iterations": state.iteration, "log_rows": len(rows)}))
        return 0

    if args.command == "export":
        from .meshio import export_scene

        state = pipeline.load_run(args.src)
        if state.tetgrid is None:
            print("checkpoint has no surface; run refine first", file=sys.stderr)
            return 2
        mesh = state.tetgrid.extract()
        paths = export_scene(args.out, mesh, state.field, atlas_res=args.atlas)
        print(json.dumps(paths))
        return 0

    if args.command == "render":
        from .meshio import save_png

        state = pipeline.load_run(args.src)
        frames = pipeline.turntable(state, n_frames=args.frames, width=args.resolution, height=args.resolution)
        os.makedirs(args.out, exist_ok=True)
        paths = []
        for i, frame in enumerate(frames):
            path = os.path.join(args.out, f"frame_{i:03d}.png")
            save_png(path, np.clip(frame, 0.0, 1.0))
            paths.append(path)
        print(json.dumps({"frames": paths}))
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
