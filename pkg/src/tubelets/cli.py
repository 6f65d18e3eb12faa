"""Command-line entry point: one subcommand per pipeline stage plus ``run``."""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import pipeline
from .config import ConfigError, PipelineConfig, dump_config, load_config
from .evaluation import evaluate, load_ground_truth, write_report
from .imotion import export_maps
from .motion import MotionParams
from .refine import IMOTION, VID
from .segmentation import export_labels, segment
from .trajectories import load_trajectories, save_trajectories
from .tubelet import SCHEMA_VERSION, SchemaError, check_schema, load_proposals, save_proposals
from .video_io import load_video, render_overlay

log = logging.getLogger("tubelets")

PALETTE = [(255, 64, 64), (64, 255, 64), (64, 128, 255), (255, 255, 64), (255, 64, 255), (64, 255, 255)]


def _config(ctx: click.Context, mode: str | None = None, seed: int | None = None) -> PipelineConfig:
    cfg: PipelineConfig = ctx.obj["config"]
    refine = {}
    if mode is not None:
        refine["mode"] = mode
    if seed is not None:
        refine["seed"] = seed
    return cfg.replace(refine=refine) if refine else cfg


def _motions_doc(motions: list[MotionParams]) -> dict:
    return {"schema_version": SCHEMA_VERSION,
            "pairs": [{"t": t, "model": m.model, "a": [float(v) for v in m.a]} for t, m in enumerate(motions)]}


def _load_motions(path: Path) -> list[MotionParams]:
    doc = json.loads(path.read_text())
    check_schema(doc)
    return [MotionParams(p["model"], np.asarray(p["a"])) for p in doc["pairs"]]


def _write_json(doc: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


mode_option = click.option("--mode", type=click.Choice(["trimmed", "untrimmed"]), default=None,
                           help="Refinement mode (overrides [refine].mode).")
seed_option = click.option("--seed", type=int, default=None, help="Clustering seed (overrides [refine].seed).")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="TOML config file.")
@click.option("--threads", type=int, default=None, help="Worker cap (overrides [run].threads).")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx: click.Context, config_path, threads, verbose):
    """Unsupervised spatiotemporal action proposals."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(config_path)
        if threads is not None:
            cfg = cfg.replace(run={"threads": threads})
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    ctx.ensure_object(dict)
    ctx.obj["config"] = cfg


@main.command("config")
@click.pass_context
def cmd_config(ctx):
    """Print the effective configuration as TOML."""
    click.echo(dump_config(ctx.obj["config"]), nl=False)


@main.command("imotion")
@click.option("--video", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.pass_context
def cmd_imotion(ctx, video, out):
    """Dominant motion per frame pair and iMotion maps (raw and closed)."""
    cfg = _config(ctx)
    v = load_video(video)
    est = pipeline.dominant_motions(v, cfg)
    raw, closed = pipeline.imotion_maps(est, cfg)
    out = Path(out)
    export_maps(raw, out / "raw")
    export_maps(closed, out / "closed")
    _write_json(_motions_doc([e.params for e in est]), out / "motion.json")
    click.echo(f"{v.frame_count} iMotion maps written to {out}")


@main.command("segment")
@click.option("--video", required=True, type=click.Path(exists=True), help="Video, or an iMotion map directory.")
@click.option("--source", type=click.Choice([VID, IMOTION]), default=VID,
              help="Which segmentation settings to use.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.pass_context
def cmd_segment(ctx, video, source, out):
    """Graph-based super-voxel segmentation into per-frame label rasters."""
    cfg = _config(ctx)
    v = load_video(video)
    lab = segment(v, cfg.segment_vid if source == VID else cfg.segment_imotion)
    export_labels(lab, out)
    click.echo(f"{lab.label_count} super-voxels written to {out}")


@main.command("track")
@click.option("--video", required=True, type=click.Path(exists=True))
@click.option("--motion", "motion_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="motion.json from `imotion`, used to ignore camera motion.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def cmd_track(ctx, video, motion_path, out):
    """Point trajectories as JSON lines."""
    cfg = _config(ctx)
    v = load_video(video)
    motions = _load_motions(Path(motion_path)) if motion_path else None
    trajs = pipeline.trajectories(v, cfg, motions)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_trajectories(trajs, out)
    click.echo(f"{len(trajs)} trajectories written to {out}")


@main.command("propose")
@click.option("--video", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--trajectories", "traj_out", type=click.Path(dir_okay=False), default=None,
              help="Also track points and write them here.")
@click.pass_context
def cmd_propose(ctx, video, out, traj_out):
    """Unrefined proposals from both segmentations and all grouping functions."""
    cfg = _config(ctx)
    v = load_video(video)
    props = pipeline.propose(v, cfg)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_proposals(out, props.all(), v.name, stage="propose", frame_size=list(props.frame_size),
                   frame_count=v.frame_count)
    if traj_out:
        save_trajectories(pipeline.trajectories(v, cfg, props.motions), traj_out)
    click.echo(f"{len(props.pools[VID])} vid + {len(props.pools[IMOTION])} iMotion proposals written to {out}")


@main.command("refine")
@click.option("--proposals", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--trajectories", "traj_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@mode_option
@seed_option
@click.pass_context
def cmd_refine(ctx, proposals, traj_path, out, mode, seed):
    """Motion and overlap pruning, then temporal (untrimmed) and spatial refinement."""
    cfg = _config(ctx, mode, seed)
    tubes, meta = _read_proposals(proposals)
    frame_size = tuple(meta["frame_size"]) if "frame_size" in meta else None
    pools = {VID: [t for t in tubes if t.source == VID], IMOTION: [t for t in tubes if t.source == IMOTION]}
    final = pipeline.refine(pools, load_trajectories(traj_path), frame_size, cfg)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    extra = {k: meta[k] for k in ("frame_size", "frame_count") if k in meta}
    save_proposals(out, final, meta.get("video", ""), stage="refine", mode=cfg.refine.mode, **extra)
    click.echo(f"{len(final)} refined proposals written to {out}")


@main.command("run")
@click.option("--video", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@mode_option
@seed_option
@click.pass_context
def cmd_run(ctx, video, out, mode, seed):
    """propose + track + refine; writes proposals.json, trajectories.jsonl and refined.json."""
    cfg = _config(ctx, mode, seed)
    v = load_video(video)
    final, props, trajs = pipeline.run(v, cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"frame_size": list(props.frame_size), "frame_count": v.frame_count}
    save_proposals(out / "proposals.json", props.all(), v.name, stage="propose", **meta)
    save_trajectories(trajs, out / "trajectories.jsonl")
    save_proposals(out / "refined.json", final, v.name, stage="refine", mode=cfg.refine.mode, **meta)
    click.echo(f"{len(final)} refined proposals written to {out / 'refined.json'}")


@main.command("eval")
@click.option("--proposals", required=True, multiple=True, type=click.Path(exists=True, dir_okay=False),
              help="Proposal JSON; repeat for several videos.")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--sigma", type=float, default=None, help="Recall threshold (overrides [eval].sigma).")
@click.pass_context
def cmd_eval(ctx, proposals, gt_path, out, sigma):
    """ABO, MABO and recall against ground truth."""
    cfg = _config(ctx)
    sigma = cfg.eval.sigma if sigma is None else sigma
    pool = []
    for p in proposals:
        pool.extend(_read_proposals(p)[0])
    gts = load_ground_truth(gt_path)
    if not gts:
        raise click.UsageError("ground truth file has no instances")
    report = evaluate(gts, pool, sigma)
    write_report(report, out)
    click.echo(f"MABO {report.mabo:.4f}  recall@{sigma:g} {report.mean_recall:.4f}")


@main.command("overlay")
@click.option("--video", required=True, type=click.Path(exists=True))
@click.option("--proposals", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--select", "selection", default=None,
              help="Comma-separated proposal indices (default: the first 5).")
@click.pass_context
def cmd_overlay(ctx, video, proposals, out, selection):
    """Draw selected proposals onto the frames."""
    v = load_video(video)
    tubes, _ = _read_proposals(proposals)
    if selection:
        try:
            idx = [int(s) for s in selection.split(",") if s.strip()]
        except ValueError as exc:
            raise click.BadParameter("indices must be integers", param_hint="--select") from exc
    else:
        idx = list(range(min(5, len(tubes))))
    boxes: dict[int, list] = {}
    for k, i in enumerate(idx):
        if not 0 <= i < len(tubes):
            raise click.BadParameter(f"index {i} out of range (0..{len(tubes) - 1})", param_hint="--select")
        for t in tubes[i].frames:
            if t < v.frame_count:
                boxes.setdefault(int(t), []).append((tubes[i].box(int(t)), PALETTE[k % len(PALETTE)]))
    paths = render_overlay(v, boxes, out)
    click.echo(f"{len(paths)} frames written to {out}")


def _read_proposals(path):
    try:
        return load_proposals(path)
    except SchemaError as exc:
        raise click.UsageError(f"{path}: {exc}") from exc


if __name__ == "__main__":
    sys.exit(main())
