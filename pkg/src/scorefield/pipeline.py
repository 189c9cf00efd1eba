"""Training stages and run management.

Stage (a) distills a neural field through the volume renderer; stage (b)
converts it to a textured tet-grid surface and keeps distilling through the
rasterizer in latent space; editing re-runs stage (a) from a copy of a
trained model at mid resolution with a pooled latent target, then refines.

Reproducibility: every random draw comes from a counter-based stream keyed
by (seed, iteration, view, purpose), and checkpoints carry the optimizer
moments, the occupancy values, and the iteration cursor, so a resumed run
replays the exact arithmetic of an uninterrupted one.
"""

import copy
import json
import logging
import os
import time

import numpy as np

from . import rng as srng
from .cameras import sample_camera, sample_shading
from .checkpoint import pack_string, read_checkpoint, unpack_string, write_checkpoint
from .config import RunConfig
from .encoding import HashGridEncoding
from .errors import DivergenceError, EmptyMeshError
from .field import EnvironmentMap, NeuralField
from .guidance import (
    AveragePoolEncoder,
    ConditionSet,
    SDSConfig,
    sds_gradient,
    sds_gradient_latent,
    select_view,
)
from .occupancy import OccupancyGrid, build_octree
from .optim import Adam
from .params import grad_norm, zero_grads
from .raster import render_mesh
from .tetgrid import TetGrid, face_smoothness
from .volume import opacity_loss, render_volume

log = logging.getLogger(__name__)


class RunState:
    """Everything a stage needs: model, occupancy, optimizer, cursor."""

    def __init__(self, config, field, env, grid, octree, optimizer, stage="coarse", iteration=0, tetgrid=None):
        self.config = config
        self.field = field
        self.env = env
        self.grid = grid
        self.octree = octree
        self.optimizer = optimizer
        self.stage = stage
        self.iteration = iteration
        self.tetgrid = tetgrid

    def all_params(self):
        out = self.field.parameters() + self.env.parameters()
        if self.tetgrid is not None:
            out += self.tetgrid.parameters()
        return out


def build_state(config, dtype=np.float32):
    """Fresh stage-(a) state seeded from config.seed."""
    g = srng.stream(config.seed, purpose=srng.INIT)
    enc = HashGridEncoding(
        levels=config.levels,
        table_size=config.table_size,
        feature_dim=config.feature_dim,
        base_resolution=config.base_resolution,
        max_resolution=config.max_resolution,
        dtype=dtype,
        rng=g,
    )
    field = NeuralField(encoding=enc, dtype=dtype, rng=g, hidden=config.hidden)
    env = EnvironmentMap(dtype=dtype, rng=g, hidden=config.env_hidden)
    grid = OccupancyGrid(resolution=config.occupancy_resolution, update_interval=config.occupancy_interval, dtype=dtype)
    grid.update(field, rng=srng.stream(config.seed, purpose=srng.OCCUPANCY))
    octree = build_octree(grid)
    opt = Adam(
        field.parameters() + env.parameters(),
        lr=config.adam_lr,
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_eps,
    )
    return RunState(config, field, env, grid, octree, opt)


def default_view_sampler(seed, iteration, view, stage, width, height):
    """Spec training distribution: random orbit camera plus a shading draw."""
    cam_stage = "fine" if stage == "fine" else "coarse"
    camera = sample_camera(srng.stream(seed, iteration, view, srng.CAMERA), stage=cam_stage, width=width, height=height)
    shading = sample_shading(srng.stream(seed, iteration, view, srng.SHADING), camera)
    return camera, shading


class _StageLog:
    def __init__(self, workdir, stage):
        self.rows = []
        self._fh = None
        if workdir is not None:
            logs = os.path.join(workdir, "logs")
            os.makedirs(logs, exist_ok=True)
            self._fh = open(os.path.join(logs, f"{stage}.jsonl"), "a")

    def write(self, row):
        self.rows.append(row)
        if self._fh is not None:
            self._fh.write(json.dumps(row) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _check_finite(state, params, it, workdir):
    bad = [p.name for p in params if not np.isfinite(p.grad).all()]
    bad += [p.name for p in params if not np.isfinite(p.value).all()]
    if not bad:
        return
    dump = {"iteration": it, "stage": state.stage, "bad": sorted(set(bad))}
    if workdir is not None:
        path = os.path.join(workdir, "diverged.ckpt")
        try:
            save_run(path, state)
            dump["checkpoint"] = path
        except Exception:  # the dump is best effort
            pass
    raise DivergenceError(f"non-finite values in {dump['bad']}", dump=dump)


def _stage_cond(prior, cond, encoder, render):
    if getattr(prior, "needs_low_res", False):
        x_low = encoder.forward(render.color.astype(np.float64)) if encoder else render.color
        return cond.with_x_low(x_low)
    return cond


def prepare_prior(prior, encoder, latent_res=None):
    """Push a prior's targets through the latent encoder when it supports it.

    Targets already at the latent resolution are used as-is; only targets at
    the full render resolution get pooled down by the encoder.
    """
    if encoder is None or encoder.factor == 1:
        return prior
    known = getattr(prior, "target_resolution", None)
    if known is not None and latent_res is not None and tuple(known) == (latent_res, latent_res):
        return prior
    to_latent = getattr(prior, "encoded", None)
    return to_latent(encoder) if callable(to_latent) else prior


def run_coarse(state, prior, workdir=None, view_sampler=None, cond=None, iters=None, res=None, latent_res=None, sds_cfg=None):
    """Stage (a) (and the editing variant): distill the field through the
    volume renderer.  With ``latent_res`` < ``res`` supervision moves to the
    pooled latent; otherwise it acts directly on pixels."""
    cfg = state.config
    sampler = view_sampler or default_view_sampler
    cond = cond if cond is not None else ConditionSet.null()
    iters = cfg.coarse_iters if iters is None else iters
    res = res or cfg.coarse_res
    factor = 1 if latent_res in (None, res) else res // latent_res
    if latent_res and res % latent_res:
        raise ValueError(f"render size {res} is not a multiple of latent {latent_res}")
    encoder = AveragePoolEncoder(factor) if factor > 1 else None
    eff_prior = prepare_prior(prior, encoder, latent_res)
    sds_cfg = sds_cfg or SDSConfig.coarse(
        guidance_weight=cfg.guidance_weight,
        omega_text=cfg.omega_text,
        omega_joint=cfg.omega_joint,
        t_img=cfg.t_img,
    )
    params = state.optimizer.params
    stage_log = _StageLog(workdir, state.stage)
    seed = cfg.seed
    try:
        end = state.iteration + iters
        while state.iteration < end:
            it = state.iteration
            t0 = time.perf_counter()
            state.optimizer.zero_grad()
            res_norm = 0.0
            opac = 0.0
            for b in range(cfg.coarse_batch):
                camera, shading = sampler(seed, it, b, state.stage, res, res)
                bound = select_view(eff_prior, camera)
                render = render_volume(
                    state.field,
                    state.env,
                    state.octree,
                    camera,
                    shading=shading,
                    max_samples=cfg.max_samples,
                    rng=srng.stream(seed, it, b, srng.RAY_JITTER),
                )
                oloss, dalpha = opacity_loss(render)
                opac += oloss
                vcond = _stage_cond(bound, cond, encoder, render)
                gsds = srng.stream(seed, it, b, srng.SDS_T)
                extra = (cfg.opacity_weight * dalpha).astype(render.alpha.dtype)
                if encoder is None:
                    info = sds_gradient(render, bound, vcond, sds_cfg, gsds, extra_alpha_grad=extra)
                else:
                    info = sds_gradient_latent(render, encoder, bound, vcond, sds_cfg, gsds, extra_alpha_grad=extra)
                res_norm += info["residual_norm"]
            _check_finite(state, params, it, workdir)
            state.optimizer.step()
            state.iteration = it + 1
            if (it + 1) % cfg.occupancy_interval == 0:
                state.grid.update(state.field, rng=srng.stream(seed, it, 0, srng.OCCUPANCY))
                state.octree = build_octree(state.grid)
            if (it + 1) % cfg.log_every == 0 or it == 0:
                stage_log.write(
                    {
                        "stage": state.stage,
                        "iteration": state.iteration,
                        "residual_norm": res_norm / cfg.coarse_batch,
                        "opacity_loss": opac / cfg.coarse_batch,
                        "grad_norm": grad_norm(params),
                        "occupied_fraction": state.octree.occupied_fraction(),
                        "degenerate_normals": state.field.degenerate_normal_count,
                        "seconds": time.perf_counter() - t0,
                    }
                )
            if workdir is not None and (it + 1) % cfg.checkpoint_every == 0:
                save_run(os.path.join(workdir, "latest.ckpt"), state)
    finally:
        stage_log.close()
    return stage_log.rows


def init_fine_from_coarse(state, tet_resolution=None, density_level=None, tet_bounds=((-1.25,) * 3, (1.25,) * 3)):
    """Stage (b) handoff: seed a tet lattice from the field's density and
    re-target the optimizer at the field + lattice (environment frozen)."""
    cfg = state.config
    tg = TetGrid(
        resolution=tet_resolution or cfg.tet_resolution,
        bounds=tet_bounds,
        dtype=state.field.dtype,
    )
    tg.init_from_field(state.field, density_level=density_level if density_level is not None else cfg.mesh_density_level)
    tg.extract()  # fail fast if the density never crosses the level
    state.tetgrid = tg
    state.stage = "fine"
    state.iteration = 0
    state.optimizer = Adam(
        state.field.parameters() + tg.parameters(),
        lr=cfg.adam_lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
    )
    return state


def run_fine(state, prior, workdir=None, view_sampler=None, cond=None, iters=None):
    """Stage (b): rasterize the extracted surface and distill in latent space."""
    if state.tetgrid is None:
        raise ValueError("call init_fine_from_coarse first")
    cfg = state.config
    sampler = view_sampler or default_view_sampler
    cond = cond if cond is not None else ConditionSet.null()
    iters = cfg.fine_iters if iters is None else iters
    res = cfg.fine_res
    factor = res // cfg.latent_res
    encoder = AveragePoolEncoder(factor)
    eff_prior = prepare_prior(prior, encoder, cfg.latent_res)
    sds_cfg = SDSConfig.fine(
        t_max=cfg.fine_t_max,
        guidance_weight=cfg.guidance_weight,
        omega_text=cfg.omega_text,
        omega_joint=cfg.omega_joint,
        t_img=cfg.t_img,
    )
    params = state.optimizer.params
    stage_log = _StageLog(workdir, state.stage)
    seed = cfg.seed
    tg = state.tetgrid
    try:
        end = state.iteration + iters
        while state.iteration < end:
            it = state.iteration
            t0 = time.perf_counter()
            state.optimizer.zero_grad()
            zero_grads(state.env.parameters())
            try:
                mesh = tg.extract()
            except EmptyMeshError as exc:
                raise DivergenceError(
                    "surface vanished during refinement", dump={"iteration": it, "stage": state.stage}
                ) from exc
            dverts = np.zeros_like(mesh.vertices)
            res_norm = 0.0
            for b in range(cfg.fine_batch):
                camera, shading = sampler(seed, it, b, state.stage, res, res)
                bound = select_view(eff_prior, camera)
                render = render_mesh(state.field, state.env, mesh, camera, shading=shading)
                vcond = _stage_cond(bound, cond, encoder, render)
                gsds = srng.stream(seed, it, b, srng.SDS_T)
                info = sds_gradient_latent(render, encoder, bound, vcond, sds_cfg, gsds)
                dverts += render.dvertices
                res_norm += info["residual_norm"]
            smooth, dsm = face_smoothness(mesh.vertices, mesh.faces)
            dverts += cfg.smoothness_weight * dsm
            tg.accumulate_grads(mesh, dverts)
            _check_finite(state, params, it, workdir)
            state.optimizer.step()
            state.iteration = it + 1
            if (it + 1) % cfg.log_every == 0 or it == 0:
                stage_log.write(
                    {
                        "stage": state.stage,
                        "iteration": state.iteration,
                        "residual_norm": res_norm / cfg.fine_batch,
                        "smoothness": smooth,
                        "grad_norm": grad_norm(params),
                        "faces": mesh.n_faces,
                        "inverted_tets": tg.inverted_tet_count(),
                        "seconds": time.perf_counter() - t0,
                    }
                )
            if workdir is not None and (it + 1) % cfg.checkpoint_every == 0:
                save_run(os.path.join(workdir, "latest.ckpt"), state)
    finally:
        stage_log.close()
    return stage_log.rows


def edit_from_coarse(state):
    """Deep-copied state ready for an editing run; the original stays intact."""
    new = RunState(
        state.config,
        state.field.clone(),
        copy.deepcopy(state.env),
        copy.deepcopy(state.grid),
        None,
        None,
        stage="edit",
        iteration=0,
    )
    new.octree = build_octree(new.grid)
    new.optimizer = Adam(
        new.field.parameters() + new.env.parameters(),
        lr=state.config.adam_lr,
        betas=(state.config.adam_beta1, state.config.adam_beta2),
        eps=state.config.adam_eps,
    )
    return new


def run_edit(state, prior, workdir=None, view_sampler=None, cond=None, iters=None):
    """Editing pass: stage (a) continued at mid resolution with pooled latents."""
    cfg = state.config
    return run_coarse(
        state,
        prior,
        workdir=workdir,
        view_sampler=view_sampler,
        cond=cond,
        iters=cfg.edit_iters if iters is None else iters,
        res=cfg.edit_res,
        latent_res=cfg.edit_latent_res,
    )


def save_run(path, state):
    """Checkpoint params, optimizer moments, occupancy, and the cursor."""
    sections = {
        "meta/stage": pack_string(state.stage),
        "meta/iteration": np.array([state.iteration], dtype=np.int64),
        "meta/config": pack_string(state.config.to_json()),
        "meta/confighash": pack_string(state.config.config_hash()),
    }
    for p in state.all_params():
        sections[f"param/{p.name}"] = p.value
    sections["occ/values"] = state.grid.values
    if state.tetgrid is not None:
        sections["tet/resolution"] = np.array([state.tetgrid.resolution], dtype=np.int64)
        sections["tet/bounds"] = np.stack([state.tetgrid.lo, state.tetgrid.hi])
    sections.update(state.optimizer.state_arrays())
    return write_checkpoint(path, sections)


def load_run(path, dtype=np.float32):
    """Rebuild a RunState that continues bit-for-bit where the file left off."""
    arrays = read_checkpoint(path)
    config = RunConfig.from_json(unpack_string(arrays["meta/config"]))
    stage = unpack_string(arrays["meta/stage"])
    state = build_state(config, dtype=dtype)
    state.stage = stage
    state.iteration = int(arrays["meta/iteration"][0])
    if stage == "fine":
        bounds = arrays["tet/bounds"]
        state.tetgrid = TetGrid(
            resolution=int(arrays["tet/resolution"][0]),
            bounds=(bounds[0], bounds[1]),
            dtype=dtype,
        )
        state.optimizer = Adam(
            state.field.parameters() + state.tetgrid.parameters(),
            lr=config.adam_lr,
            betas=(config.adam_beta1, config.adam_beta2),
            eps=config.adam_eps,
        )
    for p in state.all_params():
        key = f"param/{p.name}"
        if key not in arrays:
            raise ValueError(f"checkpoint is missing {key}")
        if arrays[key].shape != p.value.shape:
            raise ValueError(f"checkpoint shape mismatch for {p.name}")
        p.value[:] = arrays[key]
    state.grid.values[:] = arrays["occ/values"]
    state.octree = build_octree(state.grid)
    state.optimizer.load_state_arrays(arrays)
    return state


def eval_rig(state, cameras, shading=None, mesh=None):
    """Render each camera with the current model.

    ``mesh=None`` picks the surface automatically in the fine stage,
    ``mesh=False`` forces the volume path, and an explicit SurfaceMesh
    renders that mesh.
    """
    frames = []
    use_mesh = (mesh is not None and mesh is not False) or (
        mesh is None and state.stage == "fine" and state.tetgrid is not None
    )
    if use_mesh and mesh is None:
        mesh = state.tetgrid.extract()
    for cam in cameras:
        if use_mesh:
            out = render_mesh(state.field, state.env, mesh, cam, shading=shading, with_grad=False)
        else:
            out = render_volume(
                state.field, state.env, state.octree, cam, shading=shading,
                max_samples=state.config.max_samples, with_grad=False,
            )
        frames.append(out.color.astype(np.float64))
    return np.stack(frames)


def turntable(state, n_frames=24, width=128, height=128, elevation_deg=20.0, distance=1.75, focal=1.25, shading=None):
    """Orbit render of the current model, one frame per azimuth step."""
    from .scenes import fixed_rig

    cams = fixed_rig(n=n_frames, width=width, height=height, elevation_deg=elevation_deg, distance=distance, focal=focal)
    return eval_rig(state, cams, shading=shading)
