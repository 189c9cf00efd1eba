"""Distill a neural field against multiview oracle targets (stage one).

Eight fixed cameras photograph the reference scene; a per-view Gaussian
oracle then plays the role of a diffusion prior.  A few hundred SDS steps
later the field renders the scene from every angle.  Outputs land in
demos/out/: before/after renders and the checkpoint reused by demo 05.
"""

import os

import numpy as np

from scorefield import MultiviewOraclePrior, RunConfig, build_state, eval_rig, run_coarse, save_run
from scorefield.cameras import ShadingSample
from scorefield.meshio import save_png
from scorefield.scenes import fixed_rig, psnr, rig_targets, rig_view_sampler

out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)

cfg = RunConfig.tiny(seed=5, coarse_iters=150, coarse_res=32, log_every=25)
shading = ShadingSample()  # albedo-only: targets and renders share lighting
cams = fixed_rig(n=8, width=cfg.coarse_res, height=cfg.coarse_res)
targets = rig_targets(cams, shading=shading)
prior = MultiviewOraclePrior(targets, s=0.0)
sampler = rig_view_sampler(cams, cfg.coarse_batch, shading=shading)

state = build_state(cfg)
before = eval_rig(state, cams, shading=shading, mesh=False)
print(f"PSNR before training: {psnr(before, targets):6.2f} dB")

rows = run_coarse(state, prior, view_sampler=sampler)
for row in rows:
    print(f"  iter {row['iteration']:4d}  residual {row['residual_norm']:8.4f}  "
          f"occupied {row['occupied_fraction']:6.1%}")

after = eval_rig(state, cams, shading=shading, mesh=False)
print(f"PSNR after {cfg.coarse_iters} iterations: {psnr(after, targets):6.2f} dB")

save_png(os.path.join(out_dir, "coarse_before.png"), np.clip(before[0], 0, 1))
save_png(os.path.join(out_dir, "coarse_after.png"), np.clip(after[0], 0, 1))
save_png(os.path.join(out_dir, "coarse_target.png"), np.clip(targets[0], 0, 1))

ckpt = os.path.join(out_dir, "coarse_demo.ckpt")
save_run(ckpt, state)
print(f"checkpoint -> {ckpt}")
