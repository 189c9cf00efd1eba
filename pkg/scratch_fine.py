"""Fine-stage tuning experiments against a saved rig8 coarse checkpoint."""
import os
import sys
import time

import numpy as np

from scorefield.config import RunConfig
from scorefield.guidance import MultiviewOraclePrior
from scorefield import pipeline
from scorefield.scenes import fixed_rig, rig_targets, rig_view_sampler, psnr
from scorefield.cameras import ShadingSample

CKPT = "/tmp/rig8_coarse.ckpt"
shading = ShadingSample()
cams256 = fixed_rig(n=8, width=256, height=256)
targets256 = rig_targets(cams256, shading=shading)

if not os.path.exists(CKPT):
    cfg = RunConfig.rig8()
    cams64 = fixed_rig(n=8, width=64, height=64)
    targets64 = rig_targets(cams64, shading=shading)
    prior = MultiviewOraclePrior(targets64, s=0.0)
    state = pipeline.build_state(cfg)
    sampler = rig_view_sampler(cams64, cfg.coarse_batch, shading=shading)
    t0 = time.time()
    pipeline.run_coarse(state, prior, view_sampler=sampler)
    print(f"[coarse] {cfg.coarse_iters} iters in {time.time()-t0:.0f}s", flush=True)
    pipeline.save_run(CKPT, state)

base = pipeline.load_run(CKPT)
coarse256 = pipeline.eval_rig(base, cams256, shading=shading, mesh=False)
p_coarse = psnr(coarse256, targets256)
print(f"[coarse] psnr vs 256 targets {p_coarse:.2f} dB (fine must reach {p_coarse+2:.2f})", flush=True)

# experiments: (tag, latent_res, n_iters)
EXPS = [
    ("lat64-pooled256", 64, 120),
    ("lat128-pooled256", 128, 120),
]

for tag, latent, iters in EXPS:
    state = pipeline.load_run(CKPT)
    state.config = state.config.replace(latent_res=latent)
    pipeline.init_fine_from_coarse(state)
    mesh = state.tetgrid.extract()
    m0 = pipeline.eval_rig(state, cams256, shading=shading, mesh=mesh)
    print(f"[{tag}] init mesh {mesh.n_vertices}V: psnr {psnr(m0, targets256):.2f} dB", flush=True)

    prior = MultiviewOraclePrior(targets256, s=0.0)  # pooled by prepare_prior
    fsampler = rig_view_sampler(cams256, state.config.fine_batch, shading=shading)
    t0 = time.time()
    done = 0
    for chunk in (40, 40, 40):
        rows = pipeline.run_fine(state, prior, view_sampler=fsampler, iters=chunk)
        done += chunk
        if done + chunk > iters + chunk:
            break
        frames = pipeline.eval_rig(state, cams256, shading=shading)
        p = psnr(frames, targets256)
        last = rows[-1]
        print(f"[{tag}] {done:3d} iters ({time.time()-t0:.0f}s): psnr {p:.2f} dB, "
              f"faces {last['faces']}, inverted {last['inverted_tets']}, "
              f"smooth {last['smoothness']:.4f}", flush=True)

print("DONE", flush=True)
