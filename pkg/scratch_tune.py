"""Tune the rig8 preset: PSNR trajectory + wall time for the coarse stage."""
import sys
import time

import numpy as np

from scorefield.config import RunConfig
from scorefield.guidance import MultiviewOraclePrior
from scorefield import pipeline
from scorefield.scenes import fixed_rig, rig_targets, rig_view_sampler, psnr
from scorefield.cameras import ShadingSample

iters_plan = [int(x) for x in (sys.argv[1:] or ["50", "50", "100", "100", "200"])]

cfg = RunConfig.rig8()
state = pipeline.build_state(cfg)
cams = fixed_rig(n=8, width=cfg.coarse_res, height=cfg.coarse_res)
shading = ShadingSample()
targets = rig_targets(cams, shading=shading)
prior = MultiviewOraclePrior(targets, s=0.0)
sampler = rig_view_sampler(cams, cfg.coarse_batch, shading=shading)

t0 = time.time()
total = 0
for chunk in iters_plan:
    pipeline.run_coarse(state, prior, view_sampler=sampler, iters=chunk)
    total += chunk
    frames = pipeline.eval_rig(state, cams, shading=shading, mesh=False)
    print(f"iter {total:4d}  psnr {psnr(frames, targets):6.2f} dB  "
          f"elapsed {time.time()-t0:7.1f}s  ({(time.time()-t0)/total:.2f} s/it)")
