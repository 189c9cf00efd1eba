"""Re-texture a trained model, and serve guidance over a socket.

Part one: load demo 04's checkpoint, swap the oracle targets for the edited
reference scene (same shapes, different sphere texture), and re-distill a
copy — geometry survives, the texture follows the new targets.

Part two: the same oracle wrapped in a GuidanceServer on localhost, queried
through RemoteGuidanceClient — the denoiser request/reply protocol carries
float32 images plus a timestep and a condition id.
"""

import os


import numpy as np

from scorefield import (
    MultiviewOraclePrior,
    edit_from_coarse,
    eval_rig,
    load_run,
    run_edit,
)
from scorefield.cameras import ShadingSample
from scorefield.guidance import ConditionSet, DiffusionSchedule, GaussianOraclePrior
from scorefield.remote import ConditionTable, GuidanceServer, RemoteGuidanceClient
from scorefield.scenes import fixed_rig, psnr, rig_targets, rig_view_sampler

out_dir = os.path.join(os.path.dirname(__file__), "out")
ckpt = os.path.join(out_dir, "coarse_demo.ckpt")
if not os.path.exists(ckpt):
    raise SystemExit("run demos/04_coarse_distillation.py first")

base = load_run(ckpt)
cfg = base.config
shading = ShadingSample()

cams = fixed_rig(n=8, width=cfg.edit_res, height=cfg.edit_res)
edited_targets = rig_targets(cams, shading=shading, edited=True)
prior = MultiviewOraclePrior(edited_targets, s=0.0)
sampler = rig_view_sampler(cams, cfg.coarse_batch, shading=shading)

base_before = eval_rig(base, cams, shading=shading, mesh=False)
print(f"base model vs edited targets: {psnr(base_before, edited_targets):6.2f} dB")

edit = edit_from_coarse(base)  # deep copy: the base model stays untouched
run_edit(edit, prior, view_sampler=sampler, iters=60)

frames = eval_rig(edit, cams, shading=shading, mesh=False)
print(f"after 60 edit iterations:     {psnr(frames, edited_targets):6.2f} dB")
base_after = eval_rig(base, cams, shading=shading, mesh=False)
print(f"base model unchanged:         {np.array_equal(base_before, base_after)}")

# --- part two: the same guidance served over TCP ------------------------
x_star = np.full((16, 16, 3), 0.2)
table = ConditionTable([ConditionSet(text="demo")])
server = GuidanceServer(GaussianOraclePrior(x_star, s=0.0), table).start()

with RemoteGuidanceClient(("127.0.0.1", server.port), table, DiffusionSchedule()) as client:
    rng = np.random.default_rng(8)
    x_t = rng.standard_normal((16, 16, 3))
    eps_remote = client.denoise(x_t, ConditionSet(text="demo"), t=0.4)
eps_local = GaussianOraclePrior(x_star, s=0.0).denoise(
    x_t.astype(np.float32).astype(np.float64), None, 0.4)
print(f"\nremote denoiser on port {server.port}: "
      f"max |remote - local| = {np.abs(eps_remote - eps_local).max():.2e}")
server.stop()
