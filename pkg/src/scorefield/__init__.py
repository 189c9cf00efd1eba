"""Coarse-to-fine differentiable 3D synthesis driven by score distillation.

A hash-grid neural field is optimized by volume rendering against a guidance
prior (analytic Gaussian oracles stand in for diffusion denoisers), then
refined as a textured mesh extracted by marching tetrahedra and drawn with a
differentiable software rasterizer.  All gradients are hand-derived
reverse-mode; numba JIT kernels carry the hot loops.

Set ``SCOREFIELD_NUM_THREADS`` to bound the kernel thread pool.
"""

import os

__version__ = "0.1.0"

_nt = os.environ.get("SCOREFIELD_NUM_THREADS")
if _nt:
    try:
        import numba

        numba.set_num_threads(max(1, min(int(_nt), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):
        pass
del os, _nt

from .errors import (  # noqa: E402
    CheckpointError,
    ConfigError,
    DetachedTapeError,
    DivergenceError,
    EmptyMeshError,
    OutOfDomainError,
)
from .params import Parameter, grad_norm, n_params, zero_grads  # noqa: E402
from .encoding import HashGridEncoding  # noqa: E402
from .field import EnvironmentMap, NeuralField  # noqa: E402
from .occupancy import OccupancyGrid, Octree, build_octree, sample_rays  # noqa: E402
from .cameras import (  # noqa: E402
    Camera,
    ShadingSample,
    orbit_camera,
    sample_camera,
    sample_light,
    sample_shading,
)
from .volume import RenderOutput, opacity_loss, render_volume  # noqa: E402
from .guidance import (  # noqa: E402
    AveragePoolEncoder,
    ConditionSet,
    ConditionedOraclePrior,
    DiffusionSchedule,
    GaussianOraclePrior,
    GuidanceModel,
    MultiviewOraclePrior,
    SDSConfig,
    cfg_combine,
    cfg_combine_extended,
    guided_denoise,
    sds_gradient,
    sds_gradient_latent,
    select_view,
)
from .remote import ConditionTable, GuidanceServer, RemoteGuidanceClient  # noqa: E402
from .tetgrid import (  # noqa: E402
    SurfaceMesh,
    TetGrid,
    cube_tetrahedra,
    face_smoothness,
    marching_tets,
    marching_tets_backward,
)
from .raster import rasterize, render_mesh  # noqa: E402
from .optim import Adam  # noqa: E402
from .checkpoint import read_checkpoint, write_checkpoint  # noqa: E402
from .config import RunConfig  # noqa: E402
from .pipeline import (  # noqa: E402
    RunState,
    build_state,
    default_view_sampler,
    edit_from_coarse,
    eval_rig,
    init_fine_from_coarse,
    load_run,
    prepare_prior,
    run_coarse,
    run_edit,
    run_fine,
    save_run,
    turntable,
)
from .meshio import export_scene, load_obj, load_png, save_png  # noqa: E402

__all__ = [
    "Adam",
    "AveragePoolEncoder",
    "Camera",
    "CheckpointError",
    "ConditionSet",
    "ConditionTable",
    "ConditionedOraclePrior",
    "ConfigError",
    "DetachedTapeError",
    "DiffusionSchedule",
    "DivergenceError",
    "EmptyMeshError",
    "EnvironmentMap",
    "GaussianOraclePrior",
    "GuidanceModel",
    "GuidanceServer",
    "HashGridEncoding",
    "MultiviewOraclePrior",
    "NeuralField",
    "OccupancyGrid",
    "Octree",
    "OutOfDomainError",
    "Parameter",
    "RemoteGuidanceClient",
    "RenderOutput",
    "RunConfig",
    "RunState",
    "SDSConfig",
    "ShadingSample",
    "SurfaceMesh",
    "TetGrid",
    "build_octree",
    "build_state",
    "cfg_combine",
    "cfg_combine_extended",
    "cube_tetrahedra",
    "default_view_sampler",
    "edit_from_coarse",
    "eval_rig",
    "export_scene",
    "face_smoothness",
    "grad_norm",
    "guided_denoise",
    "init_fine_from_coarse",
    "load_obj",
    "load_png",
    "load_run",
    "marching_tets",
    "marching_tets_backward",
    "n_params",
    "opacity_loss",
    "orbit_camera",
    "prepare_prior",
    "rasterize",
    "read_checkpoint",
    "render_mesh",
    "render_volume",
    "run_coarse",
    "run_edit",
    "run_fine",
    "sample_camera",
    "sample_light",
    "sample_rays",
    "sample_shading",
    "save_png",
    "save_run",
    "sds_gradient",
    "sds_gradient_latent",
    "select_view",
    "turntable",
    "write_checkpoint",
    "zero_grads",
]
