"""Neural scene field: density + albedo + shading normals + environment map.

Density is decoded through a softplus with an additive pre-activation bias
``lam * (1 - |mu| / c)`` so the optimization starts from a high-density blob
at the origin instead of empty space.  Albedo squashes through a sigmoid.
Normals come from a separate head on the same encoding; raw outputs shorter
than 1e-8 are replaced by the outward radial direction (counted, logged,
and excluded from the gradient).
"""

import logging

import numpy as np

from .encoding import DEFAULT_BOUNDS, HashGridEncoding
from .mlp import FieldMLP, sigmoid, softplus
from .params import Parameter

log = logging.getLogger(__name__)

BIAS_LAMBDA = 10.0
BIAS_C = 0.5
BOUNDING_RADIUS = 2.0
DEGENERATE_NORM = 1e-8


class FieldContext:
    __slots__ = ("pts", "enc_ctx", "da_ctx", "pre", "albedo", "n_ctx", "raw_norm", "normal", "degenerate")

    def __init__(self):
        self.pts = None
        self.enc_ctx = None
        self.da_ctx = None
        self.pre = None
        self.albedo = None
        self.n_ctx = None
        self.raw_norm = None
        self.normal = None
        self.degenerate = None


class NeuralField:
    def __init__(
        self,
        encoding=None,
        dtype=np.float32,
        rng=None,
        zero_init=False,
        hidden=32,
        bias_lambda=BIAS_LAMBDA,
        bias_c=BIAS_C,
        bounding_radius=BOUNDING_RADIUS,
    ):
        if rng is None:
            rng = np.random.default_rng(0)
        if encoding is None:
            encoding = HashGridEncoding(dtype=dtype, rng=rng)
        self.encoding = encoding
        self.dtype = np.dtype(dtype)
        self.bias_lambda = float(bias_lambda)
        self.bias_c = float(bias_c)
        self.bounding_radius = float(bounding_radius)
        d = encoding.out_dim
        self.da_mlp = FieldMLP(d, 4, hidden=hidden, dtype=dtype, rng=rng, name="field.da", zero_init=zero_init)
        self.normal_mlp = FieldMLP(d, 3, hidden=hidden, dtype=dtype, rng=rng, name="field.normal")
        self.degenerate_normal_count = 0

    def parameters(self):
        return self.encoding.parameters() + self.da_mlp.parameters() + self.normal_mlp.parameters()

    def density_bias(self, pts):
        r = np.linalg.norm(np.asarray(pts, dtype=np.float64), axis=-1)
        return (self.bias_lambda * (1.0 - r / self.bias_c)).astype(self.dtype)

    def forward(self, pts, want_normal=False, need_ctx=True):
        """Evaluate the field; returns (sigma, albedo, normal|None, ctx|None)."""
        pts = np.asarray(pts)
        feat, enc_ctx = self.encoding.encode(pts)
        y, da_ctx = self.da_mlp.forward(feat)
        pre = y[:, 0] + self.density_bias(pts)
        sig = softplus(pre)
        albedo = sigmoid(y[:, 1:4])

        ctx = None
        normal = None
        if need_ctx:
            ctx = FieldContext()
            ctx.pts = pts
            ctx.enc_ctx = enc_ctx
            ctx.da_ctx = da_ctx
            ctx.pre = pre
            ctx.albedo = albedo
        if want_normal:
            raw, n_ctx = self.normal_mlp.forward(feat)
            norm = np.linalg.norm(raw, axis=1)
            degenerate = norm < DEGENERATE_NORM
            ndeg = int(degenerate.sum())
            if ndeg:
                self.degenerate_normal_count += ndeg
                log.debug("substituted radial direction for %d degenerate normals", ndeg)
                radial = np.asarray(pts, dtype=self.dtype).copy()
                rlen = np.linalg.norm(radial, axis=1)
                center = rlen < 1e-12
                radial[center] = (0.0, 0.0, 1.0)
                rlen[center] = 1.0
                radial /= rlen[:, None]
                raw = raw.copy()
                raw[degenerate] = radial[degenerate]
                norm = np.where(degenerate, 1.0, norm).astype(self.dtype)
            normal = raw / norm[:, None]
            if need_ctx:
                ctx.n_ctx = n_ctx
                ctx.raw_norm = norm
                ctx.normal = normal
                ctx.degenerate = degenerate if ndeg else None
        return sig, albedo, normal, ctx

    def eval_density(self, pts, need_ctx=False):
        sig, _, _, ctx = self.forward(pts, want_normal=False, need_ctx=need_ctx)
        return (sig, ctx) if need_ctx else sig

    def backward(self, ctx, dsigma=None, dalbedo=None, dnormal=None, need_point_grad=False):
        """Push pixel-space gradients into parameters; optionally return d/d(point)."""
        n = ctx.pre.shape[0]
        dy = np.zeros((n, 4), dtype=self.dtype)
        dpre = None
        if dsigma is not None:
            dpre = (dsigma * sigmoid(ctx.pre)).astype(self.dtype)
            dy[:, 0] = dpre
        if dalbedo is not None:
            dy[:, 1:4] = dalbedo * ctx.albedo * (1.0 - ctx.albedo)
        dfeat = self.da_mlp.backward(ctx.da_ctx, dy)

        if dnormal is not None:
            if ctx.n_ctx is None:
                raise ValueError("normals were not evaluated in the forward pass")
            nrm = ctx.normal
            inv = 1.0 / ctx.raw_norm[:, None]
            draw = (dnormal - nrm * np.sum(nrm * dnormal, axis=1, keepdims=True)) * inv
            if ctx.degenerate is not None:
                draw = draw.copy()
                draw[ctx.degenerate] = 0.0
            dfeat = dfeat + self.normal_mlp.backward(ctx.n_ctx, draw.astype(self.dtype))

        dpts = self.encoding.encode_backward(ctx.enc_ctx, dfeat, need_point_grad=need_point_grad)
        if need_point_grad and dpre is not None:
            # the density bias also sees the point
            p = np.asarray(ctx.pts, dtype=np.float64)
            r = np.linalg.norm(p, axis=1, keepdims=True)
            safe = np.maximum(r, 1e-12)
            dbias = (-self.bias_lambda / self.bias_c) * p / safe
            dbias[r[:, 0] < 1e-12] = 0.0
            dpts = dpts + dpre[:, None] * dbias.astype(self.dtype)
        return dpts

    def clone(self):
        """Deep copy sharing nothing; used to seed the texture field."""
        import copy

        other = NeuralField.__new__(NeuralField)
        other.encoding = copy.deepcopy(self.encoding)
        other.da_mlp = copy.deepcopy(self.da_mlp)
        other.normal_mlp = copy.deepcopy(self.normal_mlp)
        other.dtype = self.dtype
        other.bias_lambda = self.bias_lambda
        other.bias_c = self.bias_c
        other.bounding_radius = self.bounding_radius
        other.degenerate_normal_count = 0
        return other


def _dir_features(dirs, n_freq=4):
    feats = [dirs]
    for k in range(n_freq):
        s = (2.0**k) * np.pi
        feats.append(np.sin(s * dirs))
        feats.append(np.cos(s * dirs))
    return np.concatenate(feats, axis=1)


class EnvironmentMap:
    """Direction-conditioned background color. Learns 10x slower than the field."""

    N_FREQ = 4

    def __init__(self, dtype=np.float32, rng=None, hidden=16, lr_scale=0.1):
        if rng is None:
            rng = np.random.default_rng(0)
        in_dim = 3 + 6 * self.N_FREQ
        self.dtype = np.dtype(dtype)
        self.mlp = FieldMLP(in_dim, 3, hidden=hidden, dtype=dtype, rng=rng, name="env")
        for p in self.mlp.parameters():
            p.lr_scale = lr_scale
        self.nonunit_count = 0

    def parameters(self):
        return self.mlp.parameters()

    def forward(self, dirs, need_ctx=True):
        dirs = np.asarray(dirs, dtype=self.dtype)
        norms = np.linalg.norm(dirs, axis=1)
        off = np.abs(norms - 1.0) > 1e-6
        if off.any():
            self.nonunit_count += int(off.sum())
            log.debug("normalized %d non-unit background directions", int(off.sum()))
            dirs = dirs / np.maximum(norms, 1e-12)[:, None]
        feats = _dir_features(dirs, self.N_FREQ).astype(self.dtype)
        raw, mctx = self.mlp.forward(feats)
        rgb = sigmoid(raw)
        return rgb, (mctx, rgb) if need_ctx else None

    def backward(self, ctx, drgb):
        mctx, rgb = ctx
        self.mlp.backward(mctx, (drgb * rgb * (1.0 - rgb)).astype(self.dtype))
