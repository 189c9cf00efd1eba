import numpy as np
import pytest

from scorefield.encoding import HashGridEncoding
from scorefield.errors import OutOfDomainError


def make_encoding(seed=0, dtype=np.float64, **kw):
    args = dict(levels=4, table_size=2**12, feature_dim=2, base_resolution=4, max_resolution=32)
    args.update(kw)
    return HashGridEncoding(dtype=dtype, rng=np.random.default_rng(seed), **args)


def test_output_shape_and_dtype():
    enc = make_encoding()
    pts = np.random.default_rng(1).uniform(-1.5, 1.5, size=(17, 3))
    feats, ctx = enc.encode(pts)
    assert feats.shape == (17, enc.levels * enc.feature_dim)
    assert feats.dtype == np.float64


def test_level_resolutions_are_geometric():
    enc = make_encoding(levels=6, base_resolution=4, max_resolution=128)
    res = enc.resolutions
    assert res[0] == 4
    assert res[-1] == 128
    ratios = np.diff(np.log(res.astype(np.float64)))
    assert np.allclose(ratios, ratios[0], rtol=1e-6)


def test_deterministic_for_same_points():
    enc = make_encoding()
    pts = np.random.default_rng(2).uniform(-1.0, 1.0, size=(33, 3))
    a, _ = enc.encode(pts)
    b, _ = enc.encode(pts.copy())
    assert np.array_equal(a, b)


def test_out_of_domain_raises():
    enc = make_encoding()
    pts = np.array([[0.0, 0.0, 3.5]])
    with pytest.raises(OutOfDomainError):
        enc.encode(pts)


def test_interpolation_is_continuous():
    # features along a straight segment should have no jumps
    enc = make_encoding()
    t = np.linspace(0.0, 1.0, 201)
    a = np.array([-0.4, 0.2, -0.1])
    b = np.array([0.5, -0.3, 0.4])
    pts = a + t[:, None] * (b - a)
    feats, _ = enc.encode(pts)
    step = np.abs(np.diff(feats, axis=0)).max()
    assert step < 0.05


def test_table_gradient_matches_fd():
    enc = make_encoding()
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.0, 1.0, size=(9, 3))
    feats, ctx = enc.encode(pts)
    dfeat = rng.standard_normal(feats.shape)
    enc.encode_backward(ctx, dfeat)

    table = enc.parameters()[0]
    direction = rng.standard_normal(table.value.shape)
    direction /= np.linalg.norm(direction)
    analytic = float((table.grad * direction).sum())

    h = 1e-6
    table.value += h * direction
    f_plus = float((enc.encode(pts)[0] * dfeat).sum())
    table.value -= 2 * h * direction
    f_minus = float((enc.encode(pts)[0] * dfeat).sum())
    table.value += h * direction
    fd = (f_plus - f_minus) / (2 * h)
    assert abs(analytic - fd) / max(abs(fd), 1e-12) < 1e-7


def test_point_gradient_matches_fd():
    enc = make_encoding()
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1.0, 1.0, size=(7, 3))
    feats, ctx = enc.encode(pts)
    dfeat = rng.standard_normal(feats.shape)
    dpts = enc.encode_backward(ctx, dfeat, need_point_grad=True)

    h = 1e-6
    v = rng.standard_normal(pts.shape)
    v /= np.linalg.norm(v)
    f_plus = float((enc.encode(pts + h * v)[0] * dfeat).sum())
    f_minus = float((enc.encode(pts - h * v)[0] * dfeat).sum())
    fd = (f_plus - f_minus) / (2 * h)
    analytic = float((dpts * v).sum())
    # trilinear interpolation is only piecewise smooth; a kink inside the
    # stencil costs accuracy, so the tolerance is looser than for tables
    assert abs(analytic - fd) / max(abs(fd), 1e-12) < 1e-5
