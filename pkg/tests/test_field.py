import numpy as np

from helpers import directional_fd, random_direction, small_env, small_field, tape_dot
from scorefield.params import zero_grads


def field_scalar(field, pts, co_sig, co_alb, co_nrm):
    sig, albedo, normal, _ = field.forward(pts, want_normal=True, need_ctx=False)
    return float((sig * co_sig).sum() + (albedo * co_alb).sum() + (normal * co_nrm).sum())


def test_density_is_nonnegative():
    field = small_field(seed=10)
    pts = np.random.default_rng(0).uniform(-1.8, 1.8, size=(400, 3))
    sig, albedo, _, _ = field.forward(pts, want_normal=False, need_ctx=False)
    assert (sig >= 0.0).all()
    assert (albedo >= 0.0).all() and (albedo <= 1.0).all()


def test_density_bias_concentrates_mass_at_origin():
    field = small_field(seed=11)
    near = field.density_bias(np.zeros((1, 3)))
    far = field.density_bias(np.array([[1.9, 0.0, 0.0]]))
    assert near[0] > far[0]


def test_normals_are_unit_length():
    field = small_field(seed=12)
    pts = np.random.default_rng(1).uniform(-1.0, 1.0, size=(50, 3))
    _, _, normal, _ = field.forward(pts, want_normal=True, need_ctx=False)
    assert np.allclose(np.linalg.norm(normal, axis=1), 1.0, atol=1e-6)


def test_param_gradients_match_fd():
    field = small_field(seed=13)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1.0, 1.0, size=(12, 3))
    co_sig = rng.standard_normal(12)
    co_alb = rng.standard_normal((12, 3))
    co_nrm = rng.standard_normal((12, 3))

    sig, albedo, normal, ctx = field.forward(pts, want_normal=True)
    zero_grads(field.parameters())
    field.backward(ctx, dsigma=co_sig, dalbedo=co_alb, dnormal=co_nrm)

    params = field.parameters()
    direction = random_direction(params, rng)
    analytic = tape_dot(params, direction)
    fd = directional_fd(lambda: field_scalar(field, pts, co_sig, co_alb, co_nrm), params, direction)
    assert abs(analytic - fd) / max(abs(fd), 1e-12) < 1e-6


def test_point_gradients_match_fd():
    field = small_field(seed=14)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.9, 0.9, size=(8, 3))
    co_sig = rng.standard_normal(8)
    co_alb = rng.standard_normal((8, 3))

    sig, albedo, _, ctx = field.forward(pts, want_normal=False)
    dpts = field.backward(ctx, dsigma=co_sig, dalbedo=co_alb, need_point_grad=True)

    v = rng.standard_normal(pts.shape)
    v /= np.linalg.norm(v)
    h = 1e-6

    def f(q):
        s, a, _, _ = field.forward(q, want_normal=False, need_ctx=False)
        return float((s * co_sig).sum() + (a * co_alb).sum())

    fd = (f(pts + h * v) - f(pts - h * v)) / (2 * h)
    analytic = float((dpts * v).sum())
    assert abs(analytic - fd) / max(abs(fd), 1e-12) < 1e-5


def test_clone_is_independent():
    field = small_field(seed=15)
    twin = field.clone()
    pts = np.random.default_rng(4).uniform(-1.0, 1.0, size=(5, 3))
    before = field.forward(pts, need_ctx=False)[0].copy()
    for p in twin.parameters():
        p.value += 0.5
    after = field.forward(pts, need_ctx=False)[0]
    assert np.array_equal(before, after)
    names = [p.name for p in field.parameters()]
    assert names == [p.name for p in twin.parameters()]


def test_environment_gradient_matches_fd():
    env = small_env(seed=16)
    rng = np.random.default_rng(5)
    dirs = rng.standard_normal((10, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    co = rng.standard_normal((10, 3))

    rgb, ctx = env.forward(dirs)
    zero_grads(env.parameters())
    env.backward(ctx, co)

    params = env.parameters()
    direction = random_direction(params, rng)
    analytic = tape_dot(params, direction)
    fd = directional_fd(lambda: float((env.forward(dirs, need_ctx=False)[0] * co).sum()), params, direction)
    assert abs(analytic - fd) / max(abs(fd), 1e-12) < 1e-6


def test_environment_output_range():
    env = small_env(seed=17)
    dirs = np.random.default_rng(6).standard_normal((64, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rgb, _ = env.forward(dirs, need_ctx=False)
    assert (rgb >= 0.0).all() and (rgb <= 1.0).all()
