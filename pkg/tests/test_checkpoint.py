import os

import numpy as np
import pytest

from scorefield.checkpoint import pack_string, read_checkpoint, unpack_string, write_checkpoint
from scorefield.config import RunConfig
from scorefield.errors import CheckpointError, ConfigError
from scorefield.optim import Adam
from scorefield.params import Parameter


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    sections = {
        "a/one": rng.standard_normal((3, 4)).astype(np.float32),
        "a/two": rng.standard_normal((2, 2, 2)),
        "b/ints": np.arange(10, dtype=np.int64),
        "b/bytes": np.frombuffer(b"hello", dtype=np.uint8).copy(),
        "scalar": np.array([7], dtype=np.int32),
    }
    path = tmp_path / "state.ckpt"
    write_checkpoint(str(path), sections)
    back = read_checkpoint(str(path))
    assert set(back) == set(sections)
    for k, v in sections.items():
        assert back[k].dtype == v.dtype
        assert np.array_equal(back[k], v)


def test_checkpoint_is_byte_deterministic(tmp_path):
    sections = {"x": np.linspace(0, 1, 32).astype(np.float32), "y": np.arange(4, dtype=np.int64)}
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    write_checkpoint(str(p1), sections)
    write_checkpoint(str(p2), sections)
    assert p1.read_bytes() == p2.read_bytes()


def test_corrupt_files_are_rejected(tmp_path):
    path = tmp_path / "state.ckpt"
    write_checkpoint(str(path), {"x": np.zeros(4, dtype=np.float32)})
    raw = path.read_bytes()

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        read_checkpoint(str(bad_magic))

    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(raw[:-3])
    with pytest.raises(CheckpointError):
        read_checkpoint(str(truncated))

    trailing = tmp_path / "trail.ckpt"
    trailing.write_bytes(raw + b"\x00")
    with pytest.raises(CheckpointError):
        read_checkpoint(str(trailing))


def test_pack_string_round_trip():
    arr = pack_string("stage: fine, κ=3")  # non-ascii survives
    assert unpack_string(arr) == "stage: fine, κ=3"


def test_atomic_write_leaves_no_partial_file(tmp_path):
    path = tmp_path / "state.ckpt"
    write_checkpoint(str(path), {"x": np.zeros(8)})
    before = path.read_bytes()

    class Hostile:
        dtype = np.dtype(np.float64)
        shape = (4,)
        ndim = 1

        def __getattr__(self, name):
            raise RuntimeError("boom")

    with pytest.raises(Exception):
        write_checkpoint(str(path), {"x": Hostile()})
    assert path.read_bytes() == before  # old file intact
    assert os.listdir(tmp_path) == ["state.ckpt"]  # no temp debris


def test_adam_state_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    params = [Parameter(rng.standard_normal((4, 3)), name="w"), Parameter(rng.standard_normal(5), name="b")]
    opt = Adam(params, lr=1e-2)
    for _ in range(3):
        for p in params:
            p.grad[:] = rng.standard_normal(p.value.shape)
        opt.step()
    path = tmp_path / "opt.ckpt"
    write_checkpoint(str(path), opt.state_arrays())

    params2 = [Parameter(p.value.copy(), name=p.name) for p in params]
    opt2 = Adam(params2, lr=1e-2)
    opt2.load_state_arrays(read_checkpoint(str(path)))
    for p in params2:
        p.grad[:] = 0.25
    for p, q in zip(params, params2):
        q_val = q.value.copy()
    for p in params:
        p.grad[:] = 0.25
    opt.step()
    opt2.step()
    for p, q in zip(params, params2):
        assert np.array_equal(p.value, q.value)


def test_adam_rejects_duplicate_names():
    with pytest.raises(ValueError):
        Adam([Parameter(np.zeros(2), name="w"), Parameter(np.zeros(3), name="w")])


def test_adam_decreases_quadratic():
    rng = np.random.default_rng(2)
    target = rng.standard_normal(6)
    p = Parameter(np.zeros(6), name="x")
    opt = Adam([p], lr=0.05)
    for _ in range(400):
        p.grad[:] = p.value - target
        opt.step()
    assert np.abs(p.value - target).max() < 1e-3


def test_lr_scale_is_respected():
    p_fast = Parameter(np.zeros(1), name="fast", lr_scale=1.0)
    p_slow = Parameter(np.zeros(1), name="slow", lr_scale=0.1)
    opt = Adam([p_fast, p_slow], lr=0.1)
    p_fast.grad[:] = 1.0
    p_slow.grad[:] = 1.0
    opt.step()
    assert abs(p_fast.value[0]) > abs(p_slow.value[0]) * 5


def test_config_json_round_trip():
    cfg = RunConfig.desk()
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_json('{"no_such_knob": 3}')


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(occupancy_resolution=100).validate()  # not a power of two
    with pytest.raises(ConfigError):
        RunConfig(coarse_iters=0).validate()
    with pytest.raises(ConfigError):
        RunConfig(fine_res=250, latent_res=64).validate()  # not divisible
    RunConfig.tiny().validate()
    RunConfig.rig8().validate()


def test_config_hash_tracks_content():
    a = RunConfig.desk()
    b = a.replace(seed=a.seed + 1)
    assert a.config_hash() != b.config_hash()
