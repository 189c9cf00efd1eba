import numpy as np
import pytest

from scorefield.errors import ConfigError
from scorefield.guidance import ConditionSet, DiffusionSchedule, GaussianOraclePrior, SDSConfig, cfg_combine
from scorefield.remote import (
    ConditionTable,
    GuidanceServer,
    RemoteGuidanceClient,
    decode_reply,
    decode_request,
    encode_reply,
    encode_request,
    request_size,
)


def test_request_round_trip():
    table = ConditionTable([ConditionSet(text="bird")])
    cid = table.id_of(ConditionSet(text="bird"))
    x = np.random.default_rng(0).standard_normal((5, 7, 3)).astype(np.float32)
    blob = encode_request(x, cid, 0.37)
    arr, cond_id, t = decode_request(blob)
    assert t == pytest.approx(0.37)
    assert cond_id == cid
    assert np.array_equal(arr, x)
    assert len(blob) == request_size(blob)


def test_null_condition_is_id_zero():
    table = ConditionTable()
    assert table.id_of(ConditionSet.null()) == 0
    assert table.cond_of(0).is_null
    # registering the same condition twice keeps one id
    c = ConditionSet(text="twice")
    assert table.add(c) == table.add(c)


def test_reply_round_trip():
    y = np.random.default_rng(1).standard_normal((4, 4, 3)).astype(np.float32)
    blob = encode_reply(y)
    out = decode_reply(blob, y.shape)
    assert np.array_equal(out, y)


def test_decode_rejects_malformed():
    x = np.zeros((2, 2, 3), dtype=np.float32)
    blob = encode_request(x, 0, 0.5)
    with pytest.raises(ConfigError):
        decode_request(blob[:10])  # truncated header
    bad_rank = bytearray(blob)
    bad_rank[16] = 200  # ndim field far beyond the cap
    with pytest.raises(ConfigError):
        decode_request(bytes(bad_rank))


def test_unknown_condition_id_rejected():
    table = ConditionTable()
    with pytest.raises(KeyError):
        table.cond_of(42)
    with pytest.raises(KeyError):
        table.id_of(ConditionSet(text="never registered"))


def test_server_round_trip_matches_local_model():
    """A remote client must return exactly what the wrapped model computes,
    up to the f32 quantization of the wire format."""
    rng = np.random.default_rng(2)
    x_star = rng.uniform(0, 1, size=(6, 6, 3))
    model = GaussianOraclePrior(x_star, s=0.3)
    table = ConditionTable()
    with GuidanceServer(model, table) as server:
        client = RemoteGuidanceClient(("127.0.0.1", server.port), table, model.schedule)
        with client:
            for t in (0.2, 0.8):
                x_t = rng.standard_normal((6, 6, 3))
                remote = client.denoise(x_t, ConditionSet.null(), t)
                local = model.denoise(x_t.astype(np.float32).astype(np.float64), ConditionSet.null(), t)
                assert np.abs(remote - local.astype(np.float32)).max() < 1e-6


def test_server_handles_multiple_conditions():
    rng = np.random.default_rng(3)
    from scorefield.guidance import ConditionedOraclePrior

    targets = {
        ConditionedOraclePrior.null_key(): rng.uniform(0, 1, (4, 4, 3)),
        ("cat", False): rng.uniform(0, 1, (4, 4, 3)),
    }
    model = ConditionedOraclePrior(targets, s=0.2)
    cond = ConditionSet(text="cat")
    table = ConditionTable([cond])
    with GuidanceServer(model, table) as server:
        with RemoteGuidanceClient(("127.0.0.1", server.port), table, model.schedule) as client:
            x_t = rng.standard_normal((4, 4, 3))
            # classifier-free guidance across the wire: two calls, one combine
            combined = cfg_combine(client, x_t, cond, 0.4, 3.0)
            expected = cfg_combine(model, x_t.astype(np.float32).astype(np.float64), cond, 0.4, 3.0)
            assert np.abs(combined - expected).max() < 1e-5


def test_client_checks_resolution():
    model = GaussianOraclePrior(np.zeros((4, 4, 3)))
    table = ConditionTable()
    with GuidanceServer(model, table) as server:
        client = RemoteGuidanceClient(("127.0.0.1", server.port), table, DiffusionSchedule(), resolution=(4, 4))
        with client:
            from scorefield.guidance import sds_gradient

            class Fake:
                color = np.zeros((8, 8, 3))
                alpha = np.zeros((8, 8))

                def backward(self, dc, da=None):
                    pass

            with pytest.raises(ConfigError):
                sds_gradient(Fake(), client, ConditionSet.null(), SDSConfig.coarse(), np.random.default_rng(0))
