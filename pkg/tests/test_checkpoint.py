import struct

import numpy as np
import pytest

from dbpn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from dbpn.network import NetworkConfig, build
from dbpn.optim import Adam
from dbpn.tensor import Tensor, no_grad

CFG = NetworkConfig(scale=2, n0=6, nR=3, stages=2, dense=True, name="tiny")


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_round_trip(tmp_path, dtype):
    net = build(CFG, seed=3, dtype=dtype)
    save_checkpoint(tmp_path / "a.ckpt", net, train_state={"iteration": 7})
    ck = load_checkpoint(tmp_path / "a.ckpt")
    assert ck.net.config == CFG and ck.net.dtype == dtype
    assert ck.train_state == {"iteration": 7}
    for (n1, p), (n2, q) in zip(net.named_parameters(), ck.net.named_parameters()):
        assert n1 == n2 and p.data.dtype == q.data.dtype
        np.testing.assert_array_equal(p.data, q.data)
    x = Tensor(np.random.default_rng(0).random((1, 1, 3, 3)).astype(dtype))
    with no_grad():
        np.testing.assert_array_equal(net(x).data, ck.net(x).data)


def test_optimizer_state_restored(tmp_path):
    net = build(CFG)
    opt = Adam(net.parameters(), lr=3e-4)
    for p in net.parameters():
        p.grad = np.ones_like(p.data)
    opt.step()
    save_checkpoint(tmp_path / "b.ckpt", net, opt)
    ck = load_checkpoint(tmp_path / "b.ckpt")
    opt2 = Adam(ck.net.parameters(), lr=1.0)
    ck.restore_optimizer(opt2)
    assert opt2.state.t == 1 and opt2.lr == 3e-4
    for a, b in zip(opt.state.v, opt2.state.v):
        np.testing.assert_array_equal(a, b)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.ckpt"):
        load_checkpoint(tmp_path / "nope.ckpt")


def _corrupt(tmp_path, mutate):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, build(CFG))
    path.write_bytes(mutate(path.read_bytes()))
    return path


@pytest.mark.parametrize(
    "mutate,match",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], "version 9"),
        (lambda b: b[:-10], "truncated"),
        (lambda b: b + b"\0", "trailing"),
    ],
)
def test_rejects_bad_files(tmp_path, mutate, match):
    with pytest.raises(CheckpointError, match=match):
        load_checkpoint(_corrupt(tmp_path, mutate))


def test_rejects_parameter_mismatch(tmp_path):
    net = build(CFG)
    net.config = NetworkConfig(scale=2, n0=6, nR=3, stages=3, name="other")
    save_checkpoint(tmp_path / "d.ckpt", net)
    with pytest.raises(CheckpointError, match="mismatch"):
        load_checkpoint(tmp_path / "d.ckpt")


def test_save_is_deterministic(tmp_path):
    for name in ("e1", "e2"):
        save_checkpoint(tmp_path / name, build(CFG, seed=4), train_state={"b": 1, "a": 2})
    assert (tmp_path / "e1").read_bytes() == (tmp_path / "e2").read_bytes()
