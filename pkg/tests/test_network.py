from pathlib import Path

import numpy as np
import pytest

from dbpn import resample
from dbpn.gradcheck import SUITES
from dbpn.network import (
    PRESET_NAMES,
    TABLE1_DEPTH,
    NetworkConfig,
    build,
    collected_maps,
    count_params,
    describe,
    preset,
    published_params_k,
)
from dbpn.tensor import DimensionError, Tensor, no_grad

GOLDEN = Path(__file__).parent / "data" / "dbpn_ss_x2_summary.txt"


def tiny(**kw):
    base = dict(scale=2, n0=8, nR=4, stages=3, name="tiny")
    base.update(kw)
    return NetworkConfig(**base)


def test_summary_golden():
    assert describe(build(preset("DBPN-SS", 2))).format() + "\n" == GOLDEN.read_text()


@pytest.mark.parametrize("name", sorted(TABLE1_DEPTH))
def test_depth(name):
    assert describe(build(preset(name, 2))).depth == TABLE1_DEPTH[name]


def test_frozen_totals():
    assert count_params(build(preset("DBPN-SS", 2))) == 106_996
    assert count_params(build(preset("DBPN", 2))) == 8_811_086
    assert count_params(build(preset("DBPN-R64-10", 4))) == 1_614_155


def test_bottleneck_census():
    assert len(describe(build(preset("D-DBPN", 4))).bottlenecks) == 10
    assert len(describe(build(preset("D-DBPN-L", 4))).bottlenecks) == 4
    assert describe(build(preset("DBPN-L", 4))).bottlenecks == []


def test_published_lookup():
    assert published_params_k("DBPN-L", 8) == 4871
    assert published_params_k("DBPN-R64-10", 4) == 1614
    assert published_params_k("DBPN-R64-10", 2) is None
    assert set(PRESET_NAMES) >= set(TABLE1_DEPTH)


def test_unknown_preset_and_bad_configs():
    with pytest.raises(ValueError):
        preset("DBPN-XL")
    with pytest.raises(ValueError):
        NetworkConfig(scale=3)
    with pytest.raises(ValueError):
        NetworkConfig(recurrent="shared", stages=2)
    with pytest.raises(ValueError):
        NetworkConfig(n0=8, nR=16)


@pytest.mark.parametrize("kw", [{}, {"dense": True}, {"recurrent": "transition", "iterations": 2, "dense": True}])
@pytest.mark.parametrize("s", [2, 4, 8])
def test_forward_shape(kw, s):
    net = build(tiny(scale=s, **kw))
    with no_grad():
        for hw in [(1, 1), (5, 3)]:
            assert net(Tensor(np.zeros((2, 1) + hw, np.float32))).shape == (2, 1, hw[0] * s, hw[1] * s)


def test_input_channel_check():
    with pytest.raises(DimensionError):
        build(tiny())(Tensor(np.zeros((1, 3, 4, 4), np.float32)))


def test_recurrent_count_independent_of_iterations():
    counts = {count_params(build(preset("DBPN-R64-10", 2, iterations=k))) - 64 * k * 3 * 9 for k in (1, 3, 10)}
    assert len(counts) == 1  # only the reconstruction layer grows with k
    mr = {k: build(preset("DBPN-MR64-3", 2, iterations=k)) for k in (1, 3)}
    assert len(mr[1].units) == len(mr[3].units) == 13
    assert collected_maps(mr[3].config) == 3


def test_error_feedback_off_shrinks_stages_to_a_third():
    ef = build(preset("DBPN-S", 4))
    plain = build(preset("DBPN-S", 4, error_feedback=False))
    stage = lambda net: sum(p.size for u in net.units for p in u.parameters())  # noqa: E731
    assert 3 * stage(plain) == stage(ef)


def test_residual_skip_is_bicubic():
    cfg = tiny(residual=True)
    net = build(cfg, dtype=np.float64)
    net.reconstruction.weight.data[...] = 0.0
    x = np.random.default_rng(0).random((1, 1, 4, 5))
    with no_grad():
        out = net(Tensor(x)).data
    np.testing.assert_allclose(out[0, 0], resample.upscale(x[0, 0], 2), atol=1e-12)
    plain = build(tiny(), dtype=np.float64)
    plain.reconstruction.weight.data[...] = 0.0
    with no_grad():
        assert np.all(plain(Tensor(x)).data == 0)


def test_build_is_seeded():
    a, b, c = build(tiny(), seed=1), build(tiny(), seed=1), build(tiny(), seed=2)
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))
    assert not np.array_equal(a.units[0].layers[0].weight.data, c.units[0].layers[0].weight.data)


def test_unique_parameter_names():
    names = [n for n, _ in build(preset("DBPN-MR64-3", 2)).named_parameters()]
    assert len(names) == len(set(names))


def test_config_round_trip():
    cfg = preset("D-DBPN-L", 8)
    assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("seed", [0, 2])
def test_network_gradcheck(seed):
    reports = SUITES["network"](seed=seed)
    assert max(r.max_rel_error for r in reports.values()) < 1e-4
    assert all(r.skipped < r.probed // 4 for r in reports.values())
