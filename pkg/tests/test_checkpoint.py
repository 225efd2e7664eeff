import numpy as np
import pytest

from cltta import netcore as nc
from cltta.bank import MemoryBank
from cltta.checkpoint import CheckpointError, load_model, load_run, save_model, save_run


def _model():
    m = nc.mlp_new([5, 8, 3], 4)
    nc.forward(m, np.random.default_rng(0).normal(size=(6, 5)), nc.TRAIN_STATS)
    return m


class TestModelCheckpoint:
    def test_bit_exact_roundtrip(self, tmp_path):
        m = _model()
        save_model(tmp_path / "m.ckpt", m, {"note": "x"})
        back, meta = load_model(tmp_path / "m.ckpt")
        assert back.dims == m.dims and back.seed == m.seed and meta["note"] == "x"
        for k, v in m.state_arrays().items():
            assert np.array_equal(v, back.state_arrays()[k])

    def test_identical_bytes(self, tmp_path):
        save_model(tmp_path / "a.ckpt", _model())
        save_model(tmp_path / "b.ckpt", _model())
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_corruption_detected(self, tmp_path):
        p = tmp_path / "m.ckpt"
        save_model(p, _model())
        raw = bytearray(p.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_model(p)

    def test_not_a_checkpoint(self, tmp_path):
        p = tmp_path / "x.ckpt"
        p.write_bytes(b"hello world, this is not a checkpoint")
        with pytest.raises(CheckpointError):
            load_model(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "m.ckpt"
        save_model(p, _model())
        p.write_bytes(p.read_bytes()[:-9])
        with pytest.raises(CheckpointError):
            load_model(p)


class TestRunCheckpoint:
    def test_roundtrip(self, tmp_path):
        m = _model()
        opt = nc.Adam(0.01)
        logits, cache = nc.forward(m, np.random.default_rng(1).normal(size=(6, 5)), nc.TRAIN_STATS)
        opt.step(m.params(), nc.backward(m, cache, logits, "bn"))
        bank = MemoryBank(3, 10).push(np.full((4, 3), 1 / 3))
        save_run(tmp_path / "r.ckpt", m, opt, bank)
        m2, opt2, bank2, _ = load_run(tmp_path / "r.ckpt")
        assert opt2.step_count == 1 and set(opt2.m) == set(opt.m)
        assert all(np.array_equal(opt.v[k], opt2.v[k]) for k in opt.v)
        assert np.array_equal(bank2.rows, bank.rows)

    def test_kind_checked(self, tmp_path):
        save_model(tmp_path / "m.ckpt", _model())
        with pytest.raises(CheckpointError):
            load_run(tmp_path / "m.ckpt")
