import numpy as np
import pytest

from alkd import model as M
from alkd import tensor as T
from alkd.errors import ConfigError, DataError, StoreFormatError
from alkd.optim import OptimizerState
from alkd.text import Batch
from helpers import fd_grad, max_rel_err


def tiny_cfg(**kw):
    base = dict(n_layers=1, d_model=8, n_heads=2, d_ff=16, vocab_size=16,
                max_len=8, dropout_rate=0.1, teacher_dim=6, use_projection=True)
    base.update(kw)
    return M.ModelConfig(**base)


def make_batch(ids, valid=None, mlm=None):
    ids = np.asarray(ids, dtype=np.int32)
    valid = np.ones_like(ids, bool) if valid is None else np.asarray(valid, bool)
    mlm = np.zeros_like(ids, bool) if mlm is None else np.asarray(mlm, bool)
    return Batch(ids, ids.copy(), valid, mlm, [f"s{i}" for i in range(ids.shape[0])])


class TestInit:
    def test_same_seed_bit_identical(self):
        a = M.init_model(tiny_cfg(), np.random.default_rng(5))
        b = M.init_model(tiny_cfg(), np.random.default_rng(5))
        assert set(a.params) == set(b.params)
        for k in a.params:
            assert a.params[k].data.tobytes() == b.params[k].data.tobytes()

    def test_truncation_bound_and_special_inits(self):
        m = M.init_model(tiny_cfg(), np.random.default_rng(1))
        assert np.abs(m["tok_emb"].data).max() <= 2 * M.INIT_STD + 1e-12
        assert np.all(m["layer0.ln1.gain"].data == 1.0)
        assert np.all(m["layer0.bq"].data == 0.0)
        assert np.all(m["mlm_bias"].data == 0.0)

    def test_embedding_std_near_sigma(self):
        m = M.init_model(tiny_cfg(vocab_size=2048, d_model=64, n_heads=4),
                         np.random.default_rng(2))
        std = float(m["tok_emb"].data.std())
        assert abs(std - 0.02) <= 0.003

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            M.init_model(tiny_cfg(d_model=10, n_heads=4), np.random.default_rng(0))
        with pytest.raises(ConfigError):
            tiny_cfg(dropout_rate=1.0).validate()


class TestEncode:
    def test_zero_weights_degenerate_forward(self):
        cfg = tiny_cfg(use_projection=False, teacher_dim=8)
        m = M.init_model(cfg, np.random.default_rng(3))
        for name, p in m.params.items():
            if any(s in name for s in ("wq", "wk", "wv", "wo", "w1", "w2")):
                p.data = np.zeros_like(p.data)
        batch = make_batch([[2, 5]])
        out = M.encode(m, batch, train_mode=False)
        stream = m["tok_emb"].data[[2, 5]] + m["pos_emb"].data[:2]
        mu = stream.mean(-1, keepdims=True)
        var = ((stream - mu) ** 2).mean(-1, keepdims=True)
        expect = (stream - mu) / np.sqrt(var + M.LN_EPS)
        assert np.allclose(out.data[0], expect, atol=1e-6)

    def test_padding_invariance(self):
        cfg = tiny_cfg()
        m = M.init_model(cfg, np.random.default_rng(4))
        short = make_batch([[2, 5, 6]])
        padded = make_batch([[2, 5, 6, 0, 0, 0]], valid=[[1, 1, 1, 0, 0, 0]])
        a = M.encode(m, short).data
        b = M.encode(m, padded).data[:, :3]
        assert np.max(np.abs(a - b)) <= 1e-5

    def test_eval_mode_deterministic(self):
        m = M.init_model(tiny_cfg(), np.random.default_rng(6))
        batch = make_batch([[2, 4, 7], [2, 9, 0]], valid=[[1, 1, 1], [1, 1, 0]])
        assert M.encode(m, batch).data.tobytes() == M.encode(m, batch).data.tobytes()

    def test_train_mode_dropout_changes_output(self):
        m = M.init_model(tiny_cfg(), np.random.default_rng(6))
        batch = make_batch([[2, 4, 7]])
        a = M.encode(m, batch, train_mode=True, rng=np.random.default_rng(1))
        b = M.encode(m, batch, train_mode=False)
        assert not np.allclose(a.data, b.data)

    def test_input_errors(self):
        m = M.init_model(tiny_cfg(), np.random.default_rng(0))
        with pytest.raises(DataError, match="vocab_size"):
            M.encode(m, make_batch([[2, 99]]))
        with pytest.raises(DataError, match="max_len"):
            M.encode(m, make_batch([[2] * 9]))


class TestHeads:
    def test_mlm_logits_matches_tied_oracle(self):
        m = M.init_model(tiny_cfg(), np.random.default_rng(7))
        batch = make_batch([[2, 4, 7]])
        h = M.encode(m, batch)
        logits = M.mlm_logits(m, h)
        assert logits.shape == (1, 3, 16)
        oracle = h.data @ m["tok_emb"].data.T + m["mlm_bias"].data
        assert np.allclose(logits.data, oracle, atol=1e-6)

    def test_gradient_reaches_embedding_through_head(self):
        m = M.init_model(tiny_cfg(), np.random.default_rng(8))
        batch = make_batch([[2, 4, 7]])
        with T.record() as tape:
            loss = T.reduce_sum(M.mlm_logits(m, M.encode(m, batch)))
        T.backward(loss, tape)
        assert m["tok_emb"].grad is not None and np.abs(m["tok_emb"].grad).sum() > 0

    def test_projection_identity_when_dims_match(self):
        m = M.init_model(tiny_cfg(use_projection=False, teacher_dim=8), np.random.default_rng(0))
        h = M.encode(m, make_batch([[2, 3]]))
        assert M.project(m, h) is h

    def test_projection_zero_matrix(self):
        m = M.init_model(tiny_cfg(), np.random.default_rng(0))
        m["proj"].data = np.zeros_like(m["proj"].data)
        out = M.project(m, M.encode(m, make_batch([[2, 3]])))
        assert out.shape == (1, 2, 6) and np.all(out.data == 0.0)

    def test_projection_disabled_dim_mismatch(self):
        m = M.init_model(tiny_cfg(use_projection=False, teacher_dim=6), np.random.default_rng(0))
        with pytest.raises(ConfigError):
            M.project(m, M.encode(m, make_batch([[2, 3]])))

    def test_projection_gradient_check(self):
        with T.default_dtype(np.float64):
            cfg = tiny_cfg()
            m = M.init_model(cfg, np.random.default_rng(9))
            batch = make_batch([[2, 4, 7]])
            rngw = np.random.default_rng(10)
            w = T.constant(rngw.standard_normal((1, 3, 6)))

            def loss_fn():
                return T.reduce_sum(T.mul(M.project(m, M.encode(m, batch)), w)).item()

            with T.record() as tape:
                loss = T.reduce_sum(T.mul(M.project(m, M.encode(m, batch)), w))
            T.backward(loss, tape)
            ad = m["proj"].grad.copy()
            (fd,) = fd_grad(loss_fn, [m["proj"].data])
        assert max_rel_err(ad, fd) < 1e-4


class TestCheckpoint:
    def _model_opt(self, seed=11):
        m = M.init_model(tiny_cfg(), np.random.default_rng(seed))
        opt = OptimizerState.for_params(m.params)
        rng = np.random.default_rng(seed + 1)
        for k in opt.m:
            opt.m[k] = rng.standard_normal(opt.m[k].shape).astype(np.float32)
            opt.v[k] = np.abs(rng.standard_normal(opt.v[k].shape)).astype(np.float32)
        opt.step = 17
        return m, opt

    def test_roundtrip_bit_exact(self, tmp_path):
        m, opt = self._model_opt()
        p = tmp_path / "m.alkc"
        M.save_checkpoint(m, opt, 17, p, vocab_tokens=["[PAD]", "[UNK]", "[CLS]", "[MASK]", "a"])
        m2, opt2, step, vocab = M.load_checkpoint(p)
        assert step == 17 and opt2.step == 17
        assert vocab[-1] == "a"
        for k in m.params:
            assert m.params[k].data.tobytes() == m2.params[k].data.tobytes()
            assert opt.m[k].tobytes() == opt2.m[k].tobytes()
            assert opt.v[k].tobytes() == opt2.v[k].tobytes()

    def test_write_read_write_identical_bytes(self, tmp_path):
        m, opt = self._model_opt()
        p1, p2 = tmp_path / "a.alkc", tmp_path / "b.alkc"
        M.save_checkpoint(m, opt, 3, p1)
        m2, opt2, step, _ = M.load_checkpoint(p1)
        M.save_checkpoint(m2, opt2, step, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_config_names_tensor(self, tmp_path):
        m, opt = self._model_opt()
        p = tmp_path / "m.alkc"
        M.save_checkpoint(m, opt, 0, p)
        with pytest.raises(StoreFormatError, match="tok_emb"):
            M.load_checkpoint(p, expected_config=tiny_cfg(d_model=16))

    def test_truncation_rejected(self, tmp_path):
        m, opt = self._model_opt()
        p = tmp_path / "m.alkc"
        M.save_checkpoint(m, opt, 0, p)
        data = p.read_bytes()
        p.write_bytes(data[:-11])
        with pytest.raises(StoreFormatError, match="truncated"):
            M.load_checkpoint(p)


def test_small_full_model_gradient_check():
    with T.default_dtype(np.float64):
        cfg = tiny_cfg(n_layers=1, d_model=8, n_heads=2, d_ff=12, vocab_size=12,
                       max_len=4, teacher_dim=5)
        m = M.init_model(cfg, np.random.default_rng(20))
        batch = make_batch([[2, 5, 7, 0]], valid=[[1, 1, 1, 0]])
        rngw = np.random.default_rng(21)
        w_h = T.constant(rngw.standard_normal((1, 4, 12)))
        w_p = T.constant(rngw.standard_normal((1, 4, 5)))

        def forward():
            h = M.encode(m, batch, train_mode=False)
            return T.add(
                T.reduce_sum(T.mul(M.mlm_logits(m, h), w_h)),
                T.reduce_sum(T.mul(M.project(m, h), w_p)),
            )

        with T.record() as tape:
            loss = forward()
        T.backward(loss, tape)
        for name, p in m.params.items():
            ad = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
            (fd,) = fd_grad(lambda: forward().item(), [p.data])
            assert max_rel_err(ad, fd) < 1e-4, name
