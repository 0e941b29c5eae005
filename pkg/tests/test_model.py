import numpy as np
import pytest

from deskt5.model import (Batch, ModelConfig, OptState, Params, adam_step, finite_diff_check, forward,
                          greedy_decode, greedy_decode_batch, init_model, loss_and_grads, make_batch,
                          param_shapes, per_example_loss)
from deskt5.vocab import EOS, PAD

TINY = ModelConfig(vocab_size=50, num_layers=1, d_model=8, num_heads=2, d_ff=16, max_len=16)


def random_batch(rng, cfg, B=3, smin=2, smax=9, tmin=1, tmax=7):
    lo = 3
    inputs = [rng.integers(lo, cfg.vocab_size, size=rng.integers(smin, smax + 1)).tolist() for _ in range(B)]
    targets = [rng.integers(lo, cfg.vocab_size, size=rng.integers(tmin, tmax + 1)).tolist() + [EOS]
               for _ in range(B)]
    return make_batch(inputs, targets)


def closed_form_count(V, L, d, f, n):
    enc = L * (2 * d + 4 * d * d + 2 * d * f) + d
    dec = L * (3 * d + 8 * d * d + 2 * d * f) + d
    return V * d + 2 * n * d + enc + dec


@pytest.mark.parametrize("cfg", [TINY, ModelConfig(360), ModelConfig(1000, 3, 32, 8, 80, 40)])
def test_param_count_closed_form(cfg):
    p = init_model(cfg, 0)
    assert p.num_params() == closed_form_count(cfg.vocab_size, cfg.num_layers, cfg.d_model, cfg.d_ff, cfg.max_len)
    assert list(p.tensors) == list(param_shapes(cfg))


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        ModelConfig(10, d_model=10, num_heads=4)
    with pytest.raises(ValueError):
        ModelConfig(10, num_layers=0)


def test_init_scale_and_determinism():
    a, b = init_model(ModelConfig(360), 5), init_model(ModelConfig(360), 5)
    for name, w in a.tensors.items():
        assert np.array_equal(w, b[name])
        assert w.dtype == np.float32
        if w.ndim == 2:
            fan_in = 64 if name in ("embed", "enc_pos", "dec_pos") else w.shape[0]
            assert np.abs(w).max() <= 1 / np.sqrt(fan_in)


def test_make_batch_shift_and_masks():
    b = make_batch([[5, 6, 7], [8]], [[9, 10, EOS], [EOS]])
    assert b.dec_in.tolist() == [[PAD, 9, 10], [PAD, EOS, PAD]]
    assert b.dec_mask.tolist() == [[True] * 3, [True, False, False]]
    assert b.enc_mask.tolist() == [[True] * 3, [True, False, False]]
    assert b.num_tokens == 3 + 1 + 3 + 1
    with pytest.raises(ValueError):
        make_batch([[]], [[EOS]])


@pytest.mark.parametrize("seed", range(5))
def test_gradient_check_tiny(seed):
    rng = np.random.default_rng(seed)
    p = init_model(TINY, rng, dtype=np.float64)
    # move gains away from one so their gradients are exercised generically
    for name, w in p.tensors.items():
        if w.ndim == 1:
            w[:] = rng.uniform(0.5, 1.5, size=w.shape)
    b = random_batch(rng, TINY)
    assert finite_diff_check(p, b, eps=1e-5, num_coords=300, seed=seed) < 1e-4


def test_gradient_check_detects_wrong_gradient():
    rng = np.random.default_rng(0)
    p = init_model(TINY, rng, dtype=np.float64)
    b = random_batch(rng, TINY)
    # a coarse step gives a visibly wrong numerical derivative
    assert finite_diff_check(p, b, eps=1e-1, num_coords=300) > 1e-3


def test_initial_loss_near_uniform():
    cfg = ModelConfig(360)
    p = init_model(cfg, 0)
    b = random_batch(np.random.default_rng(0), cfg, B=16, smax=40, tmax=20)
    _, loss = forward(p, b)
    assert abs(loss - np.log(cfg.vocab_size)) / np.log(cfg.vocab_size) < 0.10


def test_decoder_is_causal():
    rng = np.random.default_rng(1)
    p = init_model(TINY, rng)
    b = random_batch(rng, TINY, B=1, tmin=6, tmax=6)
    logits, _ = forward(p, b)
    b2 = Batch(b.enc_ids, b.enc_mask, b.dec_in.copy(), b.dec_tgt, b.dec_mask)
    b2.dec_in[0, 4:] = 7
    logits2, _ = forward(p, b2)
    assert np.allclose(logits[0, :4], logits2[0, :4], atol=1e-6)
    assert not np.allclose(logits[0, 4:], logits2[0, 4:], atol=1e-6)


def test_padding_invariance():
    rng = np.random.default_rng(2)
    p = init_model(TINY, rng, dtype=np.float64)
    x, y = [5, 6, 7, 8], [9, 10, EOS]
    alone = make_batch([x], [y])
    padded = make_batch([x, [11] * 10], [y, [12] * 8 + [EOS]])
    la, _ = forward(p, alone)
    lp, _ = forward(p, padded)
    assert np.allclose(la[0], lp[0, :3], atol=1e-12)
    assert per_example_loss(la, alone)[0] == pytest.approx(per_example_loss(lp, padded)[0], abs=1e-12)
    # padding content is ignored
    padded.enc_ids[0, 4:] = 13
    padded.dec_in[0, 3:] = 14
    lq, _ = forward(p, padded)
    assert np.allclose(lp[0, :3], lq[0, :3], atol=1e-12)


def test_fully_masked_batch_and_bad_ids():
    p = init_model(TINY, 0)
    b = make_batch([[5]], [[EOS]])
    b.dec_mask[:] = False
    with pytest.raises(ValueError, match="masked"):
        forward(p, b)
    with pytest.raises(ValueError, match="outside"):
        forward(p, make_batch([[TINY.vocab_size]], [[EOS]]))


def test_nonfinite_loss_names_tensor():
    p = init_model(TINY, 0)
    p.tensors["dec0.ff.w1"][0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="dec0.ff.w1"):
        loss_and_grads(p, make_batch([[5, 6]], [[7, EOS]]))


def test_adam_first_step():
    rng = np.random.default_rng(3)
    p = init_model(TINY, rng, dtype=np.float64)
    b = random_batch(rng, TINY)
    _, g = loss_and_grads(p, b)
    st = OptState.zeros_like(p, lr=1e-3)
    p1, st1 = adam_step(p, g, st)
    assert st1.step == 1
    for name, w in p.tensors.items():
        gi = g[name]
        # bias-corrected first step: lr * g / (|g| + eps)
        expected = w - 1e-3 * gi / (np.abs(gi) + 1e-8)
        assert np.allclose(p1[name], expected, rtol=0, atol=1e-12)
        big = np.abs(gi) > 1e-4
        assert np.allclose((p1[name] - w)[big], -1e-3 * np.sign(gi[big]), atol=1e-6)


def test_adam_matches_reference_over_steps():
    rng = np.random.default_rng(4)
    p = init_model(TINY, rng, dtype=np.float64)
    st = OptState.zeros_like(p, lr=1e-2)
    m = {k: np.zeros_like(v) for k, v in p.tensors.items()}
    v = {k: np.zeros_like(x) for k, x in p.tensors.items()}
    ref = {k: x.copy() for k, x in p.tensors.items()}
    for t in range(1, 6):
        g = {k: rng.normal(size=x.shape) for k, x in p.tensors.items()}
        p, st = adam_step(p, g, st)
        for k in ref:
            m[k] = 0.9 * m[k] + 0.1 * g[k]
            v[k] = 0.999 * v[k] + 0.001 * g[k] ** 2
            mh, vh = m[k] / (1 - 0.9 ** t), v[k] / (1 - 0.999 ** t)
            ref[k] = ref[k] - 1e-2 * mh / (np.sqrt(vh) + 1e-8)
    for k in ref:
        assert np.allclose(p[k], ref[k], atol=1e-12)


def test_adam_does_not_mutate_inputs():
    p = init_model(TINY, 0)
    before = p.copy()
    st = OptState.zeros_like(p)
    g = {k: np.ones_like(v) for k, v in p.tensors.items()}
    adam_step(p, g, st)
    assert all(np.array_equal(before[k], p[k]) for k in p.tensors)
    assert st.step == 0 and not any(x.any() for x in st.m.values())


def _train(p, b, steps, lr=1e-2):
    st = OptState.zeros_like(p, lr=lr)
    for _ in range(steps):
        _, g = loss_and_grads(p, b)
        p, st = adam_step(p, g, st)
    return p


def test_eos_forcing_empty_target():
    cfg = ModelConfig(50, 1, 16, 2, 32, 16)
    p = init_model(cfg, 0)
    b = make_batch([[5, 6, 7]], [[EOS]])
    p = _train(p, b, 60)
    assert greedy_decode(p, [5, 6, 7], 10) == []


def test_greedy_decode_after_overfit_and_batch_consistency():
    cfg = ModelConfig(50, 1, 32, 4, 64, 16)
    rng = np.random.default_rng(0)
    inputs = [[5, 6, 7, 8], [9, 10], [11, 12, 13]]
    targets = [[20, 21, 22, EOS], [23, EOS], [24, 25, 26, 27, 28, EOS]]
    p = _train(init_model(cfg, rng), make_batch(inputs, targets), 300)
    outs = greedy_decode_batch(p, inputs, 12)
    assert outs == [t[:-1] for t in targets]
    assert [greedy_decode(p, x, 12) for x in inputs] == outs


def test_decode_respects_max_len():
    p = init_model(TINY, 0)
    out = greedy_decode(p, [5, 6], 3)
    assert len(out) <= 3
    with pytest.raises(ValueError):
        greedy_decode(p, list(range(3, 3 + TINY.max_len + 1)), 3)
