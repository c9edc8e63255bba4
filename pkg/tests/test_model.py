import numpy as np
import pytest

from biformer3d import engine, model as M
from biformer3d.domain import fibonacci_grid, sample_sparsity
from biformer3d.errors import ConfigError

CFG = M.ModelConfig(K=16, D=16, T=2, n_heads=2, d_ff=32, P=2,
                    decoder_hidden=24, head_hidden=8)
GRID = np.array([d.as_array() for d in fibonacci_grid(10)])


def _inputs(b=2, seed=0, l=10, k=16):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(b, l, 2 * k)).astype(np.float32)
    mask = np.stack([sample_sparsity(GRID[:l], 4) for _ in range(b)])
    return h, mask.astype(np.float32)


def _params(cfg=CFG, seed=0):
    return M.init_params(cfg, seed)


def test_config_validation():
    with pytest.raises(ConfigError):
        M.ModelConfig(K=16, D=15)  # odd width cannot split sig/geo
    with pytest.raises(ConfigError):
        M.ModelConfig(K=16, D=16, n_heads=3)  # heads must divide D
    with pytest.raises(ConfigError):
        M.ModelConfig(K=16, conv_kernel=4)  # even kernel has no center
    with pytest.raises(ConfigError):
        M.ModelConfig(K=0)
    cfg = M.ModelConfig(K=16)
    assert cfg.d_sig == cfg.d_geo == cfg.D // 2
    add = M.ModelConfig(K=16, token_mode="add")
    assert add.d_sig == add.d_geo == add.D
    with pytest.raises(ConfigError):
        M.ModelConfig(K=16, token_mode="stack")


def test_config_dict_round_trip():
    cfg = M.ModelConfig(K=32, D=64, T=3, with_refine=False, token_mode="add")
    assert M.ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        M.ModelConfig.from_dict({"K": 16, "bogus": 1})


def test_init_params_deterministic_and_name_keyed():
    p1 = _params(seed=5)
    p2 = _params(seed=5)
    for n in p1:
        np.testing.assert_array_equal(p1[n].data, p2[n].data)
    p3 = _params(seed=6)
    assert not np.array_equal(p1["sig.w"].data, p3["sig.w"].data)
    # same shape, different names: distinct draws
    assert p1["enc0.wq"].data.shape == p1["enc0.wk"].data.shape
    assert not np.array_equal(p1["enc0.wq"].data, p1["enc0.wk"].data)


def test_init_params_structure():
    p = _params()
    assert p["sig.w"].data.shape == (32, CFG.d_sig)
    assert p["geo.w"].data.shape == (CFG.geo_input_width, CFG.d_geo)
    assert p["refine.kernel"].data.tolist() == [0.0, 1.0, 0.0]  # identity
    assert np.all(p["enc0.ln1_scale"].data == 1.0)
    assert np.all(p["enc0.bq"].data == 0.0)
    M.validate_params(p, CFG)
    del p["dec.w2"]
    with pytest.raises(ConfigError):
        M.validate_params(p, CFG)


def test_forward_shapes_and_cues():
    h, mask = _inputs()
    out, cues = M.forward(h, mask, GRID, _params(), CFG)
    assert out.data.shape == (2, 10, 32)
    assert cues.data.shape == (2, 10, 2)
    assert out.data.dtype == np.float32

    cfg = M.ModelConfig(**{**CFG.to_dict(), "with_cue_heads": False})
    out2, cues2 = M.forward(h, mask, GRID, M.init_params(cfg, 0), cfg)
    assert cues2 is None


def test_measured_rows_bit_exact():
    h, mask = _inputs(b=3, seed=1)
    out, _ = M.forward(h, mask, GRID, _params(), CFG)
    sel = mask.astype(bool)
    np.testing.assert_array_equal(out.data[sel], h[sel])


def test_masked_content_invariance():
    h, mask = _inputs(b=2, seed=2)
    params = _params()
    out1, cues1 = M.forward(h, mask, GRID, params, CFG)
    garbage = h.copy()
    garbage[mask == 0] = 1e3 * np.random.default_rng(7).normal(
        size=garbage[mask == 0].shape
    ).astype(np.float32)
    out2, cues2 = M.forward(garbage, mask, GRID, params, CFG)
    missing = ~mask.astype(bool)
    np.testing.assert_array_equal(out1.data[missing], out2.data[missing])
    np.testing.assert_array_equal(cues1.data, cues2.data)


def test_forward_core_permutation_equivariance():
    h, mask = _inputs(b=2, seed=3)
    params = _params()
    fused, cues = M.forward_core(h, mask, GRID, params, CFG)
    rng = np.random.default_rng(11)
    perm = rng.permutation(10)
    fused_p, cues_p = M.forward_core(
        np.ascontiguousarray(h[:, perm]), np.ascontiguousarray(mask[:, perm]),
        GRID[perm], params, CFG,
    )
    assert np.max(np.abs(fused_p.data - fused.data[:, perm])) <= 1e-5
    assert np.max(np.abs(cues_p.data - cues.data[:, perm])) <= 1e-4


def test_forward_row_order_invariance_bit_exact():
    h, mask = _inputs(b=2, seed=4)
    params = _params()
    out, cues = M.forward(h, mask, GRID, params, CFG)
    perm = np.random.default_rng(13).permutation(10)
    out_p, cues_p = M.forward(
        np.ascontiguousarray(h[:, perm]), np.ascontiguousarray(mask[:, perm]),
        GRID[perm], params, CFG,
    )
    np.testing.assert_array_equal(out_p.data, out.data[:, perm])
    np.testing.assert_array_equal(cues_p.data, cues.data[:, perm])


def test_refine_identity_kernel_is_identity():
    h, mask = _inputs(b=1, seed=5)
    params = _params()
    fused, _ = M.forward_core(h, mask, GRID, params, CFG)
    refined = M.refine(fused, GRID, mask, params, CFG)
    np.testing.assert_array_equal(refined.data, fused.data)


def test_refine_hand_computed_delta():
    # one subject, three rows on a meridian (canonical order = given order),
    # averaging kernel; measured row must not move
    cfg = M.ModelConfig(K=2, D=8, T=1, n_heads=1, d_ff=8, P=1,
                        decoder_hidden=4, head_hidden=4)
    params = M.init_params(cfg, 0)
    k = np.array([0.25, 0.5, 0.25], dtype=np.float32)
    params["refine.kernel"] = engine.parameter(k)
    dirs = np.array([[0.0, 30.0, 1.5], [0.0, 0.0, 1.5], [0.0, -30.0, 1.5]])
    fused = engine.constant(
        np.arange(12, dtype=np.float32).reshape(1, 3, 4)
    )
    mask = np.array([[0.0, 1.0, 0.0]], dtype=np.float32)
    out = M.refine(fused, dirs, mask, params, cfg).data[0]
    x = fused.data[0]
    conv = np.empty_like(x)
    for c in range(4):  # zero-padded 3-tap convolution down each column
        col = x[:, c]
        conv[0, c] = 0.5 * col[0] + 0.25 * col[1]
        conv[1, c] = 0.25 * col[0] + 0.5 * col[1] + 0.25 * col[2]
        conv[2, c] = 0.25 * col[1] + 0.5 * col[2]
    np.testing.assert_allclose(out[0], conv[0], rtol=1e-6)
    np.testing.assert_array_equal(out[1], x[1])  # measured: untouched
    np.testing.assert_allclose(out[2], conv[2], rtol=1e-6)


def test_no_measured_rows_rejected():
    h, mask = _inputs(b=2)
    mask[1] = 0
    with pytest.raises(ConfigError):
        M.forward(h, mask, GRID, _params(), CFG)


def test_bad_shapes_rejected():
    h, mask = _inputs()
    with pytest.raises(ConfigError):
        M.forward(h[0], mask, GRID, _params(), CFG)
    with pytest.raises(ConfigError):
        M.forward(h, mask[:, :5], GRID, _params(), CFG)
    with pytest.raises(ConfigError):
        M.forward(h, mask, GRID[:5], _params(), CFG)


def test_token_mode_add_runs():
    cfg = M.ModelConfig(K=16, D=16, T=1, n_heads=2, d_ff=32, P=2,
                        decoder_hidden=16, head_hidden=8, token_mode="add")
    params = M.init_params(cfg, 0)
    h, mask = _inputs()
    out, cues = M.forward(h, mask, GRID, params, cfg)
    assert out.data.shape == (2, 10, 32)
    sel = mask.astype(bool)
    np.testing.assert_array_equal(out.data[sel], h[sel])


def test_without_sinusoidal_runs():
    cfg = M.ModelConfig(K=16, D=16, T=1, n_heads=2, d_ff=32, P=2,
                        decoder_hidden=16, head_hidden=8,
                        with_sinusoidal=False)
    params = M.init_params(cfg, 0)
    assert params["geo.w"].data.shape[0] == 3  # raw coords only
    h, mask = _inputs()
    out, _ = M.forward(h, mask, GRID, params, cfg)
    assert out.data.shape == (2, 10, 32)


def test_gradients_reach_every_parameter():
    h, mask = _inputs(b=1)
    params = _params()
    out, cues = M.forward(h, mask, GRID, params, CFG)
    loss = engine.add(engine.sum_(engine.mul(out, out)),
                      engine.sum_(engine.mul(cues, cues)))
    loss.backward()
    missing = [n for n, t in params.items() if t.grad is None]
    assert missing == [], f"no gradient reached {missing}"
