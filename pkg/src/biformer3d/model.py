"""The BiFormer3D network.

Pipeline per subject: zero out unmeasured rows and encode signals, build
geometric tokens from direction coordinates, run a pre-norm transformer
encoder in which unmeasured directions never serve as attention keys,
decode every row back to a waveform pair, fuse so measured rows pass
through exactly, then refine unmeasured rows with a 1-D convolution along
the canonically sorted direction axis.

All core functions take batched numpy inputs (B, L, ...) plus a shared
(L, 3) direction array and return engine Tensors wired to the parameter
graph. forward() canonicalizes row order at entry and restores it at
exit, which makes the full pipeline invariant to input row order (exact,
provided no two rows share (elevation, azimuth)).
"""

import zlib
from dataclasses import asdict, dataclass

import numpy as np

from . import engine
from .domain import canonical_order
from .engine import Tensor
from .errors import ConfigError
from .geometry import embed_directions


@dataclass(frozen=True)
class ModelConfig:
    K: int
    D: int = 128
    T: int = 4
    n_heads: int = 4
    d_ff: int = 256
    P: int = 6
    conv_kernel: int = 3
    decoder_hidden: int = 256
    head_hidden: int = 64
    token_mode: str = "concat"
    with_sinusoidal: bool = True
    with_cue_heads: bool = True
    with_refine: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"K={self.K}")
        if self.D < 2 or self.D % 2 != 0:
            raise ConfigError(f"D={self.D} must be even and >= 2")
        if self.D % self.n_heads != 0:
            raise ConfigError(f"D={self.D} not divisible by {self.n_heads} heads")
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ConfigError(f"conv_kernel={self.conv_kernel} must be odd")
        for f in ("T", "n_heads", "d_ff", "P", "decoder_hidden", "head_hidden"):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f}={getattr(self, f)} must be >= 1")
        if self.token_mode not in ("concat", "add"):
            raise ConfigError(f"token_mode={self.token_mode!r}")

    @property
    def d_sig(self) -> int:
        return self.D // 2 if self.token_mode == "concat" else self.D

    @property
    def d_geo(self) -> int:
        return self.d_sig

    @property
    def geo_input_width(self) -> int:
        return 3 + 6 * self.P if self.with_sinusoidal else 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"bad model config: {e}") from e


def _param_specs(config: ModelConfig):
    """Ordered (name, shape, fan_in) triples; fan_in None means special init."""
    k2 = 2 * config.K
    d = config.D
    specs = [
        ("sig.w", (k2, config.d_sig), k2),
        ("sig.b", (config.d_sig,), None),
        ("sig.ln_scale", (config.d_sig,), None),
        ("sig.ln_shift", (config.d_sig,), None),
        ("geo.w", (config.geo_input_width, config.d_geo), config.geo_input_width),
        ("geo.b", (config.d_geo,), None),
        ("geo.ln_scale", (config.d_geo,), None),
        ("geo.ln_shift", (config.d_geo,), None),
    ]
    for t in range(config.T):
        p = f"enc{t}."
        specs += [
            (p + "ln1_scale", (d,), None),
            (p + "ln1_shift", (d,), None),
            (p + "wq", (d, d), d), (p + "bq", (d,), None),
            (p + "wk", (d, d), d), (p + "bk", (d,), None),
            (p + "wv", (d, d), d), (p + "bv", (d,), None),
            (p + "wo", (d, d), d), (p + "bo", (d,), None),
            (p + "ln2_scale", (d,), None),
            (p + "ln2_shift", (d,), None),
            (p + "ff_w1", (d, config.d_ff), d),
            (p + "ff_b1", (config.d_ff,), None),
            (p + "ff_w2", (config.d_ff, d), config.d_ff),
            (p + "ff_b2", (d,), None),
        ]
    specs += [
        ("dec.w1", (d, config.decoder_hidden), d),
        ("dec.b1", (config.decoder_hidden,), None),
        ("dec.w2", (config.decoder_hidden, k2), config.decoder_hidden),
        ("dec.b2", (k2,), None),
    ]
    if config.with_cue_heads:
        specs += [
            ("head.w1", (d, config.head_hidden), d),
            ("head.b1", (config.head_hidden,), None),
            ("head.w2", (config.head_hidden, 2), config.head_hidden),
            ("head.b2", (2,), None),
        ]
    if config.with_refine:
        specs += [("refine.kernel", (config.conv_kernel,), None)]
    return specs


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> dict:
    """Fresh parameter set.

    Weights draw U(-1/sqrt(fan_in), +1/sqrt(fan_in)) from a stream keyed
    on (seed, name), so removing one module (an ablation) never shifts
    another module's draw. Biases and layer-norm shifts start at zero,
    layer-norm scales at one, the refinement kernel at identity.
    """
    params = {}
    for name, shape, fan_in in _param_specs(config):
        if fan_in is not None:
            rng = np.random.default_rng(
                np.random.SeedSequence([seed & 0xFFFFFFFF, zlib.crc32(name.encode())])
            )
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        elif name.endswith("ln_scale") or name.endswith("_scale"):
            data = np.ones(shape)
        elif name == "refine.kernel":
            data = np.zeros(shape)
            data[shape[0] // 2] = 1.0
        else:
            data = np.zeros(shape)
        params[name] = engine.parameter(data.astype(dtype))
    return params


def validate_params(params: dict, config: ModelConfig) -> None:
    specs = _param_specs(config)
    names = [n for n, _, _ in specs]
    if list(params.keys()) != names:
        missing = set(names) - set(params.keys())
        extra = set(params.keys()) - set(names)
        raise ConfigError(f"parameter set mismatch: missing={sorted(missing)} "
                          f"extra={sorted(extra)}")
    for name, shape, _ in specs:
        got = tuple(params[name].data.shape)
        if got != shape:
            raise ConfigError(f"{name}: shape {got}, expected {shape}")


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return engine.add(engine.matmul(x, w), b)


def encode_signals(h_full: np.ndarray, mask: np.ndarray, params: dict,
                   config: ModelConfig) -> Tensor:
    """e = LayerNorm(GELU((mask * h) W_s + b)), rows zeroed when unmeasured."""
    if h_full.shape[-1] != 2 * config.K:
        raise ConfigError(f"signal width {h_full.shape[-1]} != 2K={2 * config.K}")
    dtype = params["sig.w"].data.dtype
    h = h_full.astype(dtype) * mask.astype(dtype)[..., None]
    e = _linear(engine.constant(h), params["sig.w"], params["sig.b"])
    return engine.layer_norm(engine.gelu(e),
                             params["sig.ln_scale"], params["sig.ln_shift"])


def geo_tokens(directions: np.ndarray, batch: int, params: dict,
               config: ModelConfig) -> Tensor:
    """p = LayerNorm(GELU([x, gamma(x)] W_g + b)) for each direction row."""
    feats = embed_directions(directions, config.P,
                             sinusoidal=config.with_sinusoidal)
    dtype = params["geo.w"].data.dtype
    feats = np.broadcast_to(feats.astype(dtype),
                            (batch,) + feats.shape).copy()
    p = _linear(engine.constant(feats), params["geo.w"], params["geo.b"])
    return engine.layer_norm(engine.gelu(p),
                             params["geo.ln_scale"], params["geo.ln_shift"])


def assemble_tokens(e: Tensor, p: Tensor, config: ModelConfig) -> Tensor:
    """Token o = [e, p] in concat mode (signal half first), e + p in add mode."""
    if config.token_mode == "concat":
        return engine.concat([e, p], axis=-1)
    return engine.add(e, p)


def transformer_encode(o: Tensor, key_mask: np.ndarray, params: dict,
                       config: ModelConfig) -> Tensor:
    """T pre-norm layers; unmeasured rows query but never serve as keys."""
    b, l, d = o.data.shape
    h = config.n_heads
    dh = d // h
    att_mask = key_mask.reshape(b, 1, 1, l)
    x = o
    for t in range(config.T):
        p = f"enc{t}."
        xn = engine.layer_norm(x, params[p + "ln1_scale"], params[p + "ln1_shift"])
        q = _linear(xn, params[p + "wq"], params[p + "bq"])
        k = _linear(xn, params[p + "wk"], params[p + "bk"])
        v = _linear(xn, params[p + "wv"], params[p + "bv"])
        # (B, L, D) -> (B, H, L, dh)
        q = engine.transpose(engine.reshape(q, (b, l, h, dh)), (0, 2, 1, 3))
        k = engine.transpose(engine.reshape(k, (b, l, h, dh)), (0, 2, 1, 3))
        v = engine.transpose(engine.reshape(v, (b, l, h, dh)), (0, 2, 1, 3))
        scores = engine.scale(
            engine.matmul(q, engine.transpose(k, (0, 1, 3, 2))),
            1.0 / np.sqrt(dh),
        )
        att = engine.masked_softmax(scores, att_mask)
        ctx = engine.matmul(att, v)
        ctx = engine.reshape(engine.transpose(ctx, (0, 2, 1, 3)), (b, l, d))
        x = engine.add(x, _linear(ctx, params[p + "wo"], params[p + "bo"]))
        xn = engine.layer_norm(x, params[p + "ln2_scale"], params[p + "ln2_shift"])
        ff = _linear(engine.gelu(_linear(xn, params[p + "ff_w1"], params[p + "ff_b1"])),
                     params[p + "ff_w2"], params[p + "ff_b2"])
        x = engine.add(x, ff)
    return x


def decode(c: Tensor, params: dict) -> Tensor:
    """Shared two-layer MLP, GELU hidden, linear (B, L, 2K) output."""
    return _linear(engine.gelu(_linear(c, params["dec.w1"], params["dec.b1"])),
                   params["dec.w2"], params["dec.b2"])


def predict_cues(c: Tensor, params: dict) -> Tensor:
    """Per-row (ITD in microseconds, ILD in dB), shared two-layer MLP."""
    return _linear(engine.gelu(_linear(c, params["head.w1"], params["head.b1"])),
                   params["head.w2"], params["head.b2"])


def masked_fuse(h_full: np.ndarray, h_raw: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise selection: measured rows from the input (exactly), the
    rest from the decoder."""
    dtype = h_raw.data.dtype
    m3 = mask.astype(dtype)[..., None]
    measured = engine.constant(h_full.astype(dtype) * m3)
    return engine.add(measured, engine.mul(h_raw, engine.constant(1.0 - m3)))


def refine(fused: Tensor, directions: np.ndarray, mask: np.ndarray,
           params: dict, config: ModelConfig) -> Tensor:
    """Directional smoothing that cannot touch measured rows.

    Rows sort into canonical order, each of the 2K time samples becomes a
    channel, a shared odd kernel convolves along the direction axis, and
    the resulting delta applies only where mask=0. Identity kernel means
    identity output.
    """
    b, l, k2 = fused.data.shape
    perm = canonical_order(directions)
    inv = np.argsort(perm)
    x = engine.gather_rows(fused, perm)
    xc = engine.reshape(engine.transpose(x, (0, 2, 1)), (b * k2, l))
    delta2 = engine.sub(engine.conv1d(xc, params["refine.kernel"]), xc)
    delta = engine.transpose(engine.reshape(delta2, (b, k2, l)), (0, 2, 1))
    keep = (1.0 - mask[:, perm].astype(fused.data.dtype))[..., None]
    out = engine.add(x, engine.mul(delta, engine.constant(keep)))
    return engine.gather_rows(out, inv)


def forward_core(h_full: np.ndarray, mask: np.ndarray, directions: np.ndarray,
                 params: dict, config: ModelConfig):
    """Everything before refinement, rows processed in the order given.

    Returns (fused, cues); cues is None without cue heads.
    """
    b = h_full.shape[0]
    if not np.all(mask.sum(axis=-1) >= 1):
        raise ConfigError("a field in the batch has no measured rows")
    e = encode_signals(h_full, mask, params, config)
    p = geo_tokens(directions, b, params, config)
    o = assemble_tokens(e, p, config)
    c = transformer_encode(o, mask, params, config)
    h_raw = decode(c, params)
    cues = predict_cues(c, params) if config.with_cue_heads else None
    fused = masked_fuse(h_full, h_raw, mask)
    return fused, cues


def forward(h_full: np.ndarray, mask: np.ndarray, directions: np.ndarray,
            params: dict, config: ModelConfig):
    """Full pipeline on a batch sharing one direction set.

    h_full: (B, L, 2K); mask: (B, L) with 1 = measured; directions (L, 3).
    Returns (h_hat, cues) in the caller's row order. Computation happens
    in canonical row order internally, so any row order of the same field
    produces identical results.
    """
    h_full = np.asarray(h_full)
    mask = np.asarray(mask)
    directions = np.asarray(directions, dtype=np.float64)
    if h_full.ndim != 3 or mask.shape != h_full.shape[:2]:
        raise ConfigError(f"bad shapes {h_full.shape} / {mask.shape}")
    if directions.shape != (h_full.shape[1], 3):
        raise ConfigError(f"directions shape {directions.shape}")
    perm = canonical_order(directions)
    inv = np.argsort(perm)
    hs = np.ascontiguousarray(h_full[:, perm])
    ms = np.ascontiguousarray(mask[:, perm])
    ds = directions[perm]
    fused, cues = forward_core(hs, ms, ds, params, config)
    out = refine(fused, ds, ms, params, config) if config.with_refine else fused
    out = engine.gather_rows(out, inv)
    if cues is not None:
        cues = engine.gather_rows(cues, inv)
    return out, cues
