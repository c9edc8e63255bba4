"""Sinusoidal direction encoding and the geometric token projection.

Coordinates are normalized to [0, 1] (azimuth/360, (elevation+90)/180,
radius/2) before the multi-frequency map; feeding raw degrees would make
the high bands oscillate thousands of times across the sphere.

This module is pure numpy and serves as the reference semantics; the
differentiable path inside the model reproduces geo_project with engine
ops and is tested against this implementation.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .domain import Direction
from .errors import ConfigError

R_REF_M = 2.0


@dataclass(frozen=True)
class EncodingConfig:
    P: int = 6
    normalize: bool = True
    d_geo: int = 64

    def __post_init__(self):
        if self.P < 1:
            raise ConfigError(f"P={self.P} must be >= 1")
        if self.d_geo < 1:
            raise ConfigError(f"d_geo={self.d_geo} must be >= 1")

    @property
    def gamma_width(self) -> int:
        return 6 * self.P

    @property
    def input_width(self) -> int:
        return 3 + 6 * self.P


def normalize_coords(d: Direction) -> np.ndarray:
    """(azimuth/360, (elevation+90)/180, radius/2); in [0,1] for r <= 2 m."""
    return np.array(
        [
            d.azimuth_deg / 360.0,
            (d.elevation_deg + 90.0) / 180.0,
            d.radius_m / R_REF_M,
        ],
        dtype=np.float64,
    )


def sinusoidal_embed(x: np.ndarray, p_bands: int) -> np.ndarray:
    """Multi-frequency sinusoidal features of a coordinate triple.

    Band-major layout: for each band p = 0..P-1 emit
    [sin(2^p pi x1..x3), cos(2^p pi x1..x3)], total length 6P.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (3,):
        raise ConfigError(f"expected a coordinate triple, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ConfigError("non-finite coordinates")
    out = np.empty(6 * p_bands, dtype=np.float64)
    for p in range(p_bands):
        arg = (2.0**p) * np.pi * x
        out[6 * p : 6 * p + 3] = np.sin(arg)
        out[6 * p + 3 : 6 * p + 6] = np.cos(arg)
    return out


def embed_directions(
    directions, p_bands: int, normalize: bool = True, sinusoidal: bool = True
) -> np.ndarray:
    """(L, 3 + 6P) matrix of [coords, gamma(coords)] rows.

    With sinusoidal=False only the (possibly normalized) coordinates are
    returned, width 3; this is the ablation path.
    """
    rows = []
    for d in directions:
        if not isinstance(d, Direction):
            d = Direction(float(d[0]), float(d[1]), float(d[2]))
        x = normalize_coords(d) if normalize else d.as_array()
        if sinusoidal:
            rows.append(np.concatenate([x, sinusoidal_embed(x, p_bands)]))
        else:
            rows.append(x)
    return np.stack(rows)


def _gelu(x: np.ndarray) -> np.ndarray:
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def _layer_norm(x: np.ndarray, scale, shift, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * scale + shift


def geo_project(
    x: np.ndarray,
    gamma: np.ndarray,
    w_g: np.ndarray,
    b_g: np.ndarray,
    ln_scale: np.ndarray,
    ln_shift: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """p = LayerNorm(GELU([x, gamma(x)] W_g + b)).

    Reference (non-differentiable) implementation. A constant pre-norm
    input, e.g. from zero weights, yields exactly the learned shift.
    """
    inp = np.concatenate([np.asarray(x, np.float64), np.asarray(gamma, np.float64)])
    if w_g.shape[0] != inp.shape[0]:
        raise ConfigError(
            f"projection expects input width {w_g.shape[0]}, got {inp.shape[0]}"
        )
    return _layer_norm(_gelu(inp @ w_g + b_g), ln_scale, ln_shift, eps)
