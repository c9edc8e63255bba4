"""Training objectives.

Reconstruction is supervised only at missing rows; the spectral term runs
over all rows of the fused output (measured rows cancel exactly there, by
construction); cue terms are mean absolute errors over missing rows on
targets standardized by training-set scale. Total:

    l_total = l_rec + lambda_hrtf*l_hrtf + lambda_itd*l_itd + lambda_ild*l_ild
"""

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Tensor
from .errors import ConfigError


@dataclass(frozen=True)
class LossWeights:
    lambda_hrtf: float = 500.0
    lambda_itd: float = 0.05
    lambda_ild: float = 0.05

    def __post_init__(self):
        for f in ("lambda_hrtf", "lambda_itd", "lambda_ild"):
            if getattr(self, f) < 0:
                raise ConfigError(f"{f} must be nonnegative")


@dataclass(frozen=True)
class CueStats:
    """Training-set scale used to standardize cue targets inside the loss."""

    itd_std_us: float = 1.0
    ild_std_db: float = 1.0

    @classmethod
    def from_labels(cls, itd_us: np.ndarray, ild_db: np.ndarray) -> "CueStats":
        return cls(
            itd_std_us=max(float(np.std(itd_us)), 1e-6),
            ild_std_db=max(float(np.std(ild_db)), 1e-6),
        )

    def to_dict(self) -> dict:
        return {"itd_std_us": self.itd_std_us, "ild_std_db": self.ild_std_db}

    @classmethod
    def from_dict(cls, d: dict) -> "CueStats":
        return cls(itd_std_us=float(d["itd_std_us"]),
                   ild_std_db=float(d["ild_std_db"]))


@dataclass(frozen=True)
class LossReport:
    """Scalar component values for logging; l_itd/l_ild are standardized,
    the _us/_db twins are the same errors in physical units."""

    l_rec: float
    l_hrtf: float
    l_itd: float
    l_ild: float
    l_total: float
    l_itd_us: float = 0.0
    l_ild_db: float = 0.0


def _batched(x) -> np.ndarray:
    """Payloads and labels: (L, W) -> (1, L, W)."""
    arr = np.asarray(x)
    return arr[None] if arr.ndim == 2 else arr


def _batched_mask(x) -> np.ndarray:
    """Masks: (L,) -> (1, L)."""
    arr = np.asarray(x)
    return arr[None] if arr.ndim == 1 else arr


def _batched_t(x: Tensor) -> Tensor:
    if x.data.ndim == 2:
        return engine.reshape(x, (1,) + x.data.shape)
    return x


def _missing_row_weights(mask: np.ndarray, dtype) -> np.ndarray:
    """(B, L) weights: per-subject mean over missing rows, then batch mean."""
    miss = 1.0 - mask.astype(np.float64)
    n = miss.sum(axis=1)
    if np.any(n < 1):
        raise ConfigError("a field has no missing rows, nothing to supervise")
    w = miss / n[:, None] / mask.shape[0]
    return w.astype(dtype)


def loss_rec(pred: Tensor, target, mask) -> Tensor:
    """Mean over missing rows of the squared row error, averaged over the
    batch: (1/N) sum_{mask=0} ||pred_row - target_row||^2."""
    pred = _batched_t(pred)
    target = _batched(target)
    mask = _batched_mask(mask)
    if pred.data.shape != target.shape:
        raise ConfigError(f"loss_rec shapes {pred.data.shape} vs {target.shape}")
    w = _missing_row_weights(mask, pred.data.dtype)
    diff = engine.sub(pred, engine.constant(target.astype(pred.data.dtype)))
    sq = engine.mul(diff, diff)
    return engine.sum_(engine.mul(sq, engine.constant(w[:, :, None])))


def loss_hrtf(pred: Tensor, target, k: int) -> Tensor:
    """Squared spectral error, orthonormal DFT per ear, summed over all
    rows and bins, averaged over the batch.

    By Parseval this equals the time-domain squared Frobenius difference,
    so with masked fusion upstream measured rows contribute exactly zero.
    """
    pred = _batched_t(pred)
    target = _batched(target)
    if pred.data.shape != target.shape or pred.data.shape[-1] != 2 * k:
        raise ConfigError(f"loss_hrtf shapes {pred.data.shape} vs {target.shape}")
    b = pred.data.shape[0]
    diff = engine.sub(pred, engine.constant(target.astype(pred.data.dtype)))
    total = None
    for ear in (0, 1):
        d = engine.narrow(diff, -1, ear * k, k)
        spec = engine.dft_ortho(d)  # (B, L, 2, K) real/imag planes
        s = engine.sum_(engine.mul(spec, spec))
        total = s if total is None else engine.add(total, s)
    return engine.scale(total, 1.0 / b)


def loss_cues(pred_cues: Tensor, labels, mask, stats: CueStats):
    """(l_itd, l_ild) standardized MAEs over missing rows.

    labels is (B, L, 2) of [itd_us, ild_db]; predictions are in the same
    physical units and both sides divide by the training-set std.
    """
    pred_cues = _batched_t(pred_cues)
    labels = _batched(labels)
    mask = _batched_mask(mask)
    if pred_cues.data.shape != labels.shape or labels.shape[-1] != 2:
        raise ConfigError(f"loss_cues shapes {pred_cues.data.shape} vs {labels.shape}")
    w = _missing_row_weights(mask, pred_cues.data.dtype)
    diff = engine.abs_(
        engine.sub(pred_cues, engine.constant(labels.astype(pred_cues.data.dtype)))
    )
    witd = engine.constant(w / stats.itd_std_us)
    wild = engine.constant(w / stats.ild_std_db)
    l_itd = engine.sum_(engine.mul(engine.narrow(diff, -1, 0, 1),
                                   engine.reshape(witd, w.shape + (1,))))
    l_ild = engine.sum_(engine.mul(engine.narrow(diff, -1, 1, 1),
                                   engine.reshape(wild, w.shape + (1,))))
    return l_itd, l_ild


def loss_total(l_rec: Tensor, l_hrtf: Tensor, l_itd, l_ild,
               weights: LossWeights, stats: CueStats = None):
    """Weighted sum; returns (total Tensor, LossReport of floats)."""
    total = l_rec
    if weights.lambda_hrtf != 0.0:
        total = engine.add(total, engine.scale(l_hrtf, weights.lambda_hrtf))
    zero_cues = l_itd is None or l_ild is None
    if not zero_cues and weights.lambda_itd != 0.0:
        total = engine.add(total, engine.scale(l_itd, weights.lambda_itd))
    if not zero_cues and weights.lambda_ild != 0.0:
        total = engine.add(total, engine.scale(l_ild, weights.lambda_ild))
    itd_v = 0.0 if zero_cues else l_itd.item()
    ild_v = 0.0 if zero_cues else l_ild.item()
    report = LossReport(
        l_rec=l_rec.item(),
        l_hrtf=l_hrtf.item(),
        l_itd=itd_v,
        l_ild=ild_v,
        l_total=total.item(),
        l_itd_us=itd_v * (stats.itd_std_us if stats else 1.0),
        l_ild_db=ild_v * (stats.ild_std_db if stats else 1.0),
    )
    return total, report
