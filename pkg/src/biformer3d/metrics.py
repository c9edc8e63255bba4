"""Evaluation metrics over stacked HRIR matrices.

All metrics reduce over missing (mask=0) rows only, matching how the
model is supervised; evaluation always runs on the fused+refined output.
"""

import numpy as np

from .cues import estimate_ild, estimate_itd
from .domain import BinauralHrir, Direction
from .errors import ConfigError, DataError

NMSE_FLOOR_DB = -300.0


def _check_rows(pred, ref, mask):
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    mask = np.asarray(mask)
    if pred.shape != ref.shape or pred.ndim != 2:
        raise ConfigError(f"metric shapes {pred.shape} vs {ref.shape}")
    if mask.shape != (pred.shape[0],):
        raise ConfigError(f"mask shape {mask.shape}")
    rows = np.nonzero(mask == 0)[0]
    if rows.size == 0:
        raise ConfigError("no missing rows to evaluate")
    return pred, ref, rows


def nmse_db(pred, ref, mask) -> float:
    """10*log10 of the mean per-row energy-normalized squared error.

    A perfect prediction would be -inf; the report floors at -300 dB.
    """
    pred, ref, rows = _check_rows(pred, ref, mask)
    ratios = np.empty(rows.size)
    for j, l in enumerate(rows):
        e_ref = float(np.sum(ref[l] ** 2))
        if e_ref == 0.0:
            raise DataError(f"zero-energy reference row {l}")
        ratios[j] = float(np.sum((pred[l] - ref[l]) ** 2)) / e_ref
    return float(10.0 * np.log10(max(ratios.mean(), 10.0 ** (NMSE_FLOOR_DB / 10.0))))


def cosine_distance(pred, ref, mask) -> float:
    """Mean over missing rows of 1 - cos(pred_row, ref_row); in [0, 2]."""
    pred, ref, rows = _check_rows(pred, ref, mask)
    vals = np.empty(rows.size)
    for j, l in enumerate(rows):
        np_ = float(np.linalg.norm(pred[l]))
        nr = float(np.linalg.norm(ref[l]))
        if np_ == 0.0 or nr == 0.0:
            raise DataError(f"zero-norm row {l} in cosine distance")
        vals[j] = 1.0 - float(np.dot(pred[l], ref[l])) / (np_ * nr)
    return float(vals.mean())


def _row_hrir(row: np.ndarray, fs: float) -> BinauralHrir:
    k = row.shape[0] // 2
    return BinauralHrir(
        direction=Direction(0.0, 0.0, 1.0),
        left=row[:k].astype(np.float64),
        right=row[k:].astype(np.float64),
        sample_rate_hz=fs,
    )


def itd_e_us(pred, ref, mask, fs: float, lowpass_hz: float = 3000.0) -> float:
    """Mean absolute ITD difference (microseconds) over missing rows,
    estimating on both the prediction and the reference."""
    pred, ref, rows = _check_rows(pred, ref, mask)
    errs = np.empty(rows.size)
    for j, l in enumerate(rows):
        a = estimate_itd(_row_hrir(pred[l], fs), lowpass_hz=lowpass_hz)
        b = estimate_itd(_row_hrir(ref[l], fs), lowpass_hz=lowpass_hz)
        errs[j] = abs(a - b)
    return float(errs.mean())


def ild_e_db(pred, ref, mask) -> float:
    """Mean absolute ILD difference (dB) over missing rows."""
    pred, ref, rows = _check_rows(pred, ref, mask)
    errs = np.empty(rows.size)
    for j, l in enumerate(rows):
        a = estimate_ild(_row_hrir(pred[l], 48000.0))
        b = estimate_ild(_row_hrir(ref[l], 48000.0))
        errs[j] = abs(a - b)
    return float(errs.mean())
