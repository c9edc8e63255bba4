"""ITD and ILD estimation from binaural waveforms.

Sign convention everywhere: positive ITD means the left ear leads,
positive ILD means the left ear is louder.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .domain import BinauralHrir, SubjectField
from .errors import UndefinedCueError

ITD_SANITY_BOUND_US = 1000.0


@dataclass(frozen=True)
class CueLabels:
    """Per-direction cue targets aligned with a subject field's rows."""

    itd_us: np.ndarray
    ild_db: np.ndarray

    def __post_init__(self):
        itd = np.asarray(self.itd_us, dtype=np.float64)
        ild = np.asarray(self.ild_db, dtype=np.float64)
        object.__setattr__(self, "itd_us", itd)
        object.__setattr__(self, "ild_db", ild)
        if itd.ndim != 1 or itd.shape != ild.shape:
            raise ValueError(f"label shapes {itd.shape} vs {ild.shape}")
        if not (np.all(np.isfinite(itd)) and np.all(np.isfinite(ild))):
            raise ValueError("non-finite cue labels")
        if np.any(np.abs(itd) > ITD_SANITY_BOUND_US):
            warnings.warn(
                f"|ITD| exceeds {ITD_SANITY_BOUND_US} us; unusual for "
                "human-scale heads",
                stacklevel=2,
            )

    def __len__(self) -> int:
        return int(self.itd_us.shape[0])

    def as_matrix(self) -> np.ndarray:
        """(L, 2) array of [itd_us, ild_db] rows."""
        return np.stack([self.itd_us, self.ild_db], axis=1)


def _lowpassed(x: np.ndarray, fs: float, lowpass_hz: float) -> np.ndarray:
    if lowpass_hz <= 0 or lowpass_hz >= 0.49 * fs:
        return x
    sos = signal.butter(2, lowpass_hz, fs=fs, output="sos")
    padlen = min(15, x.shape[-1] - 1)  # keep short FIRs filterable
    return signal.sosfiltfilt(sos, x, padlen=padlen)


def estimate_itd(h: BinauralHrir, lowpass_hz: float = 3000.0) -> float:
    """ITD in microseconds via low-passed interaural cross-correlation.

    Both ears pass through a zero-phase 4th-order Butterworth low-pass
    (2nd-order sections run forward and backward), then the lag of the
    full cross-correlation maximum is refined with 3-point parabolic
    interpolation and converted to microseconds.
    """
    if not np.any(h.left) or not np.any(h.right):
        raise UndefinedCueError("silent ear, ITD undefined")
    fs = h.sample_rate_hz
    lf = _lowpassed(h.left.astype(np.float64), fs, lowpass_hz)
    rf = _lowpassed(h.right.astype(np.float64), fs, lowpass_hz)
    xc = np.correlate(lf, rf, mode="full")
    m = int(np.argmax(xc))
    shift = m - (h.n_taps - 1)  # right shifted by `shift` best matches left
    frac = 0.0
    if 0 < m < xc.shape[0] - 1:
        y0, y1, y2 = xc[m - 1], xc[m], xc[m + 1]
        den = y0 - 2.0 * y1 + y2
        if den != 0.0:
            frac = 0.5 * (y0 - y2) / den
    # left leading by d samples puts the peak at shift = -d
    return float(-(shift + frac) / fs * 1e6)


def estimate_ild(h: BinauralHrir) -> float:
    """Broadband ILD in decibels: 10*log10 of the ear energy ratio."""
    e_l = float(np.sum(h.left.astype(np.float64) ** 2))
    e_r = float(np.sum(h.right.astype(np.float64) ** 2))
    if e_l == 0.0 or e_r == 0.0:
        raise UndefinedCueError("zero-energy ear, ILD undefined")
    return 10.0 * np.log10(e_l / e_r)


def estimate_ild_gammatone(h: BinauralHrir, centers_hz=None) -> np.ndarray:
    """Per-band ILD through a gammatone filterbank.

    Exposed for analysis only; default metrics use the broadband
    estimator above.
    """
    fs = h.sample_rate_hz
    if centers_hz is None:
        centers_hz = [c for c in (500.0, 1000.0, 2000.0, 4000.0, 8000.0)
                      if c < 0.45 * fs]
    if not np.any(h.left) or not np.any(h.right):
        raise UndefinedCueError("silent ear, ILD undefined")
    out = np.empty(len(centers_hz))
    for i, fc in enumerate(centers_hz):
        b, a = signal.gammatone(fc, "fir", fs=fs)
        fl = np.convolve(h.left.astype(np.float64), b)
        fr = np.convolve(h.right.astype(np.float64), b)
        e_l, e_r = np.sum(fl * fl), np.sum(fr * fr)
        if e_l == 0.0 or e_r == 0.0:
            raise UndefinedCueError(f"zero band energy at {fc} Hz")
        out[i] = 10.0 * np.log10(e_l / e_r)
    return out


def label_field(field: SubjectField, lowpass_hz: float = 3000.0) -> CueLabels:
    """Estimated cue labels for every direction of a subject field."""
    itd = np.empty(len(field))
    ild = np.empty(len(field))
    for i, h in enumerate(field.hrirs):
        itd[i] = estimate_itd(h, lowpass_hz=lowpass_hz)
        ild[i] = estimate_ild(h)
    return CueLabels(itd_us=itd, ild_db=ild)
