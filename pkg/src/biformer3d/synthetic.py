"""Parametric spherical-head HRIR synthesis with analytic cue ground truth.

Each ear's impulse response is a unit-energy Hann-windowed sinc pulse at a
fractional delay. Delays encode a Woodworth-model ITD, gains encode a smooth
head-shadow ILD, so every generated direction carries exact cue labels. This
stands in for measured corpora at desk scale.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .cues import CueLabels
from .domain import BinauralHrir, Direction, SubjectField
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class HeadModel:
    """Spherical-head parameters for one synthetic subject."""

    head_radius_m: float = 0.0875
    speed_of_sound_mps: float = 343.0
    shadow_strength: float = 0.5
    pulse_width_samples: int = 16
    subject_jitter_seed: int = 0

    def __post_init__(self):
        if self.head_radius_m <= 0 or self.speed_of_sound_mps <= 0:
            raise ConfigError("radius and speed of sound must be positive")
        if not 0.0 <= self.shadow_strength <= 1.0:
            raise ConfigError(f"shadow_strength {self.shadow_strength} not in [0,1]")
        if self.pulse_width_samples < 2:
            raise ConfigError("pulse_width_samples must be >= 2")


def lateral_angle_rad(d: Direction) -> float:
    """Signed lateral angle, positive toward the left ear (+y)."""
    az = math.radians(d.azimuth_deg)
    el = math.radians(d.elevation_deg)
    s = math.sin(az) * math.cos(el)
    return math.asin(min(1.0, max(-1.0, s)))


def woodworth_itd(model: HeadModel, d: Direction) -> float:
    """Woodworth spherical-head ITD in microseconds, positive = left leads."""
    theta = lateral_angle_rad(d)
    a_c = model.head_radius_m / model.speed_of_sound_mps
    return a_c * (math.sin(theta) + theta) * 1e6


def ear_gains(model: HeadModel, d: Direction) -> "tuple[float, float]":
    """(left, right) amplitude gains from the smooth shadow model."""
    u = d.unit_vector()
    cos_left = u[1]  # dot with the left-ear axis (+y)
    g_l = 1.0 - model.shadow_strength * (1.0 - cos_left) / 2.0
    g_r = 1.0 - model.shadow_strength * (1.0 + cos_left) / 2.0
    return float(g_l), float(g_r)


def base_delay_samples(model: HeadModel, fs: float) -> float:
    """Center delay leaving room for the largest half-ITD plus the pulse."""
    a_c = model.head_radius_m / model.speed_of_sound_mps
    max_half_itd = a_c * (1.0 + math.pi / 2.0) / 2.0
    return model.pulse_width_samples / 2.0 + math.ceil(max_half_itd * fs) + 2.0


def _pulse(tau: float, k: int, width: int) -> np.ndarray:
    """Unit-energy Hann-windowed sinc centered at fractional delay tau."""
    n = np.arange(k, dtype=np.float64)
    u = n - tau
    w = np.where(np.abs(u) < width / 2.0, np.cos(np.pi * u / width) ** 2, 0.0)
    p = w * np.sinc(u)
    e = np.sqrt(np.sum(p * p))
    if e == 0.0:
        raise DataError(f"pulse at delay {tau} has no support in K={k}")
    return p / e


def synth_hrir(model: HeadModel, d: Direction, k: int, fs: float) -> BinauralHrir:
    """Generate one direction's binaural pair.

    Per-ear energy is exactly gain^2 (the pulse is normalized), so the
    broadband ILD of the pair equals the injected 20*log10(gL/gR).
    """
    if k < 2:
        raise ConfigError(f"K={k} too small")
    if fs <= 0:
        raise ConfigError(f"fs={fs} must be positive")
    itd_samples = woodworth_itd(model, d) * 1e-6 * fs
    base = base_delay_samples(model, fs)
    half_w = model.pulse_width_samples / 2.0
    tau_l = base - itd_samples / 2.0
    tau_r = base + itd_samples / 2.0
    for tau in (tau_l, tau_r):
        if tau - half_w < 0.0 or tau + half_w > k - 1:
            raise ConfigError(
                f"delay {tau:.2f} +- {half_w:.1f} exceeds FIR length K={k}"
            )
    g_l, g_r = ear_gains(model, d)
    if g_l <= 0.0 or g_r <= 0.0:
        raise DataError(f"shadow model silences an ear at {d}")
    left = g_l * _pulse(tau_l, k, model.pulse_width_samples)
    right = g_r * _pulse(tau_r, k, model.pulse_width_samples)
    return BinauralHrir(direction=d, left=left, right=right, sample_rate_hz=fs)


def label_direction(model: HeadModel, d: Direction) -> "tuple[float, float]":
    """Injected (itd_us, ild_db) for one direction."""
    g_l, g_r = ear_gains(model, d)
    return woodworth_itd(model, d), 20.0 * math.log10(g_l / g_r)


def jittered_model(model_base: HeadModel, seed: int, subject_index: int) -> HeadModel:
    """Subject variant: radius and shadow jittered +-10%, deterministic."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, subject_index]))
    rad = model_base.head_radius_m * (1.0 + 0.1 * rng.uniform(-1.0, 1.0))
    sh = model_base.shadow_strength * (1.0 + 0.1 * rng.uniform(-1.0, 1.0))
    sh = min(1.0, max(0.0, sh))
    return replace(
        model_base,
        head_radius_m=rad,
        shadow_strength=sh,
        subject_jitter_seed=subject_index,
    )


def synth_subject(
    model: HeadModel, grid, k: int, fs: float, subject_id: str
) -> "tuple[SubjectField, CueLabels]":
    hrirs = [synth_hrir(model, d, k, fs) for d in grid]
    itd = np.empty(len(grid))
    ild = np.empty(len(grid))
    for i, d in enumerate(grid):
        itd[i], ild[i] = label_direction(model, d)
    field = SubjectField(subject_id=subject_id, hrirs=tuple(hrirs))
    return field, CueLabels(itd_us=itd, ild_db=ild)


def synth_corpus(
    n_subjects: int,
    grid,
    model_base: HeadModel,
    seed: int,
    k: int,
    fs: float,
) -> "list[tuple[SubjectField, CueLabels]]":
    """Subjects s000..s{n-1} on a shared grid, jittered per subject.

    The grid must contain pairwise-distinct directions (SubjectField
    enforces this).
    """
    if n_subjects < 1:
        raise ConfigError(f"n_subjects={n_subjects} must be >= 1")
    out = []
    for i in range(n_subjects):
        model = jittered_model(model_base, seed, i)
        out.append(synth_subject(model, grid, k, fs, f"s{i:03d}"))
    return out


def minimum_phase(h: np.ndarray) -> np.ndarray:
    """Minimum-phase counterpart of a real FIR via the real cepstrum.

    Fold the cepstrum (zero negative quefrency, double positive),
    exponentiate back. The output magnitude spectrum matches the input
    up to the 1e-8-of-peak floor applied before the log.
    """
    x = np.asarray(h, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise DataError("minimum_phase expects a 1-D vector")
    if not np.all(np.isfinite(x)):
        raise DataError("minimum_phase input has non-finite samples")
    if not np.any(x):
        raise DataError("minimum_phase input is all zeros")
    spec = np.fft.fft(x)
    mag = np.abs(spec)
    logmag = np.log(np.maximum(mag, 1e-8 * mag.max()))
    cep = np.fft.ifft(logmag).real
    n = x.size
    fold = np.zeros(n)
    fold[0] = 1.0
    if n % 2 == 0:
        fold[1 : n // 2] = 2.0
        fold[n // 2] = 1.0
    else:
        fold[1 : (n + 1) // 2] = 2.0
    mp_spec = np.exp(np.fft.fft(cep * fold))
    return np.fft.ifft(mp_spec).real
