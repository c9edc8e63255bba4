"""Directions, binaural impulse responses, and per-subject fields.

Coordinate conventions used throughout the package:

- azimuth_deg: counterclockwise from the front when seen from above,
  so +90 is the subject's left ear side. Stored in [0, 360).
- elevation_deg: +90 straight up, -90 straight down. Stored in [-90, 90].
- radius_m: source distance from the head center, > 0.

A subject's measurement set is stacked into a matrix of shape (L, 2K):
row l holds the left-ear FIR followed by the right-ear FIR for direction l.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class Direction:
    """A single source direction on (or off) the measurement sphere."""

    azimuth_deg: float
    elevation_deg: float
    radius_m: float = 1.5

    def __post_init__(self):
        az, el, r = self.azimuth_deg, self.elevation_deg, self.radius_m
        if not (np.isfinite(az) and np.isfinite(el) and np.isfinite(r)):
            raise DataError(f"non-finite direction ({az}, {el}, {r})")
        if not 0.0 <= az < 360.0:
            raise DataError(f"azimuth {az} outside [0, 360)")
        if not -90.0 <= el <= 90.0:
            raise DataError(f"elevation {el} outside [-90, 90]")
        if r <= 0.0:
            raise DataError(f"radius {r} must be positive")

    @classmethod
    def of(cls, azimuth_deg: float, elevation_deg: float, radius_m: float = 1.5):
        """Build a Direction, wrapping azimuth into [0, 360)."""
        az = float(azimuth_deg) % 360.0
        if az == 360.0:  # guards float wrap of tiny negatives
            az = 0.0
        return cls(az, float(elevation_deg), float(radius_m))

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.azimuth_deg, self.elevation_deg, self.radius_m], dtype=np.float64
        )

    def unit_vector(self) -> np.ndarray:
        """Cartesian unit vector (x front, y left, z up)."""
        az = np.deg2rad(self.azimuth_deg)
        el = np.deg2rad(self.elevation_deg)
        return np.array(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
        )


@dataclass(frozen=True)
class BinauralHrir:
    """One direction's left/right FIR pair at a common sample rate."""

    direction: Direction
    left: np.ndarray
    right: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        for name, h in (("left", self.left), ("right", self.right)):
            if not isinstance(h, np.ndarray) or h.ndim != 1:
                raise DataError(f"{name} HRIR must be a 1-D array")
            if not np.all(np.isfinite(h)):
                raise DataError(f"{name} HRIR contains non-finite samples")
        if self.left.shape != self.right.shape:
            raise DataError(
                f"ear length mismatch {self.left.shape} vs {self.right.shape}"
            )
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample rate {self.sample_rate_hz} must be positive")

    @property
    def n_taps(self) -> int:
        return int(self.left.shape[0])


@dataclass(frozen=True)
class SubjectField:
    """All measured directions of one subject."""

    subject_id: str
    hrirs: tuple  # tuple[BinauralHrir, ...]
    sample_rate_hz: float = field(init=False)
    n_taps: int = field(init=False)

    def __post_init__(self):
        if len(self.hrirs) == 0:
            raise DataError(f"subject {self.subject_id!r} has no measurements")
        object.__setattr__(self, "hrirs", tuple(self.hrirs))
        fs = self.hrirs[0].sample_rate_hz
        k = self.hrirs[0].n_taps
        seen = set()
        for h in self.hrirs:
            if h.sample_rate_hz != fs:
                raise DataError("mixed sample rates within one subject")
            if h.n_taps != k:
                raise DataError("mixed FIR lengths within one subject")
            key = (
                h.direction.azimuth_deg,
                h.direction.elevation_deg,
                h.direction.radius_m,
            )
            if key in seen:
                raise DataError(f"duplicate direction {key} in subject field")
            seen.add(key)
        object.__setattr__(self, "sample_rate_hz", fs)
        object.__setattr__(self, "n_taps", k)

    def __len__(self) -> int:
        return len(self.hrirs)

    @property
    def directions(self) -> np.ndarray:
        """(L, 3) array of (azimuth_deg, elevation_deg, radius_m)."""
        return np.stack([h.direction.as_array() for h in self.hrirs])


@dataclass(frozen=True)
class StackedHrirs:
    """Matrix form of a subject field: directions (L, 3), payload (L, 2K)."""

    subject_id: str
    directions: np.ndarray
    payload: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        d, p = self.directions, self.payload
        if d.ndim != 2 or d.shape[1] != 3:
            raise DataError(f"directions shape {d.shape}, expected (L, 3)")
        if p.ndim != 2 or p.shape[0] != d.shape[0]:
            raise DataError(f"payload shape {p.shape} does not match {d.shape[0]} rows")
        if p.shape[1] % 2 != 0:
            raise DataError(f"payload width {p.shape[1]} is not 2K")

    @property
    def n_directions(self) -> int:
        return int(self.directions.shape[0])

    @property
    def n_taps(self) -> int:
        return int(self.payload.shape[1] // 2)

    def left(self) -> np.ndarray:
        return self.payload[:, : self.n_taps]

    def right(self) -> np.ndarray:
        return self.payload[:, self.n_taps :]


def stack_field(subject: SubjectField) -> StackedHrirs:
    """Stack a subject field into (L, 2K) float32, rows in field order."""
    k = subject.n_taps
    l = len(subject)
    payload = np.empty((l, 2 * k), dtype=np.float32)
    for i, h in enumerate(subject.hrirs):
        payload[i, :k] = h.left
        payload[i, k:] = h.right
    return StackedHrirs(
        subject_id=subject.subject_id,
        directions=subject.directions,
        payload=payload,
        sample_rate_hz=subject.sample_rate_hz,
    )


def _as_direction_array(directions) -> np.ndarray:
    if isinstance(directions, np.ndarray):
        arr = np.asarray(directions, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise DataError(f"direction array shape {arr.shape}, expected (L, 3)")
        return arr
    return np.stack([d.as_array() for d in directions])


def canonical_order(directions) -> np.ndarray:
    """Permutation sorting rows by elevation descending, then azimuth
    ascending, ties broken by original index.

    Accepts an (L, 3) array or a sequence of Directions; returns int64
    indices such that directions[perm] is canonically ordered.
    """
    arr = _as_direction_array(directions)
    idx = np.arange(arr.shape[0])
    # lexsort: last key is primary
    return np.lexsort((idx, arr[:, 0], -arr[:, 1])).astype(np.int64)


def great_circle_deg(a, b) -> float:
    """Central angle in degrees between two directions, radius ignored.

    Uses the atan2 form of the spherical law of cosines, which stays
    accurate for near-coincident and near-antipodal pairs.
    """
    if isinstance(a, Direction):
        a = (a.azimuth_deg, a.elevation_deg)
    if isinstance(b, Direction):
        b = (b.azimuth_deg, b.elevation_deg)
    az1, el1 = np.deg2rad(a[0]), np.deg2rad(a[1])
    az2, el2 = np.deg2rad(b[0]), np.deg2rad(b[1])
    dl = az2 - az1
    c1, s1 = np.cos(el1), np.sin(el1)
    c2, s2 = np.cos(el2), np.sin(el2)
    num = np.hypot(c2 * np.sin(dl), c1 * s2 - s1 * c2 * np.cos(dl))
    den = s1 * s2 + c1 * c2 * np.cos(dl)
    return float(np.rad2deg(np.arctan2(num, den)))


def _pairwise_great_circle_deg(arr: np.ndarray) -> np.ndarray:
    """(L, L) great-circle matrix for an (L, 3) direction array."""
    az = np.deg2rad(arr[:, 0])
    el = np.deg2rad(arr[:, 1])
    dl = az[None, :] - az[:, None]
    c1, s1 = np.cos(el)[:, None], np.sin(el)[:, None]
    c2, s2 = np.cos(el)[None, :], np.sin(el)[None, :]
    num = np.hypot(c2 * np.sin(dl), c1 * s2 - s1 * c2 * np.cos(dl))
    den = s1 * s2 + c1 * c2 * np.cos(dl)
    return np.rad2deg(np.arctan2(num, den))


def sample_sparsity(
    directions,
    m: Optional[int] = None,
    strategy: str = "farthest-point",
    fixed_indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Choose which of L directions count as measured.

    Returns a {0,1} uint8 mask of length L with exactly the selected
    entries set. Strategies:

    - "farthest-point": deterministic greedy max-min great-circle cover.
      Starts at the direction nearest (azimuth 0, elevation 0); each step
      adds the direction maximizing its distance to the selected set.
      All ties resolve to the lower index.
    - "fixed-list": selects exactly `fixed_indices`.
    """
    arr = _as_direction_array(directions)
    l = arr.shape[0]

    if strategy == "fixed-list":
        if fixed_indices is None:
            raise ConfigError("fixed-list strategy needs fixed_indices")
        sel = list(fixed_indices)
        if len(sel) == 0 or len(set(sel)) != len(sel):
            raise ConfigError(f"fixed_indices must be non-empty and unique: {sel}")
        if min(sel) < 0 or max(sel) >= l:
            raise ConfigError(f"fixed_indices out of range for L={l}")
        if m is not None and m != len(sel):
            raise ConfigError(f"m={m} disagrees with {len(sel)} fixed indices")
        mask = np.zeros(l, dtype=np.uint8)
        mask[sel] = 1
        return mask

    if strategy != "farthest-point":
        raise ConfigError(f"unknown sparsity strategy {strategy!r}")
    if m is None or not 1 <= m <= l:
        raise ConfigError(f"m={m} outside [1, {l}]")

    dist = _pairwise_great_circle_deg(arr)
    to_front = np.array(
        [great_circle_deg(arr[i, :2], (0.0, 0.0)) for i in range(l)]
    )
    selected = [int(np.argmin(to_front))]  # argmin takes lowest index on ties
    min_dist = dist[selected[0]].copy()
    while len(selected) < m:
        min_dist[selected] = -1.0  # never re-pick
        nxt = int(np.argmax(min_dist))
        selected.append(nxt)
        min_dist = np.minimum(min_dist, dist[nxt])
    mask = np.zeros(l, dtype=np.uint8)
    mask[selected] = 1
    return mask


def fibonacci_grid(n: int, radius_m: float = 1.5) -> list:
    """Quasi-uniform n-point spherical grid (golden-angle spiral)."""
    if n < 1:
        raise ConfigError(f"grid size {n} must be >= 1")
    golden = np.pi * (3.0 - np.sqrt(5.0))
    out = []
    for i in range(n):
        z = 1.0 - 2.0 * (i + 0.5) / n
        el = np.rad2deg(np.arcsin(z))
        az = np.rad2deg((i * golden) % (2.0 * np.pi))
        out.append(Direction.of(az, el, radius_m))
    return out


def equiangular_grid(
    n_azimuth: int,
    n_elevation: int,
    elevation_max_deg: float = 60.0,
    elevation_min_deg: float = -60.0,
    radius_m: float = 1.5,
) -> list:
    """Regular azimuth x elevation lattice, poles excluded by default."""
    if n_azimuth < 1 or n_elevation < 1:
        raise ConfigError("equiangular grid needs positive counts")
    if not -90.0 <= elevation_min_deg < elevation_max_deg <= 90.0:
        raise ConfigError("bad elevation range")
    els = np.linspace(elevation_max_deg, elevation_min_deg, n_elevation)
    azs = np.arange(n_azimuth) * (360.0 / n_azimuth)
    if n_elevation > 1 and (els[0] == 90.0 or els[-1] == -90.0) and n_azimuth > 1:
        raise ConfigError("poles would duplicate across azimuths")
    return [Direction.of(a, e, radius_m) for e in els for a in azs]
