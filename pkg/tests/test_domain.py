import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biformer3d.domain import (
    BinauralHrir,
    Direction,
    StackedHrirs,
    SubjectField,
    canonical_order,
    equiangular_grid,
    fibonacci_grid,
    great_circle_deg,
    sample_sparsity,
    stack_field,
)
from biformer3d.errors import ConfigError, DataError


def test_direction_validation():
    Direction(0.0, 0.0, 1.5)
    Direction(359.999, 90.0, 0.1)
    for bad in [(360.0, 0.0, 1.5), (-1.0, 0.0, 1.5), (0.0, 90.5, 1.5),
                (0.0, 0.0, 0.0), (float("nan"), 0.0, 1.5)]:
        with pytest.raises(DataError):
            Direction(*bad)


def test_direction_of_wraps_azimuth():
    assert Direction.of(-90.0, 0.0).azimuth_deg == 270.0
    assert Direction.of(720.0, 10.0).azimuth_deg == 0.0
    assert Direction.of(365.25, 0.0).azimuth_deg == pytest.approx(5.25)


def test_unit_vector_axes():
    # x toward az=0, y toward az=90 (left), z up
    np.testing.assert_allclose(Direction(0, 0, 1).unit_vector(), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(Direction(90, 0, 1).unit_vector(), [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(Direction(0, 90, 1).unit_vector(), [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(Direction(180, 0, 1).unit_vector(), [-1, 0, 0], atol=1e-15)


def test_great_circle_identities():
    a = Direction(37.0, 12.0, 1.5)
    assert great_circle_deg(a, a) == pytest.approx(0.0, abs=1e-12)
    assert great_circle_deg((0, 0), (180, 0)) == pytest.approx(180.0)
    assert great_circle_deg((0, 0), (90, 0)) == pytest.approx(90.0)
    assert great_circle_deg((0, 90), (123, -90)) == pytest.approx(180.0)
    # poles: azimuth is degenerate there
    assert great_circle_deg((0, 90), (270, 90)) == pytest.approx(0.0, abs=1e-12)


@given(
    st.floats(0, 359.99), st.floats(-90, 90),
    st.floats(0, 359.99), st.floats(-90, 90),
)
@settings(max_examples=60, deadline=None)
def test_great_circle_symmetric_and_bounded(az1, el1, az2, el2):
    d1 = great_circle_deg((az1, el1), (az2, el2))
    d2 = great_circle_deg((az2, el2), (az1, el1))
    assert d1 == pytest.approx(d2, abs=1e-9)
    assert -1e-9 <= d1 <= 180.0 + 1e-9


def test_canonical_order_hand_case():
    dirs = np.array([
        [10.0, 0.0, 1.5],   # 2nd: el 0, az 10
        [0.0, 30.0, 1.5],   # 1st: highest elevation
        [5.0, 0.0, 1.5],    # goes before az 10
        [0.0, -10.0, 1.5],  # last
    ])
    np.testing.assert_array_equal(canonical_order(dirs), [1, 2, 0, 3])


def test_canonical_order_tie_stability():
    dirs = np.array([[10.0, 0.0, 2.0], [10.0, 0.0, 1.0], [10.0, 0.0, 1.5]])
    np.testing.assert_array_equal(canonical_order(dirs), [0, 1, 2])


@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_canonical_order_is_permutation(n, seed):
    rng = np.random.default_rng(seed)
    dirs = np.column_stack([
        rng.uniform(0, 360, n), rng.uniform(-90, 90, n), rng.uniform(0.5, 2, n)
    ])
    perm = canonical_order(dirs)
    assert sorted(perm.tolist()) == list(range(n))
    ordered = dirs[perm]
    el, az = ordered[:, 1], ordered[:, 0]
    for i in range(n - 1):
        assert el[i] > el[i + 1] or (el[i] == el[i + 1] and az[i] <= az[i + 1])


def _brute_force_farthest(dirs, m):
    from biformer3d.domain import _pairwise_great_circle_deg

    dist = _pairwise_great_circle_deg(dirs)
    start = min(range(len(dirs)),
                key=lambda i: (great_circle_deg(dirs[i, :2], (0.0, 0.0)), i))
    sel = [start]
    while len(sel) < m:
        best, best_d = None, -np.inf
        for i in range(len(dirs)):
            if i in sel:
                continue
            d = min(dist[i, j] for j in sel)
            if d > best_d + 1e-12:
                best, best_d = i, d
        sel.append(best)
    return sorted(sel)


def test_farthest_point_matches_brute_force():
    dirs = np.array([d.as_array() for d in fibonacci_grid(23)])
    for m in (1, 4, 9):
        mask = sample_sparsity(dirs, m)
        assert mask.dtype == np.uint8 and int(mask.sum()) == m
        assert sorted(np.nonzero(mask)[0].tolist()) == _brute_force_farthest(dirs, m)


def test_farthest_point_masks_are_nested():
    # greedy prefix property: the M=5 set is a subset of the M=9 set
    dirs = np.array([d.as_array() for d in fibonacci_grid(81)])
    prev = set()
    for m in (1, 3, 5, 9, 27):
        sel = set(np.nonzero(sample_sparsity(dirs, m))[0].tolist())
        assert prev <= sel
        prev = sel


def test_farthest_point_starts_at_front():
    dirs = np.array([[0.0, 60.0, 1.5], [2.0, 1.0, 1.5], [180.0, 0.0, 1.5]])
    mask = sample_sparsity(dirs, 1)
    np.testing.assert_array_equal(mask, [0, 1, 0])


def test_fixed_list_strategy():
    dirs = np.array([d.as_array() for d in fibonacci_grid(6)])
    mask = sample_sparsity(dirs, strategy="fixed-list", fixed_indices=[5, 0])
    np.testing.assert_array_equal(mask, [1, 0, 0, 0, 0, 1])
    with pytest.raises(ConfigError):
        sample_sparsity(dirs, strategy="fixed-list", fixed_indices=[0, 0])
    with pytest.raises(ConfigError):
        sample_sparsity(dirs, strategy="fixed-list", fixed_indices=[6])
    with pytest.raises(ConfigError):
        sample_sparsity(dirs, 3, strategy="fixed-list", fixed_indices=[0, 1])
    with pytest.raises(ConfigError):
        sample_sparsity(dirs, 0)
    with pytest.raises(ConfigError):
        sample_sparsity(dirs, 7)
    with pytest.raises(ConfigError):
        sample_sparsity(dirs, 3, strategy="random")


def test_grids():
    g = fibonacci_grid(81, radius_m=1.5)
    assert len(g) == 81
    assert all(d.radius_m == 1.5 for d in g)
    els = [d.elevation_deg for d in g]
    assert max(els) < 90 and min(els) > -90
    keys = {(d.azimuth_deg, d.elevation_deg) for d in g}
    assert len(keys) == 81

    eq = equiangular_grid(12, 5, elevation_max_deg=60.0)
    assert len(eq) == 60
    assert max(d.elevation_deg for d in eq) == pytest.approx(60.0)
    assert min(d.elevation_deg for d in eq) == pytest.approx(-60.0)


def test_subject_field_and_stacking():
    fs = 8000.0
    hrirs = []
    for i, d in enumerate(fibonacci_grid(4)):
        left = np.zeros(8)
        left[i] = 1.0
        right = np.zeros(8)
        right[i] = -0.5
        hrirs.append(BinauralHrir(direction=d, left=left, right=right,
                                  sample_rate_hz=fs))
    field = SubjectField(subject_id="s0", hrirs=tuple(hrirs))
    st_ = stack_field(field)
    assert isinstance(st_, StackedHrirs)
    assert st_.payload.shape == (4, 16) and st_.payload.dtype == np.float32
    np.testing.assert_array_equal(st_.left()[2], hrirs[2].left)
    np.testing.assert_array_equal(st_.right()[1], hrirs[1].right)
    assert st_.directions.shape == (4, 3)


def test_subject_field_rejects_duplicates():
    d = Direction(10.0, 0.0, 1.5)
    h = BinauralHrir(direction=d, left=np.zeros(4), right=np.zeros(4),
                     sample_rate_hz=8000.0)
    with pytest.raises(DataError):
        SubjectField(subject_id="s0", hrirs=(h, h))
