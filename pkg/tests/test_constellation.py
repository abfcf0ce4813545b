import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepic.constellation import (
    SUPPORTED_ORDERS,
    build_constellation,
    demap_hard,
    map_symbols,
    symbol_error_rate,
)


def brute_force_decision(q, points):
    # first minimum of the full 2-D distance table == lowest tied index
    diff = np.asarray(q)[..., None] - points
    d = diff.real**2 + diff.imag**2
    return np.argmin(d, axis=-1)


def test_qpsk_points():
    c = build_constellation(4)
    s = 1 / np.sqrt(2)
    assert sorted((p.real, p.imag) for p in c.points) == sorted(
        (a, b) for a in (-s, s) for b in (-s, s)
    )
    np.testing.assert_allclose(np.abs(c.points), 1.0, atol=1e-12)


def test_16qam_levels():
    c = build_constellation(16)
    np.testing.assert_allclose(np.sort(c.levels) * np.sqrt(10), [-3, -1, 1, 3], atol=1e-12)


def test_16qam_gray_codes_in_level_order():
    c = build_constellation(16)
    codes = np.argsort(c.levels)  # code of the lowest level first
    assert [format(int(v), "02b") for v in codes] == ["00", "01", "11", "10"]


@pytest.mark.parametrize("order", [0, 2, 8, 32, 128, 4096, 3])
def test_rejects_bad_order(order):
    with pytest.raises(ValueError):
        build_constellation(order)


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_invariants(order):
    c = build_constellation(order)
    assert c.bits_per_symbol == int(np.log2(order))
    assert len(c.points) == order
    assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-9
    assert len(set(np.round(c.points, 12))) == order
    assert abs(c.points.sum()) < 1e-9
    # √M x √M grid
    assert len(np.unique(np.round(c.points.real, 12))) == c.side
    assert len(np.unique(np.round(c.points.imag, 12))) == c.side


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_gray_neighbours_differ_by_one_bit(order):
    c = build_constellation(order)
    side = c.side
    pts = c.points
    # locate every index on the grid
    lv = np.sort(c.levels)
    col = np.searchsorted(lv, np.round(pts.real, 12) - 1e-9)
    row = np.searchsorted(lv, np.round(pts.imag, 12) - 1e-9)
    grid = np.full((side, side), -1)
    grid[col, row] = np.arange(order)
    assert (grid >= 0).all()
    for a, b in [(grid[1:, :], grid[:-1, :]), (grid[:, 1:], grid[:, :-1])]:
        diff = (a ^ b).ravel()
        assert all(bin(int(v)).count("1") == 1 for v in diff)


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_round_trip(order):
    c = build_constellation(order)
    k = np.arange(order)
    np.testing.assert_array_equal(demap_hard(map_symbols(k, c), c), k)
    assert map_symbols(int(k[-1]), c) == c.points[-1]


def test_map_rejects_out_of_range():
    c = build_constellation(16)
    with pytest.raises(ValueError):
        map_symbols(16, c)
    with pytest.raises(ValueError):
        map_symbols(np.array([0, -1]), c)


def test_qpsk_nearest():
    c = build_constellation(4)
    k = demap_hard(complex(0.9, 0.7) / np.sqrt(2), c)
    assert np.isclose(c.points[k], (1 + 1j) / np.sqrt(2))


def test_origin_tie_goes_to_lowest_index():
    for order in SUPPORTED_ORDERS:
        c = build_constellation(order)
        k = demap_hard(0j, c)
        assert k == int(brute_force_decision(0j, c.points))
    assert demap_hard(0j, build_constellation(4)) == 0


def test_demap_rejects_nonfinite():
    c = build_constellation(16)
    with pytest.raises(ValueError):
        demap_hard(np.array([0, np.nan]), c)


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_decision_regions_match_brute_force(order):
    c = build_constellation(order)
    rng = np.random.default_rng(order)
    q = rng.normal(scale=0.8, size=4000) + 1j * rng.normal(scale=0.8, size=4000)
    # include exact midpoints between levels, where ties live
    lv = np.sort(c.levels)
    mids = (lv[1:] + lv[:-1]) / 2
    q = np.concatenate([q, mids + 1j * mids[::-1], mids + 1j * lv[: len(mids)]])
    np.testing.assert_array_equal(demap_hard(q, c), brute_force_decision(q, c.points))


@settings(max_examples=200, deadline=None)
@given(
    order=st.sampled_from(SUPPORTED_ORDERS),
    re=st.floats(-2, 2),
    im=st.floats(-2, 2),
)
def test_decided_point_is_nearest(order, re, im):
    c = build_constellation(order)
    q = complex(re, im)
    k = demap_hard(q, c)
    assert np.abs(q - c.points[k]) <= np.abs(q - c.points).min() + 1e-12


def test_ser():
    assert symbol_error_rate([1, 2, 3], [1, 2, 3]) == 0.0
    assert symbol_error_rate([0, 1], [1, 0]) == 1.0
    assert symbol_error_rate(np.arange(4), [0, 1, 0, 0]) == 0.5
    with pytest.raises(ValueError):
        symbol_error_rate([1, 2], [1])
    with pytest.raises(ValueError):
        symbol_error_rate([], [])
