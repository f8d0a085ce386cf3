import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rownav.perception import (
    NO_RETURN,
    MaskBuffer,
    PerceptionConfig,
    PerceptionError,
    Variant,
    column_histogram,
    find_row_center,
    fuse_masks,
    gate_by_depth,
    perceive,
    perceive_trace,
    segzeros_center,
    smooth_histogram,
    weight_by_inverse_depth,
    zero_runs,
)

shapes = st.tuples(st.integers(1, 12), st.integers(1, 12))


@st.composite
def mask_stack(draw, count=st.integers(1, 4)):
    h, w = draw(shapes)
    n = draw(count)
    return [draw(arrays(np.uint8, (h, w), elements=st.integers(0, 1))) for _ in range(n)]


@st.composite
def mask_and_depth(draw, min_side=1, max_side=12):
    h = draw(st.integers(min_side, max_side))
    w = draw(st.integers(min_side, max_side))
    mask = draw(arrays(np.uint8, (h, w), elements=st.integers(0, 1)))
    depth = draw(arrays(np.float64, (h, w), elements=st.floats(0.0, 15.0, allow_nan=False)))
    return mask, depth


# --- fuse ------------------------------------------------------------------


def test_fuse_copies_is_identity():
    m = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    np.testing.assert_array_equal(fuse_masks([m, m, m]), m)


def test_fuse_with_zeros_is_identity():
    m = np.array([[1, 0, 1]], dtype=np.uint8)
    np.testing.assert_array_equal(fuse_masks([m, np.zeros_like(m)]), m)


def test_fuse_two_random_4x4_cellwise():
    rng = np.random.default_rng(7)
    a, b = (rng.random((4, 4)) < 0.5).astype(np.uint8), (rng.random((4, 4)) < 0.5).astype(np.uint8)
    out = fuse_masks([a, b])
    for i in range(4):
        for j in range(4):
            assert out[i, j] == (1 if (a[i, j] or b[i, j]) else 0)


def test_fuse_errors():
    with pytest.raises(PerceptionError, match="no frames"):
        fuse_masks(MaskBuffer(3))
    with pytest.raises(PerceptionError):
        fuse_masks([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(PerceptionError):
        fuse_masks([np.full((2, 2), 2)])


def test_mask_buffer_keeps_most_recent():
    buf = MaskBuffer(2)
    for k in range(4):
        m = np.zeros((1, 4), dtype=np.uint8)
        m[0, k] = 1
        buf.push(m)
    assert len(buf) == 2
    np.testing.assert_array_equal(fuse_masks(buf), [[0, 0, 1, 1]])
    with pytest.raises(PerceptionError):
        buf.push(np.zeros((2, 4), dtype=np.uint8))
    buf.clear()
    assert len(buf) == 0


@given(mask_stack())
def test_fuse_idempotent_commutative_monotone(stack):
    fused = fuse_masks(stack)
    np.testing.assert_array_equal(fuse_masks(stack + stack), fused)
    np.testing.assert_array_equal(fuse_masks(stack[::-1]), fused)
    for m in stack:
        assert (fused >= m).all()


# --- gate ------------------------------------------------------------------


def test_gate_inactive_threshold():
    m = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    np.testing.assert_array_equal(gate_by_depth(m, np.full((2, 2), 1.0), 5.0), m)


def test_gate_saturated_threshold():
    m = np.ones((2, 2), dtype=np.uint8)
    np.testing.assert_array_equal(gate_by_depth(m, np.full((2, 2), 6.0), 5.0), np.zeros((2, 2)))


def test_gate_checkerboard():
    depth = np.array([[1, 6, 1], [6, 1, 6], [1, 6, 1]], dtype=float)
    out = gate_by_depth(np.ones((3, 3), dtype=np.uint8), depth, 5.0)
    np.testing.assert_array_equal(out, [[1, 0, 1], [0, 1, 0], [1, 0, 1]])


def test_gate_no_return_always_dropped():
    out = gate_by_depth(np.ones((1, 2), dtype=np.uint8), np.array([[NO_RETURN, 5.0]]), 5.0)
    np.testing.assert_array_equal(out, [[0, 1]])


def test_gate_errors():
    with pytest.raises(PerceptionError):
        gate_by_depth(np.ones((2, 2)), np.ones((2, 3)), 5.0)
    with pytest.raises(PerceptionError):
        gate_by_depth(np.ones((2, 2)), np.ones((2, 2)), 0.0)


@given(mask_and_depth(), st.floats(0.1, 12), st.floats(0.1, 12))
def test_gate_never_adds_and_is_monotone_in_threshold(md, a, b):
    mask, depth = md
    lo, hi = min(a, b), max(a, b)
    g_lo = gate_by_depth(mask, depth, lo)
    g_hi = gate_by_depth(mask, depth, hi)
    assert (g_lo <= mask).all()
    assert (g_lo <= g_hi).all()


# --- weight ----------------------------------------------------------------


@pytest.mark.parametrize(
    "depth,d_th,expected",
    [(0.0, 5.0, 1.0), (5.0, 5.0, 0.0), (5.0, 10.0, 0.5), (12.0, 10.0, 0.0)],
)
def test_weight_examples(depth, d_th, expected):
    out = weight_by_inverse_depth(np.ones((1, 1)), np.array([[depth]]), d_th)
    assert out[0, 0] == pytest.approx(expected, abs=1e-15)


def test_weight_errors():
    with pytest.raises(PerceptionError):
        weight_by_inverse_depth(np.ones((1, 1)), np.ones((1, 1)), -1.0)
    with pytest.raises(PerceptionError):
        weight_by_inverse_depth(np.ones((1, 2)), np.ones((1, 1)), 5.0)


@given(mask_and_depth(), st.floats(0.5, 12))
def test_weight_zero_off_mask_and_in_unit_interval(md, d_th):
    mask, depth = md
    gated = gate_by_depth(mask, depth, d_th)
    w = weight_by_inverse_depth(gated, depth, d_th)
    assert ((w == 0) | (gated == 1)).all()
    assert (w >= 0).all() and (w <= 1).all()


@given(st.floats(0.5, 12), st.floats(0, 1), st.floats(0, 1))
def test_weight_strictly_decreasing_below_threshold(d_th, u, v):
    a, b = sorted((u * d_th, v * d_th))
    assume(b - a > 1e-9 * d_th and b < d_th)
    w = weight_by_inverse_depth(np.ones((1, 2)), np.array([[a, b]]), d_th)
    assert w[0, 0] > w[0, 1]


# --- histogram -------------------------------------------------------------


def test_histogram_examples():
    np.testing.assert_array_equal(column_histogram(np.zeros((3, 5))), np.zeros(5))
    np.testing.assert_array_equal(column_histogram(np.ones((4, 6))), np.full(6, 4.0))
    grid = np.array([[1, 0, 0.5, 2], [0, 1, 0.25, 0], [3, 0, 0, 1]])
    expected = [sum(grid[i][j] for i in range(3)) for j in range(4)]
    np.testing.assert_allclose(column_histogram(grid), expected, rtol=0, atol=0)


def test_histogram_rejects_empty():
    with pytest.raises(PerceptionError):
        column_histogram(np.zeros((0, 3)))


@given(arrays(np.uint8, st.tuples(st.integers(1, 15), st.integers(1, 15)), elements=st.integers(0, 1)))
def test_histogram_total_matches_cells(mask):
    assert column_histogram(mask).sum() == mask.sum()
    assert len(column_histogram(mask)) == mask.shape[1]


# --- smoothing -------------------------------------------------------------


def test_smooth_identity_for_n1():
    h = np.array([3.0, 1.0, 2.0])
    np.testing.assert_array_equal(smooth_histogram(h, 1), h)


def test_smooth_truncated_window_example():
    np.testing.assert_allclose(smooth_histogram(np.array([0, 3, 6, 3, 0.0]), 3), [1.5, 3, 4, 3, 1.5], atol=1e-15)


@pytest.mark.parametrize("n", [0, 2, 4, 9])
def test_smooth_rejects_bad_window(n):
    with pytest.raises(PerceptionError):
        smooth_histogram(np.zeros(7), n)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(1, 40), st.data())
def test_smooth_preserves_constants(c, w, data):
    n = data.draw(st.sampled_from([k for k in range(1, w + 1, 2)]))
    np.testing.assert_array_equal(smooth_histogram(np.full(w, c), n), np.full(w, c))


@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(0, 500)), st.data())
def test_smooth_stays_within_input_range(h, data):
    n = data.draw(st.sampled_from([k for k in range(1, h.size + 1, 2)]))
    s = smooth_histogram(h, n)
    assert s.min() >= h.min() and s.max() <= h.max()


# --- argmin ----------------------------------------------------------------


@pytest.mark.parametrize(
    "hist,expected",
    [([5, 3, 1, 3, 5], 2.0), ([2, 0, 0, 0, 2], 2.0), ([4, 4, 4, 4], 1.5), ([0, 1, 1, 0], 1.5)],
)
def test_find_row_center_examples(hist, expected):
    assert find_row_center(np.array(hist, dtype=float)) == expected


def test_find_row_center_empty():
    with pytest.raises(PerceptionError):
        find_row_center(np.array([]))


@settings(max_examples=1000)
@given(arrays(np.float64, st.integers(1, 64), elements=st.floats(0, 1e3), unique=True))
def test_find_row_center_matches_bruteforce_on_unique_minimum(h):
    best = 0
    for j in range(1, h.size):
        if h[j] < h[best]:
            best = j
    assert find_row_center(h) == best


@given(arrays(np.float64, st.integers(1, 64), elements=st.integers(0, 50).map(float)), st.floats(1e-3, 1e3))
def test_find_row_center_positive_scale_invariant(h, k):
    assert find_row_center(h * k) == find_row_center(h)


# --- SegZeros --------------------------------------------------------------


def _mask_from_hist(hist):
    hist = list(hist)
    m = np.zeros((max(max(hist), 1), len(hist)), dtype=np.uint8)
    for j, c in enumerate(hist):
        m[:c, j] = 1
    return m


def test_segzeros_examples():
    assert segzeros_center(_mask_from_hist([4, 0, 0, 0, 4])) == 2.0
    assert segzeros_center(_mask_from_hist([1, 2, 3])) is None
    # zero runs of width 3 (cols 1-3) and 5 (cols 5-9)
    assert segzeros_center(_mask_from_hist([1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1])) == 7.0


def test_segzeros_tie_prefers_run_nearest_center():
    # two width-2 runs; the one at cols 5-6 is closer to the center (5.0)
    assert segzeros_center(_mask_from_hist([0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 1])) == 5.5


def test_zero_runs():
    assert zero_runs(np.array([0, 1, 0, 0, 2, 0])) == [(0, 0), (2, 3), (5, 5)]
    assert zero_runs(np.array([1, 1])) == []


# --- composition -----------------------------------------------------------


def _corridor(h=20, w=41, gap=(15, 25)):
    m = np.ones((h, w), dtype=np.uint8)
    m[:, gap[0]:gap[1] + 1] = 0
    return m


@pytest.mark.parametrize("variant", list(Variant))
def test_perceive_symmetric_corridor(variant):
    m = _corridor()
    depth = np.full(m.shape, 2.0)
    x_h = perceive(MaskBuffer(3, [m]), depth, PerceptionConfig(variant=variant, smoothing_window=5))
    assert abs(x_h - (m.shape[1] - 1) / 2) <= 0.5


def test_segmin_and_segmind_agree_on_constant_depth():
    rng = np.random.default_rng(3)
    m = (rng.random((30, 50)) < 0.4).astype(np.uint8)
    depth = np.full(m.shape, 2.5)
    a = perceive(MaskBuffer(1, [m]), depth, PerceptionConfig(variant="SegMin"))
    b = perceive(MaskBuffer(1, [m]), depth, PerceptionConfig(variant="SegMinD"))
    assert a == b


def test_perceive_segzeros_nogap():
    m = np.ones((5, 9), dtype=np.uint8)
    assert perceive(MaskBuffer(1, [m]), np.ones(m.shape), PerceptionConfig(variant="SegZeros")) is None


def test_perceive_small_frame_clips_window():
    # w=6 < n=15: the largest odd window that fits (5) is used
    m = np.array([[1, 1, 0, 0, 1, 1]], dtype=np.uint8)
    tr = perceive_trace(MaskBuffer(1, [m]), np.ones(m.shape), PerceptionConfig())
    np.testing.assert_allclose(tr.smoothed, smooth_histogram(column_histogram(m), 5))


def test_perception_config_validation():
    with pytest.raises(PerceptionError):
        PerceptionConfig(depth_threshold=0)
    with pytest.raises(PerceptionError):
        PerceptionConfig(smoothing_window=4)
    with pytest.raises(PerceptionError):
        PerceptionConfig(history=0)
    with pytest.raises(ValueError):
        PerceptionConfig(variant="SegMax")


@settings(max_examples=300)
@given(mask_and_depth(min_side=3, max_side=30), st.sampled_from(list(Variant)), st.floats(0.5, 12))
def test_mirror_flip_reflects_center(md, variant, d_th):
    mask, depth = md
    cfg = PerceptionConfig(depth_threshold=d_th, variant=variant, smoothing_window=3)
    w = mask.shape[1]
    a = perceive(MaskBuffer(1, [mask]), depth, cfg)
    b = perceive(MaskBuffer(1, [mask[:, ::-1]]), depth[:, ::-1], cfg)
    if a is None:
        assert b is None
    else:
        assert b == pytest.approx((w - 1) - a, abs=1e-9)
