import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photobnn.errors import ValidationError
from photobnn.functional import conv_reference
from photobnn.mapping import (POLICIES, ConvWorkload, build_schedule, execute_schedule, flatten,
                              lower_conv_pairs, schedule_baseline, schedule_oxbnn, slice_plans,
                              slice_vector, unsliced_results)

GOLDEN = Path(__file__).parent / "golden"


def random_matrices(h, s, seed):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=(h, s)), rng.integers(0, 2, size=(h, s))


@st.composite
def schedule_dims(draw, max_s=128):
    s = draw(st.integers(1, max_s))
    n = draw(st.integers(1, s))
    m = draw(st.integers(1, 8))
    h = draw(st.integers(1, 8))
    alpha = draw(st.integers(1, math.ceil(s / n) + 1))
    return h, s, m, n, alpha


class TestWorkload:
    def test_dimensions(self):
        w = ConvWorkload(5, 5, 1, 3, 3, 1, stride=2)
        assert (w.output_height, w.output_width, w.s, w.h, w.filters) == (2, 2, 9, 4, 1)
        assert flatten(w) == ((4, 9), (1, 9))

    def test_depthwise_vector_size(self):
        w = ConvWorkload(8, 8, 32, 3, 3, 32, 1, 1, depthwise=True)
        assert w.s == 9 and w.pairs == 64 * 32

    def test_depthwise_needs_matching_channels(self):
        with pytest.raises(ValidationError):
            ConvWorkload(8, 8, 32, 3, 3, 64, depthwise=True)

    def test_rejects_bad_dims(self):
        with pytest.raises(ValidationError):
            ConvWorkload(0, 5, 1, 3, 3, 1)


class TestSlicing:
    @pytest.mark.parametrize("s,n,expected", [(15, 9, [9, 6]), (9, 9, [9]), (4608, 19, [19] * 242 + [10]),
                                              (1, 1, [1]), (5, 1, [1] * 5)])
    def test_slice_lengths(self, s, n, expected):
        assert slice_vector(s, n) == expected

    @given(st.integers(1, 5000), st.integers(1, 200))
    def test_slices_cover_vector(self, s, n):
        plans = slice_plans(0, s, n)
        assert len(plans) == math.ceil(s / n)
        assert sum(p.length for p in plans) == s
        assert all(a.offset + a.length == b.offset for a, b in zip(plans, plans[1:]))

    def test_rejects_zero(self):
        with pytest.raises(ValidationError):
            slice_vector(0, 4)


class TestGoldenTraces:
    @pytest.mark.parametrize("case,s", [("case1", 15), ("case2", 9)])
    @pytest.mark.parametrize("policy", POLICIES)
    def test_matches_golden(self, case, s, policy):
        sched = build_schedule(policy, 2, s, 2, 9, 447 if policy == "oxbnn" else None)
        assert sched.to_trace() == (GOLDEN / f"{case}_{policy}.trace").read_text()

    def test_case1_counts(self):
        ox = schedule_oxbnn(2, 15, 2, 9, 447)
        base = schedule_baseline(2, 15, 2, 9)
        assert len(ox.passes) == len(base.passes) == 2
        assert len(ox.reduction_ops) == 0 and len(base.reduction_ops) == 2

    def test_case2_policies_coincide(self):
        ox = schedule_oxbnn(2, 9, 2, 9, 447)
        base = schedule_baseline(2, 9, 2, 9)
        assert ox.passes == base.passes and ox.final_ids == base.final_ids
        assert not ox.reduction_ops and not base.reduction_ops


class TestScheduleAccounting:
    @given(schedule_dims())
    def test_oxbnn_counts(self, dims):
        h, s, m, n, alpha = dims
        sched = schedule_oxbnn(h, s, m, n, alpha)
        ns = math.ceil(s / n)
        assert len(sched.passes) == math.ceil(h / m) * ns
        assert len(sched.reduction_ops) == h * (math.ceil(ns / alpha) - 1)
        if ns <= alpha:
            assert not sched.reduction_ops

    @given(schedule_dims())
    def test_baseline_counts(self, dims):
        h, s, m, n, _ = dims
        sched = schedule_baseline(h, s, m, n)
        ns = math.ceil(s / n)
        assert len(sched.passes) == math.ceil(h * ns / m)
        assert len(sched.reduction_ops) == h * (ns - 1)
        assert sched.psum_count == h * ns

    @given(schedule_dims())
    def test_no_xpe_reused_within_pass(self, dims):
        h, s, m, n, alpha = dims
        for policy in POLICIES:
            sched = build_schedule(policy, h, s, m, n, alpha)
            for p in sched.passes:
                xpes = [a.xpe for a in p.assignments]
                assert len(set(xpes)) == len(xpes) and max(xpes) < m

    def test_oxbnn_is_vector_stationary(self):
        sched = schedule_oxbnn(5, 40, 2, 7, 3)
        owner = {}
        for p in sched.passes:
            for a in p.assignments:
                assert owner.setdefault(a.vector, a.xpe) == a.xpe

    def test_missing_alpha(self):
        with pytest.raises(ValidationError):
            build_schedule("oxbnn", 2, 15, 2, 9)
        with pytest.raises(ValidationError):
            build_schedule("systolic", 2, 15, 2, 9)


class TestExecution:
    @settings(max_examples=150, deadline=None)
    @given(schedule_dims(), st.integers(0, 2**31))
    def test_policies_match_unsliced(self, dims, seed):
        h, s, m, n, alpha = dims
        I, W = random_matrices(h, s, seed)
        expected = unsliced_results(I, W)
        for policy in POLICIES:
            assert execute_schedule(build_schedule(policy, h, s, m, n, alpha), I, W) == expected

    @pytest.mark.parametrize("h,s,m,n", [(3, 7, 2, 7), (1, 1, 1, 1), (4, 13, 3, 1), (1, 50, 1, 8)])
    def test_degenerate_shapes(self, h, s, m, n):
        I, W = random_matrices(h, s, 7)
        expected = unsliced_results(I, W)
        for policy in POLICIES:
            assert execute_schedule(build_schedule(policy, h, s, m, n, 1), I, W) == expected

    def test_shape_mismatch(self):
        I, W = random_matrices(2, 10, 0)
        with pytest.raises(ValidationError):
            execute_schedule(schedule_baseline(3, 10, 2, 4), I, W)


class TestLowering:
    def test_pair_order_is_window_major(self):
        x = np.random.default_rng(0).integers(0, 2, size=(4, 4, 2))
        w = np.random.default_rng(1).integers(0, 2, size=(3, 2, 2, 2))
        inputs, weights, shape = lower_conv_pairs(x, w)
        assert shape == (3, 3, 3)
        assert inputs.shape == weights.shape == (27, 8)
        assert np.array_equal(inputs[0], inputs[2]) and not np.array_equal(weights[0], weights[1])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from(POLICIES))
    def test_lowered_schedule_equals_direct_conv(self, seed, policy):
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 2, size=(5, 5, 3))
        w = rng.integers(0, 2, size=(2, 3, 3, 3))
        inputs, weights, shape = lower_conv_pairs(x, w, stride=2, padding=1)
        sched = build_schedule(policy, len(inputs), inputs.shape[1], 4, 5, 2)
        got = np.array([r.z for r in execute_schedule(sched, inputs, weights)]).reshape(shape)
        assert np.array_equal(got, conv_reference(x, w, stride=2, padding=1))
