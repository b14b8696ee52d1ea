"""
Tests for the box-kernel regression, the partial mean and the plug-in SE.
"""

import numpy as np
import pytest

from spotiv.config import SpotIVConfig
from spotiv.errors import InputError
from spotiv.models import (
    Dataset,
    EvalPoint,
    FirstStageFit,
    KernelConfig,
    OutcomeKind,
    StructuralFit,
)
from spotiv.services.partial_mean import (
    BandwidthTooSmallError,
    box_kernel,
    estimate_cate,
    estimate_phi,
    estimate_phi_curve,
    fixed_bandwidths,
    kernel_config_for,
    kernel_weight,
    point_indices,
    rule_of_thumb_bandwidths,
    sample_indices,
    theory_bandwidths,
)


def make_problem(n=60, p=3, M=1, seed=0, y=None, outcome_kind=OutcomeKind.CONTINUOUS):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, p))
    d = W.sum(axis=1) + rng.standard_normal(n)
    v = rng.standard_normal(n)
    if y is None:
        y = np.sin(d) + 0.3 * rng.standard_normal(n)
    data = Dataset(y=y, d=d, W=W, p_z=p, outcome_kind=outcome_kind)
    B = rng.standard_normal((p + 1, M)) * 0.5
    B[0, 0] = 0.8
    structural = StructuralFit(
        b_hat=B[0], B_hat=B, ratios=np.zeros((p, M)), S_hat=list(range(p))
    )
    first_stage = FirstStageFit(
        gamma_hat=np.ones(p),
        v_hat=v,
        sigma_v_hat=float(v.std()),
        Sigma_hat=np.eye(p),
        Sigma_hat_inv=np.eye(p),
        S_hat=list(range(p)),
        thresholds=np.full(p, 0.1),
    )
    return data, structural, first_stage


def brute_force_phi(d, w, structural, first_stage, data, H):
    """Double loop over evaluation and sample points."""
    S = point_indices(d, w, structural, first_stage)
    T = sample_indices(data, structural, first_stage)
    values = []
    for s in S:
        weights = np.array([kernel_weight(s, t, H) for t in T])
        if weights.sum() > 0:
            values.append(np.dot(weights, data.y) / weights.sum())
    return np.mean(values), S.shape[0] - len(values)


@pytest.fixture
def config():
    return SpotIVConfig(threads=1, kernel_chunk_size=7)


@pytest.fixture
def problem():
    return make_problem()


class TestKernel:
    def test_box_kernel_support(self):
        np.testing.assert_array_equal(
            box_kernel(np.array([-0.6, -0.5, 0.0, 0.5, 0.51])), [0, 1, 1, 1, 0]
        )

    def test_kernel_weight_is_product(self):
        H = KernelConfig(bandwidths=[0.5, 2.0])
        assert kernel_weight([0.0, 0.0], [0.2, 0.9], H) == pytest.approx(1.0)
        assert kernel_weight([0.0, 0.0], [0.3, 0.0], H) == 0.0

    def test_kernel_weight_length_mismatch(self):
        H = KernelConfig(bandwidths=[1.0, 1.0])
        with pytest.raises(InputError):
            kernel_weight([0.0], [0.0], H)


class TestBandwidths:
    def test_rule_of_thumb(self):
        rng = np.random.default_rng(3)
        T = rng.standard_normal((500, 2)) * [1.0, 3.0]
        H = rule_of_thumb_bandwidths(T, M_hat=1)
        sd = T.std(axis=0, ddof=1)
        iqr = np.subtract(*np.percentile(T, [75, 25], axis=0))
        expected = 0.9 * np.minimum(sd, iqr / 1.34) * 500 ** (-1 / 6)
        np.testing.assert_allclose(H.bandwidths, expected)

    def test_constant_index_rejected(self):
        T = np.column_stack([np.ones(50), np.arange(50.0)])
        with pytest.raises(BandwidthTooSmallError):
            rule_of_thumb_bandwidths(T, M_hat=1)

    def test_fixed_broadcasts_scalar(self):
        np.testing.assert_array_equal(fixed_bandwidths([0.4], 3).bandwidths, [0.4] * 3)

    def test_fixed_wrong_count(self):
        with pytest.raises(InputError) as exc:
            fixed_bandwidths([0.4, 0.5], 3)
        assert exc.value.code == "bad_bandwidth"

    def test_theory_rate(self):
        H = theory_bandwidths(1000, 2, mu=0.1)
        np.testing.assert_allclose(H.bandwidths, 1000 ** -0.1)
        with pytest.raises(InputError):
            theory_bandwidths(1000, 2, mu=0.2)

    def test_override_wins(self, problem, config):
        data, structural, first_stage = problem
        H = kernel_config_for(data, structural, first_stage, bandwidth=[0.7], config=config)
        assert H.rule.value == "fixed"
        assert H.bandwidths.size == 2


class TestEstimatePhi:
    @pytest.mark.parametrize("seed", range(50))
    def test_matches_double_loop(self, seed):
        n = 40 + 3 * seed
        M = 1 + seed % 2
        data, structural, first_stage = make_problem(n=n, M=M, seed=seed)
        H = KernelConfig(bandwidths=np.full(M + 1, 0.6 + 0.02 * seed))
        # evaluating at a sample row keeps that row inside its own kernel box
        k = seed % n
        d, w = data.d[k], data.W[k]
        result = estimate_phi(d, w, structural, first_stage, data, H, chunk_size=11)
        expected, dropped = brute_force_phi(d, w, structural, first_stage, data, H)
        assert result.dropped < n
        assert result.phi == pytest.approx(expected, rel=1e-12, abs=1e-14)
        assert result.dropped == dropped

    def test_constant_outcome(self):
        n = 60
        data, structural, first_stage = make_problem(y=np.ones(n))
        H = KernelConfig(bandwidths=[0.8, 0.8])
        result = estimate_phi(0.0, np.zeros(3), structural, first_stage, data, H, 16)
        assert result.phi == 1.0

    def test_weights_sum_to_retained_share(self, problem):
        data, structural, first_stage = problem
        H = KernelConfig(bandwidths=[0.5, 0.5])
        result = estimate_phi(1.0, data.W[3], structural, first_stage, data, H, 16)
        assert result.retained_share == pytest.approx((data.n - result.dropped) / data.n)
        assert np.all(result.weights >= 0)

    def test_huge_bandwidth_gives_sample_mean(self, problem):
        data, structural, first_stage = problem
        H = KernelConfig(bandwidths=[1e6, 1e6])
        result = estimate_phi(0.0, data.W[0], structural, first_stage, data, H, 16)
        assert result.phi == pytest.approx(data.y.mean())
        np.testing.assert_allclose(result.weights, 1.0 / data.n)

    def test_far_point_raises(self, problem):
        data, structural, first_stage = problem
        H = KernelConfig(bandwidths=[0.05, 0.05])
        with pytest.raises(BandwidthTooSmallError, match="bandwidth too small") as exc:
            estimate_phi(1e4, data.W[0], structural, first_stage, data, H, 16)
        assert exc.value.code == "bandwidth_too_small"

    def test_curve_marks_unsupported_levels(self, problem):
        data, structural, first_stage = problem
        H = KernelConfig(bandwidths=[0.5, 0.5])
        curve = estimate_phi_curve([0.0, 1e4], data.W[0], structural, first_stage, data, H)
        assert np.isfinite(curve[0])
        assert np.isnan(curve[1])


class TestEstimateCate:
    @pytest.fixture
    def H(self):
        return KernelConfig(bandwidths=[1.0, 1.0])

    def test_difference_of_partial_means(self, problem, H, config):
        data, structural, first_stage = problem
        point = EvalPoint(d=-0.5, d_prime=0.5, w=data.W[1])
        result = estimate_cate(point, structural, first_stage, data, H, config)
        at_d = estimate_phi(-0.5, data.W[1], structural, first_stage, data, H, 7)
        at_dp = estimate_phi(0.5, data.W[1], structural, first_stage, data, H, 7)
        assert result.cate == pytest.approx(at_d.phi - at_dp.phi, abs=1e-14)
        assert result.phi_d == pytest.approx(at_d.phi, abs=1e-14)
        assert result.plug_in_se > 0

    def test_equal_levels(self, problem, H, config):
        data, structural, first_stage = problem
        point = EvalPoint(d=0.2, d_prime=0.2, w=data.W[1])
        result = estimate_cate(point, structural, first_stage, data, H, config)
        assert result.cate == 0.0
        assert result.plug_in_se == 0.0

    def test_swap_negates(self, problem, H, config):
        data, structural, first_stage = problem
        point = EvalPoint(d=-0.5, d_prime=0.5, w=data.W[1])
        forward = estimate_cate(point, structural, first_stage, data, H, config)
        backward = estimate_cate(point.swapped(), structural, first_stage, data, H, config)
        assert forward.cate == -backward.cate
        assert forward.plug_in_se == pytest.approx(backward.plug_in_se)

    def test_contrast_weights_sum_to_zero(self, problem, H, config):
        data, structural, first_stage = problem
        point = EvalPoint(d=-0.5, d_prime=0.5, w=data.W[1])
        result = estimate_cate(point, structural, first_stage, data, H, config)
        assert result.weights_c.sum() == pytest.approx(0.0, abs=1e-12)

    def test_huge_bandwidth_gives_zero_effect(self, problem, config):
        data, structural, first_stage = problem
        H = KernelConfig(bandwidths=[1e6, 1e6])
        point = EvalPoint(d=-0.5, d_prime=0.5, w=data.W[1])
        result = estimate_cate(point, structural, first_stage, data, H, config)
        assert result.cate == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(result.weights_c, 0.0, atol=1e-15)

    def test_binary_variance_proxy(self, H, config):
        rng = np.random.default_rng(9)
        y = (rng.uniform(size=60) < 0.5).astype(int)
        y[:2] = [0, 1]
        data, structural, first_stage = make_problem(y=y, outcome_kind=OutcomeKind.BINARY)
        point = EvalPoint(d=-0.5, d_prime=0.5, w=data.W[1])
        result = estimate_cate(point, structural, first_stage, data, H, config)
        # |c_j| <= 2 and g(1 - g) <= 1/4
        assert 0 <= result.plug_in_se <= np.sqrt(data.n)
        assert abs(result.cate) <= 1.0
