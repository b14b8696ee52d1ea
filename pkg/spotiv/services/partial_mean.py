"""
Kernel estimate of g and the partial mean phi_hat(d, w).

Indices are s_i = ((d, w') B_hat, v_i) at the evaluation point and
t_j = ((d_j, w_j') B_hat, v_j) at the sample points, each of dimension
M_hat + 1. g is estimated with a product box kernel and phi_hat averages
g_hat(s_i) over the sample values of v.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from spotiv.config import SpotIVConfig, get_config
from spotiv.errors import EstimationError, InputError
from spotiv.logging_config import get_logger
from spotiv.models import (
    BandwidthRule,
    CateResult,
    Dataset,
    EvalPoint,
    FirstStageFit,
    KernelConfig,
    OutcomeKind,
    PhiEstimate,
    StructuralFit,
)

logger = get_logger(__name__)


class BandwidthTooSmallError(EstimationError):
    """No sample point falls inside the kernel box around any evaluation point."""

    code = "bandwidth_too_small"
    stage = "partial_mean"


def box_kernel(x: np.ndarray) -> np.ndarray:
    return (np.abs(x) <= 0.5).astype(float)


def kernel_weight(a: np.ndarray, b: np.ndarray, H: KernelConfig) -> float:
    """K_H(a, b) = prod_l (1/h_l) k((a_l - b_l) / h_l) with the box kernel k."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = H.bandwidths
    if not (a.shape == b.shape == h.shape):
        raise InputError(
            "kernel arguments and bandwidths must have equal length",
            code="dimension_mismatch",
            stage="partial_mean",
        )
    return float(np.prod(box_kernel((a - b) / h) / h))


def kernel_matrix(S: np.ndarray, T: np.ndarray, h: np.ndarray) -> np.ndarray:
    """K[i, j] = K_H(S_i, T_j) for rows of S and T."""
    K = np.ones((S.shape[0], T.shape[0]))
    for l in range(h.size):
        gaps = (S[:, l][:, None] - T[:, l][None, :]) / h[l]
        K *= box_kernel(gaps) / h[l]
    return K


def sample_indices(
    data: Dataset, structural: StructuralFit, first_stage: FirstStageFit
) -> np.ndarray:
    """t_j = ((d_j, w_j') B_hat, v_j), shape n x (M_hat + 1)."""
    design = np.column_stack([data.d, data.W])
    return np.column_stack([design @ structural.B_hat, first_stage.v_hat])


def point_indices(
    d: float, w: np.ndarray, structural: StructuralFit, first_stage: FirstStageFit
) -> np.ndarray:
    """s_i = ((d, w') B_hat, v_i), shape n x (M_hat + 1)."""
    row = np.concatenate([[d], np.asarray(w, dtype=float)]) @ structural.B_hat
    n = first_stage.v_hat.size
    return np.column_stack([np.tile(row, (n, 1)), first_stage.v_hat])


def rule_of_thumb_bandwidths(
    indices: np.ndarray, M_hat: int, rot_constant: float = 0.9
) -> KernelConfig:
    """h_k = c * min(sd_k, IQR_k / 1.34) * n^(-1 / (5 + M_hat)) per index column."""
    n = indices.shape[0]
    sd = np.std(indices, axis=0, ddof=1)
    spread = stats.iqr(indices, axis=0) / 1.34
    scale = np.minimum(sd, spread)
    # a zero IQR falls back to the standard deviation
    scale = np.where(scale > 0, scale, np.maximum(sd, spread))
    if not np.all(scale > 0):
        raise BandwidthTooSmallError("an index has no spread; bandwidth would be 0")
    bandwidths = rot_constant * scale * n ** (-1.0 / (5 + M_hat))
    return KernelConfig(
        bandwidths=bandwidths, rule=BandwidthRule.ROT, rot_constant=rot_constant
    )


def theory_bandwidths(n: int, dims: int, mu: float = 0.1) -> KernelConfig:
    """Common bandwidth h = n^-mu, mu in (0, 1/6), in every dimension."""
    if not 0 < mu < 1.0 / 6.0:
        raise InputError(
            "mu must lie in (0, 1/6)", code="bad_bandwidth", stage="partial_mean"
        )
    return KernelConfig(bandwidths=np.full(dims, n ** (-mu)), rule=BandwidthRule.FIXED)


def fixed_bandwidths(values: Sequence[float], dims: int) -> KernelConfig:
    """User bandwidths; a single value is used for every dimension."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 1:
        values = np.full(dims, values[0])
    if values.size != dims:
        raise InputError(
            f"expected {dims} bandwidths (M_hat + 1), got {values.size}",
            code="bad_bandwidth",
            stage="partial_mean",
        )
    if not np.all(values > 0):
        raise InputError(
            "bandwidths must be positive", code="bad_bandwidth", stage="partial_mean"
        )
    return KernelConfig(bandwidths=values, rule=BandwidthRule.FIXED)


def kernel_config_for(
    data: Dataset,
    structural: StructuralFit,
    first_stage: FirstStageFit,
    bandwidth: Optional[Sequence[float]] = None,
    config: Optional[SpotIVConfig] = None,
) -> KernelConfig:
    """Rule-of-thumb bandwidths over the sample indices unless overridden."""
    config = config or get_config()
    dims = structural.B_hat.shape[1] + 1
    if bandwidth is not None:
        return fixed_bandwidths(bandwidth, dims)
    T = sample_indices(data, structural, first_stage)
    return rule_of_thumb_bandwidths(T, dims - 1, config.rot_constant)


def kernel_regression(
    S: np.ndarray,
    T: np.ndarray,
    y: np.ndarray,
    H: KernelConfig,
    chunk_size: int = 512,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nadaraya-Watson values g_hat(S_i) and their kernel denominators.

    Rows with a zero denominator get g_hat = nan.
    """
    y = np.asarray(y, dtype=float)
    fitted = np.full(S.shape[0], np.nan)
    denominators = np.zeros(S.shape[0])
    for start in range(0, S.shape[0], chunk_size):
        block = slice(start, start + chunk_size)
        K = kernel_matrix(S[block], T, H.bandwidths)
        denom = K.sum(axis=1)
        numer = (K * y).sum(axis=1)
        positive = denom > 0
        values = np.full(denom.shape, np.nan)
        values[positive] = numer[positive] / denom[positive]
        fitted[block] = values
        denominators[block] = denom
    return fitted, denominators


def _partial_mean(
    S: np.ndarray,
    T: np.ndarray,
    y: np.ndarray,
    H: KernelConfig,
    chunk_size: int,
) -> PhiEstimate:
    n = T.shape[0]
    y = np.asarray(y, dtype=float)
    weights = np.zeros(n)
    g_sum = 0.0
    retained = 0
    for start in range(0, S.shape[0], chunk_size):
        K = kernel_matrix(S[start : start + chunk_size], T, H.bandwidths)
        denom = K.sum(axis=1)
        positive = denom > 0
        if not np.any(positive):
            continue
        normalized = K[positive] / denom[positive][:, None]
        weights += normalized.sum(axis=0)
        # numerator summed like the denominator, so constant y gives exactly y
        numer = (K[positive] * y).sum(axis=1)
        g_sum += float((numer / denom[positive]).sum())
        retained += int(positive.sum())
    if retained == 0:
        raise BandwidthTooSmallError("bandwidth too small at evaluation point")
    return PhiEstimate(
        phi=g_sum / retained, weights=weights / S.shape[0], dropped=S.shape[0] - retained
    )


def estimate_phi(
    d: float,
    w: np.ndarray,
    structural: StructuralFit,
    first_stage: FirstStageFit,
    data: Dataset,
    H: KernelConfig,
    chunk_size: Optional[int] = None,
) -> PhiEstimate:
    """
    phi_hat(d, w): mean of g_hat(s_i) over the i with a positive denominator.

    weights[j] = (1/n) sum_i K(s_i, t_j) / sum_j' K(s_i, t_j'), so the weights
    sum to the retained share of evaluation points.
    """
    chunk_size = chunk_size or get_config().kernel_chunk_size
    S = point_indices(d, w, structural, first_stage)
    T = sample_indices(data, structural, first_stage)
    return _partial_mean(S, T, data.y, H, chunk_size)


def estimate_phi_curve(
    grid: Sequence[float],
    w: np.ndarray,
    structural: StructuralFit,
    first_stage: FirstStageFit,
    data: Dataset,
    H: KernelConfig,
) -> np.ndarray:
    """phi_hat(d, w) over a grid of exposure levels; nan where unsupported."""
    values = []
    for level in grid:
        try:
            values.append(estimate_phi(level, w, structural, first_stage, data, H).phi)
        except BandwidthTooSmallError:
            values.append(np.nan)
    return np.array(values)


def _variance_proxy(
    data: Dataset, T: np.ndarray, H: KernelConfig, chunk_size: int
) -> np.ndarray:
    """g(1 - g) for binary outcomes, squared residuals otherwise, at each t_j."""
    fitted, _ = kernel_regression(T, T, data.y, H, chunk_size)
    if data.outcome_kind == OutcomeKind.BINARY:
        return fitted * (1.0 - fitted)
    return (np.asarray(data.y, dtype=float) - fitted) ** 2


def estimate_cate(
    point: EvalPoint,
    structural: StructuralFit,
    first_stage: FirstStageFit,
    data: Dataset,
    H: KernelConfig,
    config: Optional[SpotIVConfig] = None,
) -> CateResult:
    """
    CATE(d, d' | w) = phi_hat(d, w) - phi_hat(d', w) with a plug-in SE.

    The plug-in SE is sqrt(sum_j c_j^2 var_j), where c_j is the difference of
    the normalized linear weights of the two partial means and var_j the
    variance proxy at t_j.
    """
    config = config or get_config()
    chunk = config.kernel_chunk_size
    T = sample_indices(data, structural, first_stage)
    S_d = point_indices(point.d, point.w, structural, first_stage)
    S_dp = point_indices(point.d_prime, point.w, structural, first_stage)

    at_d = _partial_mean(S_d, T, data.y, H, chunk)
    at_dp = _partial_mean(S_dp, T, data.y, H, chunk)

    c = at_d.weights / at_d.retained_share - at_dp.weights / at_dp.retained_share
    if np.any(c != 0):
        variance = _variance_proxy(data, T, H, chunk)
        plug_in_se = float(np.sqrt(np.sum(c**2 * variance)))
    else:
        plug_in_se = 0.0

    dropped = at_d.dropped + at_dp.dropped
    if dropped:
        logger.debug(
            "Dropped evaluation points with empty kernel neighbourhoods",
            extra={"dropped": dropped, "n": data.n},
        )
    return CateResult(
        phi_d=at_d.phi,
        phi_dprime=at_dp.phi,
        cate=at_d.phi - at_dp.phi,
        plug_in_se=plug_in_se,
        dropped_points=dropped,
        weights_a=at_d.weights,
        weights_c=c,
    )
