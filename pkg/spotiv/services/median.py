"""
Median rule for B_hat and the voting check of the majority rule.

Every relevant IV j gives a candidate ratio Theta_hat[j, m] / gamma_hat[j];
when more than half of them are valid the median lands on a valid one.
"""

import warnings
from typing import Optional

import numpy as np
import statsmodels.api as sm
from statsmodels.discrete.discrete_model import BinaryResultsWrapper

from spotiv.config import SpotIVConfig, get_config
from spotiv.errors import EstimationError, InputError
from spotiv.logging_config import get_logger
from spotiv.models import (
    Dataset,
    FirstStageFit,
    MajorityTestResult,
    OutcomeKind,
    PHatSource,
    SirFit,
    StructuralFit,
)
from spotiv.services.partial_mean import kernel_regression, rule_of_thumb_bandwidths

logger = get_logger(__name__)


class NoRelevantInstrumentsError(EstimationError):
    """The first stage selected no relevant IV."""

    code = "no_relevant_instruments"
    stage = "median"


def _require_relevant(fs: FirstStageFit) -> list:
    if not fs.S_hat:
        raise NoRelevantInstrumentsError("no relevant instruments")
    return list(fs.S_hat)


def fit_structural(sir: SirFit, fs: FirstStageFit) -> StructuralFit:
    """
    b_m = median_j in S_hat of Theta_hat[j, m] / gamma_hat[j] and
    B_hat = [b'; Theta_hat - gamma_hat b'].
    """
    S = _require_relevant(fs)
    Theta = sir.Theta_hat
    gamma = fs.gamma_hat
    ratios = Theta[S, :] / gamma[S][:, None]
    # even |S|: mean of the two central order statistics
    b_hat = np.median(ratios, axis=0)
    B_hat = np.vstack([b_hat[None, :], Theta - np.outer(gamma, b_hat)])
    return StructuralFit(b_hat=b_hat, B_hat=B_hat, ratios=ratios, S_hat=S)


def _logistic_probabilities(
    y: np.ndarray, regressors: np.ndarray
) -> Optional[BinaryResultsWrapper]:
    exog = sm.add_constant(regressors, has_constant="add")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return sm.Logit(np.asarray(y, dtype=float), exog).fit(disp=0, maxiter=200)
    except Exception as e:
        logger.warning(f"Logistic approximation failed: {e}")
        return None


def _kernel_probabilities(
    data: Dataset, sir: SirFit, fs: FirstStageFit, config: SpotIVConfig
) -> np.ndarray:
    """g_hat(w_i' Theta_hat, v_i) at the sample points."""
    T = np.column_stack([data.W @ sir.Theta_hat, fs.v_hat])
    H = rule_of_thumb_bandwidths(T, sir.M_hat, config.rot_constant)
    fitted, _ = kernel_regression(T, T, data.y, H, config.kernel_chunk_size)
    return fitted


def _voting_scale(data: Dataset, sir: SirFit, fs: FirstStageFit) -> float:
    """
    Logistic coefficient of the leading index w' Theta_hat[:, 0].

    The thresholds are on the scale of a reduced-form coefficient, so the
    unit-norm SIR direction is put on that scale before votes are counted.
    """
    index = data.W @ sir.Theta_hat[:, 0]
    fit = _logistic_probabilities(data.y, np.column_stack([index, fs.v_hat]))
    if fit is None or not np.isfinite(fit.params[1]) or fit.params[1] == 0:
        logger.warning("Voting scale unavailable; using the unit-norm direction")
        return 1.0
    return float(fit.params[1])


def majority_vote_test(
    sir: SirFit,
    fs: FirstStageFit,
    data: Dataset,
    p_hat_source: Optional[PHatSource] = None,
    config: Optional[SpotIVConfig] = None,
    threshold_form: Optional[str] = None,
) -> MajorityTestResult:
    """
    IV k receives a vote from j when |theta_k - b_j gamma_k| <= eps(j, k),
    b_j = theta_j / gamma_j, with theta the leading column of Theta_hat and

        eps(j, k) = c * ||W (U_k - (gamma_k / gamma_j) U_j)|| / sqrt(n)
                      * sqrt(log(max(p_z, n)) / n),
        U = {(1/n) sum_i w_i w_i' p_i (1 - p_i)}^-1.

    That is the "plain" form. The default "sandwich" form weights the norm
    by p_i (1 - p_i), which makes it the standard error of the contrast,
    and uses sqrt(c * log(max(p_z, n))) as the multiplier.

    The majority rule is rejected when at most |S|/2 IVs collect more than
    |S|/2 votes.
    """
    config = config or get_config()
    source = PHatSource(p_hat_source or config.p_hat_source)
    form = threshold_form or config.vote_threshold
    if form not in ("sandwich", "plain"):
        raise InputError(
            f"unknown threshold form: {form}", code="bad_threshold_form", stage="median"
        )
    if data.outcome_kind != OutcomeKind.BINARY:
        raise InputError(
            "the voting test needs a binary outcome",
            code="outcome_kind_mismatch",
            stage="median",
        )
    S = _require_relevant(fs)
    W = data.W
    n = data.n

    if source == PHatSource.LOGISTIC:
        fit = _logistic_probabilities(data.y, np.column_stack([W, fs.v_hat]))
        if fit is None:
            source = PHatSource.KERNEL
            p_hat = _kernel_probabilities(data, sir, fs, config)
        else:
            p_hat = np.asarray(fit.predict())
    else:
        p_hat = _kernel_probabilities(data, sir, fs, config)

    p_hat = np.clip(p_hat, config.p_hat_clamp, 1.0 - config.p_hat_clamp)
    weighted_gram = (W * (p_hat * (1.0 - p_hat))[:, None]).T @ W / n

    ridge_fallback = False
    if np.linalg.cond(weighted_gram) >= config.condition_limit:
        ridge_fallback = True
        ridge = 1e-8 * np.trace(weighted_gram) / data.p
        logger.warning(
            "Weighted Gram matrix is singular; adding a ridge",
            extra={"ridge": ridge},
        )
        weighted_gram = weighted_gram + ridge * np.eye(data.p)
    U = np.linalg.inv(weighted_gram)

    scale = _voting_scale(data, sir, fs)
    theta = scale * sir.Theta_hat[:, 0]
    gamma = fs.gamma_hat

    # ||x||^2 = A_kk - 2 r A_jk + r^2 A_jj for x = U_k - r U_j, A = U' G U
    if form == "sandwich":
        A = U.T @ weighted_gram @ U
        multiplier = np.sqrt(config.vote_constant)
    else:
        A = U.T @ (W.T @ W / n) @ U
        multiplier = config.vote_constant
    rate = np.sqrt(np.log(max(data.p_z, n)) / n)

    votes = {}
    thresholds = {}
    for k in S:
        count = 0
        for j in S:
            if j == k:
                # an IV always votes for itself
                eps, deviation = 0.0, 0.0
            else:
                r = gamma[k] / gamma[j]
                squared = A[k, k] - 2.0 * r * A[j, k] + r**2 * A[j, j]
                eps = multiplier * np.sqrt(max(squared, 0.0)) * rate
                deviation = abs(theta[k] - (theta[j] / gamma[j]) * gamma[k])
            thresholds[(j, k)] = float(eps)
            if deviation <= eps:
                count += 1
        votes[k] = count

    majority_set = [k for k in S if votes[k] > len(S) / 2]
    passed = len(majority_set) > len(S) / 2
    logger.debug(
        "Majority vote test",
        extra={
            "relevant": len(S),
            "majority_set_size": len(majority_set),
            "passed": passed,
            "p_hat_source": source.value,
            "threshold_form": form,
        },
    )
    return MajorityTestResult(
        votes=votes,
        thresholds=thresholds,
        passed=passed,
        p_hat_source=source,
        majority_set=majority_set,
        ridge_fallback=ridge_fallback,
        scale=scale,
        threshold_form=form,
    )
