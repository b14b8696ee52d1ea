"""First stage: least-squares exposure model and relevant-IV selection."""

from typing import Optional

import numpy as np

from spotiv.config import SpotIVConfig, get_config
from spotiv.errors import EstimationError
from spotiv.logging_config import get_logger
from spotiv.models import Dataset, FirstStageFit

logger = get_logger(__name__)


class RankDeficientDesignError(EstimationError):
    """W'W is singular or too ill-conditioned to solve."""

    code = "rank_deficient_design"
    stage = "first_stage"


def fit_first_stage(
    data: Dataset, config: Optional[SpotIVConfig] = None
) -> FirstStageFit:
    """
    Regress d on W and select the relevant IVs.

    gamma_hat comes from a QR solve; sigma_v^2 divides by n. IV j (j < p_z)
    is relevant when |gamma_j| >= sigma_v * sqrt(c * {Sigma^-1}_jj * log(n) / n)
    with c = config.selection_constant.
    """
    config = config or get_config()
    W, d = data.W, data.d
    n, p = W.shape

    Q, R = np.linalg.qr(W)
    singular_values = np.linalg.svd(R, compute_uv=False)
    if singular_values[-1] <= 0:
        raise RankDeficientDesignError("rank-deficient design: W'W is singular")
    # cond(W'W) = cond(R)^2
    condition = (singular_values[0] / singular_values[-1]) ** 2
    if not np.isfinite(condition) or condition >= config.condition_limit:
        raise RankDeficientDesignError(
            f"rank-deficient design: cond(W'W) = {condition:.3g}"
        )

    gamma_hat = np.linalg.solve(R, Q.T @ d)
    v_hat = d - W @ gamma_hat
    sigma_v_hat = float(np.sqrt(np.sum(v_hat**2) / n))

    Sigma_hat = W.T @ W / n
    R_inv = np.linalg.solve(R, np.eye(p))
    # (W'W/n)^-1 = n R^-1 R^-T
    Sigma_hat_inv = n * (R_inv @ R_inv.T)
    Sigma_hat_inv = (Sigma_hat_inv + Sigma_hat_inv.T) / 2.0

    p_z = data.p_z
    thresholds = sigma_v_hat * np.sqrt(
        config.selection_constant * np.diag(Sigma_hat_inv)[:p_z] * np.log(n) / n
    )
    S_hat = [j for j in range(p_z) if abs(gamma_hat[j]) >= thresholds[j]]

    warnings = []
    if not S_hat:
        warnings.append("no relevant instruments selected")
        logger.warning(
            "First stage selected no relevant instruments",
            extra={"n": n, "p_z": p_z, "sigma_v_hat": sigma_v_hat},
        )
    else:
        strength = float(np.min(np.abs(gamma_hat[S_hat]) / thresholds[S_hat]))
        logger.debug(
            "First stage fitted",
            extra={
                "n": n,
                "selected": len(S_hat),
                "p_z": p_z,
                "min_selection_ratio": round(strength, 3),
            },
        )

    return FirstStageFit(
        gamma_hat=gamma_hat,
        v_hat=v_hat,
        sigma_v_hat=sigma_v_hat,
        Sigma_hat=Sigma_hat,
        Sigma_hat_inv=Sigma_hat_inv,
        S_hat=S_hat,
        thresholds=thresholds,
        warnings=warnings,
    )
