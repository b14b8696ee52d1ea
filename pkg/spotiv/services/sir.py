"""
Sliced inverse regression for the reduced-form index matrix.

Binary outcomes use the two-class inverse regression; continuous outcomes
use classic slicing on the order statistics of y, or a kernel
estimate of E[w | y] when configured. All work on the standardized
covariates Sigma^{-1/2} w and return the leading eigenvectors
of Omega_hat as Theta_hat.
"""

from typing import Optional, Tuple

import numpy as np
from scipy import stats

from spotiv.config import SpotIVConfig, get_config
from spotiv.errors import EstimationError, InputError
from spotiv.logging_config import get_logger
from spotiv.models import Dataset, FirstStageFit, OutcomeKind, SirFit

logger = get_logger(__name__)


class EmptyClassError(EstimationError):
    """One outcome class has no observations."""

    code = "empty_class"
    stage = "sir"


class DegenerateSlicingError(EstimationError):
    """Too few distinct outcome values to form the requested slices."""

    code = "degenerate_slicing"
    stage = "sir"


def inverse_sqrt(
    Sigma: np.ndarray, relative_floor: float = 1e-10
) -> Tuple[np.ndarray, int]:
    """
    Symmetric inverse square root via eigendecomposition.

    Eigenvalues below relative_floor * lambda_max are raised to that value;
    the count of raised eigenvalues is returned alongside.
    """
    Sigma = (Sigma + Sigma.T) / 2.0
    eigenvalues, eigenvectors = np.linalg.eigh(Sigma)
    floor = relative_floor * max(float(eigenvalues.max()), 0.0)
    floored = int(np.sum(eigenvalues < floor))
    eigenvalues = np.maximum(eigenvalues, floor)
    if floor <= 0:
        raise EstimationError(
            "covariance matrix is zero", code="degenerate_covariance", stage="sir"
        )
    root = eigenvectors @ np.diag(eigenvalues**-0.5) @ eigenvectors.T
    return (root + root.T) / 2.0, floored


def _standardized(
    data: Dataset, Sigma_hat: Optional[np.ndarray], relative_floor: float
) -> Tuple[np.ndarray, np.ndarray, int]:
    if Sigma_hat is None:
        Sigma_hat = data.W.T @ data.W / data.n
    root, floored = inverse_sqrt(Sigma_hat, relative_floor)
    if floored:
        logger.warning(
            "Floored small eigenvalues of Sigma_hat",
            extra={"floored": floored, "p": data.p},
        )
    return data.W @ root, root, floored


def estimate_omega_binary(
    data: Dataset,
    Sigma_hat: Optional[np.ndarray] = None,
    relative_floor: float = 1e-10,
) -> Tuple[np.ndarray, dict]:
    """Omega = P(y=1) P(y=0) (alpha(1) - alpha(0))(alpha(1) - alpha(0))'."""
    if data.outcome_kind != OutcomeKind.BINARY:
        raise InputError(
            "binary inverse regression needs a binary outcome",
            code="outcome_kind_mismatch",
            stage="sir",
        )
    standardized, root, floored = _standardized(data, Sigma_hat, relative_floor)
    ones = data.y == 1
    n1 = int(ones.sum())
    n0 = data.n - n1
    if n1 == 0 or n0 == 0:
        raise EmptyClassError(
            f"outcome class {0 if n0 == 0 else 1} has no observations"
        )
    alpha_1 = standardized[ones].mean(axis=0)
    alpha_0 = standardized[~ones].mean(axis=0)
    p1 = n1 / data.n
    gap = alpha_1 - alpha_0
    Omega_hat = p1 * (1.0 - p1) * np.outer(gap, gap)
    aux = {
        "alpha_1": alpha_1,
        "alpha_0": alpha_0,
        "p1": p1,
        "Sigma_inv_sqrt": root,
        "floored": floored,
    }
    return Omega_hat, aux


def slice_partition(y: np.ndarray, n_slices: int) -> list:
    """Split the order of y into n_slices contiguous near-equal index blocks."""
    order = np.argsort(y, kind="stable")
    return [block for block in np.array_split(order, n_slices)]


def estimate_omega_continuous(
    data: Dataset,
    n_slices: int = 10,
    Sigma_hat: Optional[np.ndarray] = None,
    relative_floor: float = 1e-10,
) -> Tuple[np.ndarray, dict]:
    """Classic SIR: Omega = sum_h (n_h / n) m_h m_h' over slices of sorted y."""
    if n_slices < 2:
        raise InputError("n_slices must be at least 2", code="bad_slices", stage="sir")
    distinct = np.unique(data.y).size
    if distinct < n_slices:
        raise DegenerateSlicingError(
            f"degenerate slicing: {distinct} distinct outcome values "
            f"for {n_slices} slices"
        )
    standardized, root, floored = _standardized(data, Sigma_hat, relative_floor)
    centered = standardized - standardized.mean(axis=0)
    p = data.p
    Omega_hat = np.zeros((p, p))
    slice_means = []
    slice_sizes = []
    for block in slice_partition(data.y, n_slices):
        mean = centered[block].mean(axis=0)
        Omega_hat += (block.size / data.n) * np.outer(mean, mean)
        slice_means.append(mean)
        slice_sizes.append(block.size)
    aux = {
        "slice_means": np.array(slice_means),
        "slice_sizes": np.array(slice_sizes),
        "Sigma_inv_sqrt": root,
        "floored": floored,
    }
    return (Omega_hat + Omega_hat.T) / 2.0, aux


def estimate_omega_kernel(
    data: Dataset,
    Sigma_hat: Optional[np.ndarray] = None,
    relative_floor: float = 1e-10,
    chunk_size: int = 512,
) -> Tuple[np.ndarray, dict]:
    """
    Kernel inverse regression: Omega = (1/n) sum_i m(y_i) m(y_i)' with
    m(y) = E[Sigma^{-1/2} w | y] fitted by Nadaraya-Watson in y.

    Gaussian kernel, undersmoothed: h = 1.06 * min(sd, IQR / 1.34) * n^(-1/3).
    """
    if data.outcome_kind != OutcomeKind.CONTINUOUS:
        raise InputError(
            "kernel inverse regression needs a continuous outcome",
            code="outcome_kind_mismatch",
            stage="sir",
        )
    y = np.asarray(data.y, dtype=float)
    sd = float(np.std(y, ddof=1))
    spread = float(stats.iqr(y)) / 1.34
    scale = min(sd, spread) if min(sd, spread) > 0 else max(sd, spread)
    if not scale > 0:
        raise DegenerateSlicingError("outcome is constant; no inverse regression")
    bandwidth = 1.06 * scale * data.n ** (-1.0 / 3.0)

    standardized, root, floored = _standardized(data, Sigma_hat, relative_floor)
    centered = standardized - standardized.mean(axis=0)
    inverse_means = np.empty_like(centered)
    for start in range(0, data.n, chunk_size):
        block = slice(start, start + chunk_size)
        # each row's own point keeps the denominator positive
        K = stats.norm.pdf((y[block, None] - y[None, :]) / bandwidth)
        inverse_means[block] = (K @ centered) / K.sum(axis=1, keepdims=True)
    Omega_hat = inverse_means.T @ inverse_means / data.n
    aux = {
        "bandwidth": bandwidth,
        "Sigma_inv_sqrt": root,
        "floored": floored,
    }
    return (Omega_hat + Omega_hat.T) / 2.0, aux


def select_rank(eigenvalues: np.ndarray, n: int, p: int, c0: float) -> int:
    """
    BIC-type rank choice: argmax over m in 1..p of
        (n/2) sum_{i>m} {log(l_i + 1) - l_i} 1(l_i > 0) - n^c0 m (2p - m + 1) / 2.

    Ties go to the smaller m.
    """
    lam = np.asarray(eigenvalues, dtype=float)[:p]
    positive = np.where(lam > 0, np.log1p(np.where(lam > 0, lam, 0.0)) - lam, 0.0)
    # tail[m] = sum over i > m (1-based), i.e. positions m..p-1
    tail = np.concatenate([np.cumsum(positive[::-1])[::-1], [0.0]])
    best_m, best_value = 1, -np.inf
    for m in range(1, p + 1):
        value = (n / 2.0) * tail[m] - n**c0 * m * (2 * p - m + 1) / 2.0
        if value > best_value:
            best_m, best_value = m, value
    return best_m


def _orient(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    oriented = vectors.copy()
    for k in range(oriented.shape[1]):
        column = oriented[:, k]
        if column[np.argmax(np.abs(column))] < 0:
            oriented[:, k] = -column
    return oriented


def fit_sir(
    data: Dataset,
    first_stage: Optional[FirstStageFit] = None,
    c0: Optional[float] = None,
    n_slices: Optional[int] = None,
    config: Optional[SpotIVConfig] = None,
) -> SirFit:
    """Omega_hat for the outcome kind, its eigenvectors, and the rank M_hat."""
    config = config or get_config()
    c0 = config.c0 if c0 is None else c0
    n_slices = config.n_slices if n_slices is None else n_slices
    Sigma_hat = first_stage.Sigma_hat if first_stage is not None else None

    if data.outcome_kind == OutcomeKind.BINARY:
        Omega_hat, aux = estimate_omega_binary(data, Sigma_hat, config.sqrt_floor)
        used_slices = None
    elif config.omega_method == "kernel":
        Omega_hat, aux = estimate_omega_kernel(
            data, Sigma_hat, config.sqrt_floor, config.kernel_chunk_size
        )
        used_slices = None
    else:
        Omega_hat, aux = estimate_omega_continuous(
            data, n_slices, Sigma_hat, config.sqrt_floor
        )
        used_slices = n_slices

    eigenvalues, eigenvectors = np.linalg.eigh(Omega_hat)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = _orient(eigenvectors[:, order])

    M_hat = select_rank(eigenvalues, data.n, data.p, c0)
    Theta_hat = eigenvectors[:, :M_hat]
    directions = aux["Sigma_inv_sqrt"] @ Theta_hat

    logger.debug(
        "SIR fitted",
        extra={
            "M_hat": M_hat,
            "top_eigenvalue": float(eigenvalues[0]),
            "outcome_kind": data.outcome_kind.value,
            "omega_method": (
                "binary" if data.outcome_kind == OutcomeKind.BINARY else config.omega_method
            ),
        },
    )
    return SirFit(
        Omega_hat=Omega_hat,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        M_hat=M_hat,
        Theta_hat=Theta_hat,
        c0=c0,
        directions=directions,
        floored_eigenvalues=aux["floored"],
        n_slices=used_slices,
    )
