import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from app.core.exceptions import InvalidArgumentError, NumericFailureError
from app.schemas.tucker import TuckerConfig
from app.services.tensor_ops import (
    MODES,
    as_matrix,
    as_tensor3,
    frobenius_norm,
    multi_mode_product,
    unfold,
)
from app.utils.logger import LOGGER

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
# * relative fit below this is treated as exact, hooi has nothing left to do
EXACT_FIT = 1e-12


@dataclass(frozen=True, eq=False)
class TuckerFactors:
    """
    * core tensor (D1, D2, D3) plus factors U_k of shape (I_k, D_k)
    """

    core: np.ndarray
    factors: Tuple[np.ndarray, np.ndarray, np.ndarray]
    fit_errors: Tuple[float, ...] = field(default=())

    @property
    def ranks(self) -> Tuple[int, int, int]:
        return tuple(self.core.shape)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(u.shape[0] for u in self.factors)


def orthonormality_gap(u: np.ndarray) -> float:
    """max-norm of U^T U - I"""
    u = np.asarray(u, dtype=np.float64)
    return float(np.max(np.abs(u.T @ u - np.eye(u.shape[1]))))


def resolve_ranks(dims: Sequence[int], cfg: TuckerConfig) -> Tuple[int, int, int]:
    ranks = cfg.ranks or tuple(math.ceil(d / 2) for d in dims)
    for k, (r, d) in enumerate(zip(ranks, dims), start=1):
        if not 1 <= r <= d:
            raise InvalidArgumentError(f"tucker rank D{k}={r} must lie in [1, I{k}={d}]")
    return tuple(int(r) for r in ranks)


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # * largest-magnitude entry of every column is nonnegative, first index wins ties
    rows = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[rows, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * signs


def jacobi_eigh(
    a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps visit pairs (p, q), p < q, in row-major order. Stops once the
    off-diagonal Frobenius norm is at most ``tol`` times the matrix norm.
    Returns unsorted eigenvalues and the matrix of eigenvectors (columns).
    """
    a = np.array(as_matrix(a), dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.shape[1] != n:
        raise InvalidArgumentError(f"jacobi_eigh needs a square matrix, got {a.shape}")
    v = np.eye(n)
    total = frobenius_norm(a)
    if total == 0.0:
        return np.zeros(n), v

    for sweep in range(max_sweeps):
        off = frobenius_norm(a - np.diag(np.diag(a)))
        if off <= tol * total:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.hypot(theta, 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

        if not np.all(np.isfinite(a)):
            raise NumericFailureError("jacobi rotation produced non-finite values", iteration=sweep + 1)

    raise NumericFailureError(
        f"jacobi eigendecomposition did not converge in {max_sweeps} sweeps",
        iteration=max_sweeps,
    )


def svd_truncated(m, r: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    * top-r left singular vectors and singular values via the smaller gram matrix
    """
    m = as_matrix(m)
    rows, cols = m.shape
    if not 1 <= r <= min(rows, cols):
        raise InvalidArgumentError(f"rank r={r} must lie in [1, {min(rows, cols)}] for a {m.shape} matrix")

    if frobenius_norm(m) == 0.0:
        return np.eye(rows)[:, :r].copy(), np.zeros(r)

    if rows <= cols:
        evals, evecs = jacobi_eigh(m @ m.T)
        order = np.argsort(-evals, kind="stable")[:r]
        u = evecs[:, order]
    else:
        evals, evecs = jacobi_eigh(m.T @ m)
        order = np.argsort(-evals, kind="stable")[:r]
        # * u = m v / sigma, orthonormalized so that null directions stay well defined
        q, rr = np.linalg.qr(m @ evecs[:, order])
        u = q * np.where(np.diag(rr) < 0, -1.0, 1.0)

    singular = np.sqrt(np.clip(evals[order], 0.0, None))
    return np.ascontiguousarray(_fix_signs(u)), singular


def _core(t: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    return multi_mode_product(t, [u.T for u in factors])


def hosvd(t, cfg: TuckerConfig) -> TuckerFactors:
    t = as_tensor3(t)
    ranks = resolve_ranks(t.shape, cfg)
    factors = tuple(svd_truncated(unfold(t, k), r)[0] for k, r in zip(MODES, ranks))
    core = _core(t, factors)
    result = TuckerFactors(core=core, factors=factors)
    return TuckerFactors(core=core, factors=factors, fit_errors=(reconstruction_error(t, result),))


def hooi(t, cfg: TuckerConfig) -> TuckerFactors:
    """
    Alternating refinement of the hosvd factors.

    Each sweep re-fits U_k to the tensor projected on the other two factors.
    ``fit_errors`` records the relative error of the hosvd start and of
    every sweep.
    """
    t = as_tensor3(t)
    start = hosvd(t, cfg)
    errors: List[float] = list(start.fit_errors)
    if cfg.hooi_max_iters == 0 or errors[-1] <= EXACT_FIT:
        return start

    ranks = start.ranks
    factors = list(start.factors)
    core = start.core
    for it in range(1, cfg.hooi_max_iters + 1):
        for k in MODES:
            projected = multi_mode_product(t, [u.T for u in factors], skip=k)
            factors[k - 1] = svd_truncated(unfold(projected, k), ranks[k - 1])[0]
        core = _core(t, factors)
        err = reconstruction_error(t, TuckerFactors(core=core, factors=tuple(factors)))
        if not math.isfinite(err):
            raise NumericFailureError("hooi produced a non-finite fit", iteration=it, last_value=errors[-1])
        prev = errors[-1]
        errors.append(err)
        if err <= EXACT_FIT or abs(prev - err) <= cfg.hooi_tol * prev:
            break

    return TuckerFactors(core=core, factors=tuple(factors), fit_errors=tuple(errors))


def decompose(t, cfg: TuckerConfig) -> TuckerFactors:
    return hooi(t, cfg)


def decompose_many(tensors: Iterable[np.ndarray], cfg: TuckerConfig, workers: int = 1) -> List[TuckerFactors]:
    """
    * decompose a batch of tensors, output order equals input order
    """
    tensors = list(tensors)
    if workers <= 1 or len(tensors) < 2:
        return [decompose(t, cfg) for t in tensors]
    LOGGER.debug(f"[Tucker] decomposing {len(tensors)} tensors on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda x: decompose(x, cfg), tensors))


def reconstruct(f: TuckerFactors) -> np.ndarray:
    core = as_tensor3(f.core, "core")
    if len(f.factors) != 3:
        raise InvalidArgumentError(f"expected three factor matrices, got {len(f.factors)}")
    for k, u in enumerate(f.factors):
        if u.ndim != 2 or u.shape[1] != core.shape[k]:
            raise InvalidArgumentError(
                f"factor U{k + 1} has shape {u.shape}, core mode size is {core.shape[k]}"
            )
    return multi_mode_product(core, f.factors)


def reconstruction_error(t, f: TuckerFactors) -> float:
    """
    * relative frobenius error, absolute when the tensor itself is zero
    """
    t = as_tensor3(t)
    approx = reconstruct(f)
    if approx.shape != t.shape:
        raise InvalidArgumentError(f"reconstruction shape {approx.shape} does not match tensor {t.shape}")
    diff = frobenius_norm(t - approx)
    norm = frobenius_norm(t)
    return diff / norm if norm > 0 else diff
