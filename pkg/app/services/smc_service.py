import json
import os
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import InvalidArgumentError, NumericFailureError
from app.schemas.smc import ModeCheckpoint, SmcCheckpoint, SmcConfig
from app.schemas.tucker import TuckerConfig
from app.services.market_service import MarketPanel, SimilarityWeights, build_tensor
from app.services.tensor_ops import MODES, frobenius_norm, multi_mode_product
from app.services.tucker_service import TuckerFactors, decompose_many, resolve_ranks
from app.utils.logger import LOGGER

# * an accepted step may exceed the running best by this factor before alpha is halved
LOSS_GUARD = 1.10

StepCallback = Callable[[int, int, np.ndarray, float], None]


@dataclass(frozen=True, eq=False)
class DecomposedPanel:
    """
    * frozen tucker factors for every present (stock, day) cell
    """

    stocks: Tuple[str, ...]
    dates: Tuple[date, ...]
    present: np.ndarray  # (S, T)
    cores: np.ndarray  # (S, T, D1, D2, D3)
    u: Tuple[np.ndarray, np.ndarray, np.ndarray]  # U_k stacked as (S, T, I_k, D_k)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(u.shape[2] for u in self.u)

    @property
    def ranks(self) -> Tuple[int, int, int]:
        return tuple(self.cores.shape[2:])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.present.shape

    def factors(self, s: int, t: int) -> TuckerFactors:
        if not self.present[s, t]:
            raise InvalidArgumentError(f"no tensor for {self.stocks[s]} on {self.dates[t]}")
        return TuckerFactors(core=self.cores[s, t], factors=tuple(u[s, t] for u in self.u))

    def subset_days(self, days: Sequence[int]) -> "DecomposedPanel":
        days = np.asarray(days, dtype=int)
        return DecomposedPanel(
            stocks=self.stocks,
            dates=tuple(self.dates[d] for d in days),
            present=self.present[:, days].copy(),
            cores=self.cores[:, days].copy(),
            u=tuple(u[:, days].copy() for u in self.u),
        )


@dataclass(frozen=True, eq=False)
class ModificationMatrices:
    """
    * V_1, V_2, V_3 with V_k of shape (I_k, J_k), plus per-mode loss traces
    """

    matrices: Tuple[np.ndarray, np.ndarray, np.ndarray]
    loss_traces: Tuple[Tuple[float, ...], ...] = field(default=((), (), ()))

    def matrix(self, mode: int) -> np.ndarray:
        if mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
        return self.matrices[mode - 1]

    @property
    def reduced_dims(self) -> Tuple[int, int, int]:
        return tuple(v.shape[1] for v in self.matrices)


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray  # moment
    v: np.ndarray  # torque
    it: int = 0

    @classmethod
    def zeros(cls, shape: Tuple[int, ...]) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), it=0)


def decompose_panel(panel: MarketPanel, cfg: TuckerConfig, workers: int = 1) -> DecomposedPanel:
    """
    * fuse and tucker-decompose every present cell of the panel
    """
    S, T = panel.shape
    dims = panel.dims
    ranks = resolve_ranks(dims, cfg)
    cells = [(s, t) for s in range(S) for t in range(T) if panel.present[s, t]]
    tensors = [build_tensor(panel.record(s, t)) for s, t in cells]
    degenerate = sum(1 for x in tensors if frobenius_norm(x) == 0.0)
    if degenerate:
        LOGGER.warning(f"[Tucker] {degenerate} degenerate all-zero tensors")

    results = decompose_many(tensors, cfg, workers=workers)

    cores = np.zeros((S, T, *ranks))
    u = tuple(np.zeros((S, T, dims[k], ranks[k])) for k in range(3))
    for (s, t), f in zip(cells, results):
        cores[s, t] = f.core
        for k in range(3):
            u[k][s, t] = f.factors[k]
    LOGGER.info(f"[Tucker] decomposed {len(cells)} tensors dims={dims} ranks={ranks}")
    return DecomposedPanel(
        stocks=panel.stocks, dates=panel.dates, present=panel.present.copy(), cores=cores, u=u
    )


def _check_shapes(panel: DecomposedPanel, weights: SimilarityWeights, mode: int):
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    S, T = panel.shape
    if weights.w.shape != (S, T, T) or weights.z.shape != (T, S, S):
        raise InvalidArgumentError(
            f"weights shaped W{weights.w.shape} Z{weights.z.shape} do not match a {S}x{T} panel"
        )


def _check_v(v: np.ndarray, panel: DecomposedPanel, mode: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    rows = panel.dims[mode - 1]
    if v.ndim != 2 or v.shape[0] != rows or v.shape[1] > rows:
        raise InvalidArgumentError(f"V{mode} must have shape ({rows}, J<= {rows}), got {v.shape}")
    return v


def pair_scatter(
    panel: DecomposedPanel,
    weights: SimilarityWeights,
    mode: int,
    stock: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Weighted scatter of subspace differences for one mode.

    Returns (M_w, M_z) with M = sum over weighted pairs of dU dU^T, so that
    the pair loss for any V equals trace(V^T M V). Pairs are reduced in
    (stock, i, j) then (day, s, m) row-major order. With ``stock`` set only
    pairs touching that stock are kept.
    """
    _check_shapes(panel, weights, mode)
    u = panel.u[mode - 1]
    size = u.shape[2]
    m_w = np.zeros((size, size))
    m_z = np.zeros((size, size))

    stocks = range(panel.shape[0]) if stock is None else [stock]
    for s in stocks:
        i_idx, j_idx = np.nonzero(weights.w[s])
        if i_idx.size:
            diff = u[s, i_idx] - u[s, j_idx]
            m_w += np.einsum("p,pad,pbd->ab", weights.w[s, i_idx, j_idx].astype(np.float64), diff, diff)

    for t in range(panel.shape[1]):
        s_idx, m_idx = np.nonzero(weights.z[t])
        if stock is not None:
            keep = (s_idx == stock) | (m_idx == stock)
            s_idx, m_idx = s_idx[keep], m_idx[keep]
        if s_idx.size:
            diff = u[m_idx, t] - u[s_idx, t]
            m_z += np.einsum("p,pad,pbd->ab", weights.z[t, s_idx, m_idx].astype(np.float64), diff, diff)

    return m_w, m_z


def _quadratic(v: np.ndarray, scatter: np.ndarray) -> float:
    return float(np.sum(v * (scatter @ v)))


def smc_loss(
    V: ModificationMatrices,
    panel: DecomposedPanel,
    weights: SimilarityWeights,
    mode: int,
    cross_weight: float = 1.0,
) -> float:
    """
    * sum of weighted ||V^T dU||_F^2 over W pairs and Z pairs of one mode
    """
    v = _check_v(V.matrix(mode), panel, mode)
    m_w, m_z = pair_scatter(panel, weights, mode)
    return max(_quadratic(v, m_w + cross_weight * m_z), 0.0)


def smc_gradient(
    V: ModificationMatrices,
    panel: DecomposedPanel,
    weights: SimilarityWeights,
    mode: int,
    cross_weight: float = 1.0,
) -> np.ndarray:
    """
    * analytic gradient 2 * sum w dU dU^T V
    """
    v = _check_v(V.matrix(mode), panel, mode)
    m_w, m_z = pair_scatter(panel, weights, mode)
    return 2.0 * (m_w + cross_weight * m_z) @ v


def orthonormalize(v: np.ndarray) -> np.ndarray:
    """
    * qr retraction onto orthonormal columns, r diagonal made nonnegative
    """
    q, r = np.linalg.qr(v)
    return np.ascontiguousarray(q * np.where(np.diag(r) < 0, -1.0, 1.0))


def adam_step(
    v_k: np.ndarray, grad: np.ndarray, state: AdamState, cfg: SmcConfig
) -> Tuple[np.ndarray, AdamState]:
    if v_k.shape != grad.shape or state.m.shape != v_k.shape or state.v.shape != v_k.shape:
        raise InvalidArgumentError(
            f"adam shapes disagree: V{v_k.shape} grad{grad.shape} m{state.m.shape} v{state.v.shape}"
        )
    if not (np.all(np.isfinite(v_k)) and np.all(np.isfinite(grad))):
        raise NumericFailureError("non-finite parameter or gradient in adam step", iteration=state.it)

    it = state.it + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * (grad * grad)
    m_hat = m / (1.0 - cfg.beta1**it)
    v_hat = v / (1.0 - cfg.beta2**it)
    updated = v_k - cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    if cfg.constrain_orthonormal:
        updated = orthonormalize(updated)

    if not np.all(np.isfinite(updated)):
        raise NumericFailureError("adam step produced non-finite values", iteration=it)
    return updated, AdamState(m=m, v=v, it=it)


def _optimize_mode(
    mode: int,
    scatter: np.ndarray,
    v0: np.ndarray,
    cfg: SmcConfig,
    on_step: Optional[StepCallback],
) -> Tuple[np.ndarray, List[float]]:
    v = orthonormalize(v0) if cfg.constrain_orthonormal else v0
    state = AdamState.zeros(v.shape)
    step_cfg = cfg
    halved = False

    loss = _quadratic(v, scatter)
    trace = [loss]
    best, best_v = loss, v
    for it in range(1, cfg.iter_max + 1):
        grad = 2.0 * scatter @ v
        v, state = adam_step(v, grad, state, step_cfg)
        loss = _quadratic(v, scatter)
        if not np.isfinite(loss):
            raise NumericFailureError(f"smc loss diverged in mode {mode}", iteration=it, last_value=trace[-1])
        trace.append(loss)

        if loss > LOSS_GUARD * best and not halved:
            step_cfg = cfg.model_copy(update={"alpha": cfg.alpha / 2})
            halved = True
            LOGGER.warning(f"[SMC] mode={mode} it={it} loss rose above best, alpha halved to {step_cfg.alpha:g}")
        if loss < best:
            best, best_v = loss, v
        if on_step is not None:
            on_step(mode, it, v, loss)
        if it % 100 == 0:
            LOGGER.debug(f"[SMC] mode={mode} it={it} loss={loss:.6g}")

        if it >= cfg.conv_window:
            ref = trace[-1 - cfg.conv_window]
            if abs(ref - loss) <= cfg.conv_tol * max(abs(ref), np.finfo(float).tiny):
                break

    if trace[-1] > trace[0]:
        v = best_v
        trace.append(best)
    return v, trace


def _initial_matrices(rng: np.random.Generator, dims: Sequence[int], cfg: SmcConfig) -> List[np.ndarray]:
    # * entries uniform in [0, 1), one draw per mode in mode order
    return [rng.uniform(0.0, 1.0, size=(dims[k], cfg.reduced_dims[k])) for k in range(3)]


def _check_config(panel: DecomposedPanel, cfg: SmcConfig):
    for k, (j, i) in enumerate(zip(cfg.reduced_dims, panel.dims), start=1):
        if j > i:
            raise InvalidArgumentError(f"reduced dim J{k}={j} exceeds I{k}={i}")
    if not panel.present.any():
        raise InvalidArgumentError("decomposed panel is empty")


def train_smc(
    panel: DecomposedPanel,
    weights: SimilarityWeights,
    cfg: SmcConfig,
    on_step: Optional[StepCallback] = None,
) -> ModificationMatrices:
    """
    Learn one shared V_k per mode with full-batch adam.

    Modes are optimized independently, each with its own adam state. With
    no weighted pair at all the random (orthonormalized) start is returned.
    """
    _check_config(panel, cfg)
    rng = np.random.default_rng(cfg.seed)
    starts = _initial_matrices(rng, panel.dims, cfg)

    if not weights.nonzero():
        LOGGER.warning("[SMC] every similarity weight is zero, returning the initial matrices")
        init = tuple(orthonormalize(v) if cfg.constrain_orthonormal else v for v in starts)
        return ModificationMatrices(matrices=init, loss_traces=((0.0,), (0.0,), (0.0,)))

    matrices, traces = [], []
    for mode in MODES:
        m_w, m_z = pair_scatter(panel, weights, mode)
        v, trace = _optimize_mode(mode, m_w + cfg.cross_weight * m_z, starts[mode - 1], cfg, on_step)
        LOGGER.info(
            f"[SMC] mode={mode} iterations={len(trace) - 1} loss {trace[0]:.6g} -> {trace[-1]:.6g}"
        )
        matrices.append(v)
        traces.append(tuple(trace))
    return ModificationMatrices(matrices=tuple(matrices), loss_traces=tuple(traces))


def train_smc_per_stock(
    panel: DecomposedPanel,
    weights: SimilarityWeights,
    cfg: SmcConfig,
) -> Dict[str, ModificationMatrices]:
    """
    * one V per (stock, mode), trained on the pairs that touch the stock
    """
    _check_config(panel, cfg)
    rng = np.random.default_rng(cfg.seed)
    out: Dict[str, ModificationMatrices] = {}
    for s, stock_id in enumerate(panel.stocks):
        starts = _initial_matrices(rng, panel.dims, cfg)
        matrices, traces = [], []
        for mode in MODES:
            m_w, m_z = pair_scatter(panel, weights, mode, stock=s)
            scatter = m_w + cfg.cross_weight * m_z
            if not scatter.any():
                v = orthonormalize(starts[mode - 1]) if cfg.constrain_orthonormal else starts[mode - 1]
                trace = [0.0]
            else:
                v, trace = _optimize_mode(mode, scatter, starts[mode - 1], cfg, None)
            matrices.append(v)
            traces.append(tuple(trace))
        out[stock_id] = ModificationMatrices(matrices=tuple(matrices), loss_traces=tuple(traces))
        LOGGER.debug(f"[SMC] per-stock matrices trained for {stock_id}")
    return out


def reduce_tensor(f: TuckerFactors, V: ModificationMatrices) -> np.ndarray:
    """
    * core x_k (V_k^T U_k), a (J1, J2, J3) tensor
    """
    maps = []
    for k, (u, v) in enumerate(zip(f.factors, V.matrices), start=1):
        if v.ndim != 2 or u.ndim != 2 or v.shape[0] != u.shape[0]:
            raise InvalidArgumentError(f"V{k} shape {v.shape} does not match U{k} shape {u.shape}")
        if u.shape[1] != f.core.shape[k - 1]:
            raise InvalidArgumentError(f"U{k} shape {u.shape} does not match core {f.core.shape}")
        maps.append(v.T @ u)
    return multi_mode_product(f.core, maps)


def _mode_checkpoints(V: ModificationMatrices) -> List[ModeCheckpoint]:
    return [
        ModeCheckpoint(
            mode=mode,
            rows=v.shape[0],
            cols=v.shape[1],
            row_major_values=v.ravel().tolist(),
            loss_trace=list(trace),
        )
        for mode, v, trace in zip(MODES, V.matrices, V.loss_traces)
    ]


def _from_checkpoints(modes: List[ModeCheckpoint]) -> ModificationMatrices:
    modes = sorted(modes, key=lambda m: m.mode)
    if [m.mode for m in modes] != list(MODES):
        raise InvalidArgumentError("checkpoint must hold exactly modes 1, 2, 3")
    matrices, traces = [], []
    for m in modes:
        if len(m.row_major_values) != m.rows * m.cols:
            raise InvalidArgumentError(
                f"mode {m.mode} holds {len(m.row_major_values)} values, expected {m.rows * m.cols}"
            )
        matrices.append(np.asarray(m.row_major_values, dtype=np.float64).reshape(m.rows, m.cols))
        traces.append(tuple(m.loss_trace))
    return ModificationMatrices(matrices=tuple(matrices), loss_traces=tuple(traces))


def save_smc_checkpoint(
    path: str,
    V: ModificationMatrices,
    cfg: SmcConfig,
    per_stock: Optional[Dict[str, ModificationMatrices]] = None,
) -> str:
    checkpoint = SmcCheckpoint(
        config=cfg,
        modes=_mode_checkpoints(V),
        per_stock={k: _mode_checkpoints(v) for k, v in (per_stock or {}).items()},
    )
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(checkpoint.model_dump_json(indent=2))
    LOGGER.info(f"[SMC] checkpoint written to {path}")
    return path


def load_smc_checkpoint(
    path: str,
) -> Tuple[ModificationMatrices, SmcConfig, Optional[Dict[str, ModificationMatrices]]]:
    """
    * shared matrices, their config, and per-stock matrices (None when the run trained none)
    """
    with open(path, encoding="utf-8") as f:
        checkpoint = SmcCheckpoint.model_validate(json.load(f))
    per_stock = {k: _from_checkpoints(v) for k, v in checkpoint.per_stock.items()} or None
    return _from_checkpoints(checkpoint.modes), checkpoint.config, per_stock
