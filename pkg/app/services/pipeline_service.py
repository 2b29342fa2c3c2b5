import os
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import RunConfig
from app.core.exceptions import InvalidArgumentError
from app.core.stage_manager import StageManager
from app.schemas.market import Label
from app.schemas.predictor import TrainConfig
from app.schemas.report import ClassBalance, MethodResult, PredictionRecord, RunReport
from app.services.ingest_service import ingest_panel
from app.services.market_service import (
    MarketPanel,
    PanelSplit,
    SimilarityWeights,
    build_weights,
    class_balance,
    normalize_quant,
    panel_labels,
    split_panel,
)
from app.services.metrics_service import accuracy, confusion_from_pairs, mcc
from app.services.predictor_service import (
    SequenceSample,
    fit_scaler,
    logistic_proba,
    predict_proba,
    save_lstm_checkpoint,
    scale_samples,
    to_label,
    train_lstm,
    train_logistic,
)
from app.services.report_service import ensure_output_dir, report_emit
from app.services.smc_service import (
    DecomposedPanel,
    ModificationMatrices,
    decompose_panel,
    reduce_tensor,
    save_smc_checkpoint,
    train_smc,
    train_smc_per_stock,
)
from app.utils.logger import LOGGER

LOGISTIC_RAW = "Logistic (raw features)"
LOGISTIC_SMC = "Logistic (SMC reduced)"
SMC_LSTM = "SMC+LSTM"
CORE_LSTM = "LSTM (Tucker core)"
TEMPORAL_LSTM = "SMC(temporal)+LSTM"

SMC_CHECKPOINT = "smc_checkpoint.json"


@dataclass(frozen=True)
class MethodSpec:
    name: str
    features: str
    model: str  # "lstm" | "logistic"


def method_specs(cfg: RunConfig) -> List[MethodSpec]:
    specs = [
        MethodSpec(LOGISTIC_RAW, "raw", "logistic"),
        MethodSpec(LOGISTIC_SMC, "reduced", "logistic"),
        MethodSpec(SMC_LSTM, "reduced", "lstm"),
        MethodSpec(CORE_LSTM, "core", "lstm"),
    ]
    if cfg.ablate_cross_stock:
        specs.append(MethodSpec(TEMPORAL_LSTM, "temporal", "lstm"))
    return specs


def checkpoint_name(method: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", method.lower()).strip("_")
    return f"lstm_{slug}.json"


def raw_features(panel: MarketPanel) -> np.ndarray:
    """(S, T, I1 + I2 + I3) concatenated mode vectors"""
    return np.concatenate([panel.quant, panel.event, panel.sentiment], axis=2)


def core_features(dp: DecomposedPanel) -> np.ndarray:
    S, T = dp.shape
    return dp.cores.reshape(S, T, -1).copy()


def reduced_features(
    dp: DecomposedPanel,
    V: ModificationMatrices,
    per_stock: Optional[Dict[str, ModificationMatrices]] = None,
) -> np.ndarray:
    """
    * (S, T, J1 * J2 * J3) flattened reduced tensors, zero on missing cells
    """
    S, T = dp.shape
    out = np.zeros((S, T, int(np.prod(V.reduced_dims))))
    for s, stock_id in enumerate(dp.stocks):
        matrices = per_stock[stock_id] if per_stock else V
        for t in range(T):
            if dp.present[s, t]:
                out[s, t] = reduce_tensor(dp.factors(s, t), matrices).ravel()
    return out


def assemble_samples(
    features: np.ndarray,
    panel: MarketPanel,
    cells: Sequence[Tuple[int, int]],
    labels: np.ndarray,
    window: int,
) -> Tuple[List[SequenceSample], int]:
    """
    Build one sample per (stock, target day) cell.

    Inputs are the ``window`` trading days before the target, oldest first.
    Cells without a full run of present prior days are dropped; the number
    dropped is returned next to the samples.
    """
    samples, dropped = [], 0
    for s, t in cells:
        lo = t - window
        if lo < 0 or not panel.present[s, lo:t].all():
            dropped += 1
            continue
        samples.append(
            SequenceSample(
                stock_id=panel.stocks[s],
                target_date=panel.dates[t],
                input_dates=tuple(panel.dates[lo:t]),
                inputs=features[s, lo:t].copy(),
                target=labels[s, t],
            )
        )
    return samples, dropped


def audit_look_ahead(train: Sequence[SequenceSample], test: Sequence[SequenceSample]):
    """
    * no input on or after its target, no training target on or after the first test target
    """
    for sample in list(train) + list(test):
        if max(sample.input_dates) >= sample.target_date:
            raise InvalidArgumentError(f"look-ahead in {sample.stock_id} sample for {sample.target_date}")
    if train and test:
        last_train = max(s.target_date for s in train)
        first_test = min(s.target_date for s in test)
        if last_train >= first_test:
            raise InvalidArgumentError(f"training target {last_train} is not before test target {first_test}")


def _evaluate(
    spec: MethodSpec,
    train: List[SequenceSample],
    test: List[SequenceSample],
    cfg: TrainConfig,
    out_dir: str,
) -> Tuple[MethodResult, List[PredictionRecord], List[float]]:
    scaler = fit_scaler(train)
    train, test = scale_samples(train, scaler), scale_samples(test, scaler)

    if spec.model == "lstm":
        model = train_lstm(train, cfg)
        probs = predict_proba(model.params, test)
        save_lstm_checkpoint(os.path.join(out_dir, checkpoint_name(spec.name)), model.params)
    else:
        model = train_logistic(train, cfg)
        probs = logistic_proba(model, test)

    records = [
        PredictionRecord(
            method=spec.name,
            stock_id=sample.stock_id,
            target_date=sample.target_date,
            truth=sample.target,
            predicted=to_label(float(p), cfg.cutoff),
            probability_up=float(p),
        )
        for sample, p in zip(test, probs)
    ]
    counts = confusion_from_pairs((r.truth, r.predicted) for r in records)
    result = MethodResult(
        method=spec.name,
        acc=accuracy(counts),
        mcc=mcc(counts),
        n_train=len(train),
        n_test=len(test),
        tp=counts.tp,
        tn=counts.tn,
        fp=counts.fp,
        fn=counts.fn,
    )
    LOGGER.info(f"[Eval] {spec.name}: ACC={result.acc:.4f} MCC={result.mcc:.4f} on {len(test)} samples")
    return result, records, list(model.loss_trace)


class PipelineService:
    """
    * one end-to-end run: ingest, fuse, decompose, align, reduce, train and report
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out_dir = cfg.output_dir
        self.stages = StageManager()
        self.specs = method_specs(cfg)

    def run(self) -> RunReport:
        """
        Stage failures surface as StageError; files written by earlier stages
        stay in the output directory.
        """
        ensure_output_dir(self.out_dir)
        LOGGER.info(f"[Run] seed={self.cfg.seed} output={self.out_dir}")

        with self.stages.stage("ingest"):
            panel = self._ingest()
        with self.stages.stage("split"):
            split, labels, balance, panel = self._split(panel)
        with self.stages.stage("tucker"):
            decomposed = decompose_panel(panel, self.cfg.tucker, self.cfg.workers)
        with self.stages.stage("weights"):
            weights = self._weights(panel, split)
        with self.stages.stage("smc"):
            V, per_stock, temporal = self._align(decomposed, weights, split)
        with self.stages.stage("reduce"):
            features = self._reduce(panel, decomposed, V, per_stock, temporal)
        with self.stages.stage("samples"):
            samples = self._samples(features, panel, split, labels)
        with self.stages.stage("predict"):
            methods, predictions, predictor_traces = self._predict(samples)

        smc_traces = {f"mode{k}": list(trace) for k, trace in enumerate(V.loss_traces, start=1)}
        if temporal is not None:
            smc_traces.update({f"temporal_mode{k}": list(tr) for k, tr in enumerate(temporal.loss_traces, start=1)})

        report = RunReport(
            methods=methods,
            class_balance=ClassBalance(
                up=balance[Label.up.value], down=balance[Label.down.value], still=balance[Label.still.value]
            ),
            sample_counts={"train": len(samples["reduced"][0]), "test": len(samples["reduced"][1])},
            w_density=weights.w_density,
            z_density=weights.z_density,
            smc_loss_traces=smc_traces,
            predictor_loss_traces=predictor_traces,
            predictions=predictions,
        )
        with self.stages.stage("report"):
            report.stage_seconds = dict(self.stages.stage_seconds)
            report_emit(report, self.out_dir)
        return report

    def _ingest(self) -> MarketPanel:
        cfg = self.cfg
        return ingest_panel(cfg.quant_csv, cfg.events_csv, cfg.sentiment_csv, cfg.mode_dims, cfg.allow_missing)

    def _split(self, panel: MarketPanel):
        cfg = self.cfg
        split: PanelSplit = split_panel(panel, cfg.train_months, cfg.test_months, cfg.threshold)
        labels = panel_labels(panel, cfg.threshold)
        balance = class_balance(panel, cfg.threshold)
        LOGGER.info(f"[Split] train={len(split.train)} test={len(split.test)} balance={balance}")
        return split, labels, balance, normalize_quant(panel, split.train_days)

    def _weights(self, panel: MarketPanel, split: PanelSplit) -> SimilarityWeights:
        cfg = self.cfg
        return build_weights(panel.subset_days(split.train_days), cfg.eps1, cfg.eps2, cfg.corr_window, cfg.z_source)

    def _align(self, decomposed: DecomposedPanel, weights: SimilarityWeights, split: PanelSplit):
        smc = self.cfg.smc
        train_dp = decomposed.subset_days(split.train_days)
        V = train_smc(train_dp, weights, smc)
        per_stock = train_smc_per_stock(train_dp, weights, smc) if smc.per_stock else None
        save_smc_checkpoint(os.path.join(self.out_dir, SMC_CHECKPOINT), V, smc, per_stock)
        temporal = None
        if self.cfg.ablate_cross_stock:
            temporal = train_smc(train_dp, weights, smc.model_copy(update={"cross_weight": 0.0}))
        return V, per_stock, temporal

    def _reduce(
        self,
        panel: MarketPanel,
        decomposed: DecomposedPanel,
        V: ModificationMatrices,
        per_stock: Optional[Dict[str, ModificationMatrices]],
        temporal: Optional[ModificationMatrices],
    ) -> Dict[str, np.ndarray]:
        features = {
            "raw": raw_features(panel),
            "core": core_features(decomposed),
            "reduced": reduced_features(decomposed, V, per_stock),
        }
        if temporal is not None:
            features["temporal"] = reduced_features(decomposed, temporal)
        return features

    def _samples(
        self,
        features: Dict[str, np.ndarray],
        panel: MarketPanel,
        split: PanelSplit,
        labels: np.ndarray,
    ) -> Dict[str, Tuple[List[SequenceSample], List[SequenceSample]]]:
        window = self.cfg.predictor.window
        samples = {}
        for name in sorted({s.features for s in self.specs}):
            train, dropped_train = assemble_samples(features[name], panel, split.train, labels, window)
            test, dropped_test = assemble_samples(features[name], panel, split.test, labels, window)
            if dropped_train or dropped_test:
                LOGGER.warning(
                    f"[Samples] {name}: dropped {dropped_train} train and {dropped_test} test cells "
                    f"lacking {window} prior days"
                )
            if not train or not test:
                raise InvalidArgumentError(f"no usable {name} samples: train={len(train)} test={len(test)}")
            audit_look_ahead(train, test)
            samples[name] = (train, test)
        return samples

    def _predict(self, samples):
        methods, predictions, traces = [], [], {}
        for spec in self.specs:
            train, test = samples[spec.features]
            result, records, trace = _evaluate(spec, train, test, self.cfg.predictor, self.out_dir)
            methods.append(result)
            predictions.extend(records)
            traces[spec.name] = trace
        return methods, predictions, traces


def run_pipeline(cfg: RunConfig) -> RunReport:
    """
    * ingest, fuse, decompose, align, reduce, train and report
    """
    return PipelineService(cfg).run()
