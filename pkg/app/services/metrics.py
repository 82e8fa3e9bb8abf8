"""Reporting conventions: movement labels, weighted classification metrics and MSE."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, f1_score, precision_recall_fscore_support

from app.exceptions import DomainError, SequenceError
from app.models.state import TickOutput
from app.models.types import ObservationRecord
from app.schemas.fusion_config import FusionConfig, LossKind
from app.schemas.reports import ClassMetrics, ClassificationReport, RegimeTrackingReport, RunSummary
from app.services.filter import loss_value

logger = logging.getLogger(__name__)

# Percent change at or inside which a move counts as Neutral
NEUTRAL_BAND = 0.5


class MovementLabel(str, Enum):
    FALL = "Fall"
    NEUTRAL = "Neutral"
    RISE = "Rise"

    @classmethod
    def parse(cls, text: str) -> "MovementLabel":
        for label in cls:
            if label.value.lower() == str(text).strip().lower():
                return label
        raise DomainError(f"unknown movement label '{text}'")


MOVEMENT_CLASSES = [MovementLabel.FALL, MovementLabel.NEUTRAL, MovementLabel.RISE]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: List[str]

    def __post_init__(self):
        k = len(self.class_names)
        if self.counts.shape != (k, k) or np.any(self.counts < 0):
            raise DomainError(f"confusion counts must be a nonnegative {k}x{k} matrix")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def label_from_pct(pct: float) -> MovementLabel:
    if pct > NEUTRAL_BAND:
        return MovementLabel.RISE
    if pct < -NEUTRAL_BAND:
        return MovementLabel.FALL
    return MovementLabel.NEUTRAL


def pct_change(close_t: float, close_prev: float) -> float:
    if close_prev == 0:
        raise DomainError("percentage change needs a nonzero previous close")
    return (close_t - close_prev) / close_prev * 100.0


def movement_labels_from_prices(closes: Sequence[float]) -> List[MovementLabel]:
    """One label per consecutive pair; the first close has no label."""
    return [label_from_pct(pct_change(closes[k], closes[k - 1])) for k in range(1, len(closes))]


def _names(labels: Sequence) -> List[str]:
    return [label.value if isinstance(label, Enum) else str(label) for label in labels]


def build_confusion(truth: Sequence, pred: Sequence, class_names: Sequence[str]) -> ConfusionMatrix:
    counts = confusion_matrix(_names(truth), _names(pred), labels=list(class_names))
    return ConfusionMatrix(counts=counts, class_names=list(class_names))


def weighted_classification_report(truth: Sequence, pred: Sequence,
                                   class_names: Optional[Sequence[str]] = None) -> ClassificationReport:
    """Per-class and support-weighted precision, recall and F1; undefined ratios count as 0."""
    if len(truth) != len(pred):
        raise SequenceError(f"truth has {len(truth)} labels but pred has {len(pred)}")
    if len(truth) == 0:
        raise SequenceError("cannot score an empty label sequence")
    names = list(class_names) if class_names is not None else [c.value for c in MOVEMENT_CLASSES]
    y_true, y_pred = _names(truth), _names(pred)

    precision, recall, f1, support = precision_recall_fscore_support(
        y_true, y_pred, labels=names, zero_division=0)
    w_precision, w_recall, w_f1, _ = precision_recall_fscore_support(
        y_true, y_pred, labels=names, average="weighted", zero_division=0)
    confusion = build_confusion(y_true, y_pred, names)

    return ClassificationReport(
        f1=float(w_f1),
        accuracy=float(np.trace(confusion.counts) / len(y_true)),
        precision=float(w_precision),
        recall=float(w_recall),
        per_class=[
            ClassMetrics(label=name, precision=float(p), recall=float(r), f1=float(f), support=int(s))
            for name, p, r, f, s in zip(names, precision, recall, f1, support)
        ],
        class_names=names,
        confusion=confusion.counts.tolist(),
    )


def horizon_mse(truth, pred) -> float:
    """Mean over channels of the squared error norm along the horizon."""
    y = np.asarray(truth, dtype=np.float64)
    x = np.asarray(pred, dtype=np.float64)
    if y.shape != x.shape:
        raise SequenceError(f"truth has shape {y.shape} but pred has shape {x.shape}")
    if y.ndim == 1:
        y, x = y[:, None], x[:, None]
    return float(np.mean(np.sum((y - x) ** 2, axis=0)))


def one_vs_rest_decision(prob_streams) -> np.ndarray:
    """Class index with the largest fused probability per tick; ties go to the lower index."""
    probs = np.asarray(prob_streams, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] == 0:
        raise DomainError(f"expected a T x K probability array, got shape {probs.shape}")
    return np.argmax(probs, axis=1)


def regime_tracking_report(observations: Sequence[ObservationRecord], hidden: Sequence[int],
                           outputs: Sequence[TickOutput], burn_in: int = 50) -> RegimeTrackingReport:
    if not len(observations) == len(hidden) == len(outputs):
        raise SequenceError(
            f"{len(observations)} observations, {len(hidden)} hidden states, {len(outputs)} outputs")
    y = np.array([o.y for o in observations])
    F = np.vstack([o.predictions for o in observations])
    fused = np.array([o.fused for o in outputs])
    active = np.asarray(hidden, dtype=np.int64)

    scored = range(min(burn_in, len(outputs)), len(outputs))
    mixture_hits = [outputs[k].mixture[active[k]] > 0.5 for k in scored]
    filter_hits = [outputs[k].pi_bar.weights[active[k]] > 0.5 for k in scored]
    n_scored = len(mixture_hits)
    return RegimeTrackingReport(
        burn_in=burn_in,
        scored_ticks=n_scored,
        fused_loss=float(np.sum((fused - y) ** 2)),
        expert_losses=np.sum((F - y[:, None]) ** 2, axis=0).tolist(),
        tracking_fraction=float(np.mean(mixture_hits)) if n_scored else 0.0,
        filter_tracking_fraction=float(np.mean(filter_hits)) if n_scored else 0.0,
    )


def run_summary(observations: Sequence[ObservationRecord], outputs: Sequence[TickOutput],
                cfg: FusionConfig, floor_events: int = 0) -> RunSummary:
    """Cumulative configured loss of the fused stream and of every raw expert."""
    if len(observations) != len(outputs):
        raise SequenceError(f"{len(observations)} observations but {len(outputs)} outputs")
    n = observations[0].n if observations else 0
    expert_losses = [0.0] * n
    fused_loss = 0.0
    for obs, out in zip(observations, outputs):
        fused_loss += loss_value(cfg.loss, out.fused, obs.y, cfg.eps_f)
        for i, f in enumerate(obs.predictions):
            expert_losses[i] += loss_value(cfg.loss, f, obs.y, cfg.eps_f)

    weighted_f1 = None
    if cfg.loss == LossKind.BCE and outputs:
        truth = [int(o.y >= 0.5) for o in observations]
        pred = [int(o.fused >= 0.5) for o in outputs]
        weighted_f1 = float(f1_score(truth, pred, labels=[0, 1], average="weighted", zero_division=0))

    return RunSummary(
        loss=cfg.loss.value,
        ticks=len(outputs),
        fused_loss=fused_loss,
        expert_losses=expert_losses,
        floor_events=floor_events,
        weighted_f1=weighted_f1,
    )
