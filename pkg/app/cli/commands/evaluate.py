"""``evaluate``: score predictions against truth.

movement: both files carry either a ``label`` column (Fall/Neutral/Rise) or a
``close`` column (labelled by percentage change, first row dropped). The
prediction file may instead carry ``p_fall,p_neutral,p_rise`` fused
probabilities, decided one-vs-rest.

mse: every non-``t`` column of the prediction file is a channel that the
truth file must also carry. A diagnostics ``.jsonl`` prediction file
contributes its fused value as channel ``y``.
"""
import logging
from typing import List, Tuple

import numpy as np

from app.cli import EXIT_OK
from app.exceptions import FileFormatError, SequenceError
from app.schemas.reports import MseReport
from app.services.metrics import (
    MOVEMENT_CLASSES, MovementLabel, horizon_mse, movement_labels_from_prices, one_vs_rest_decision,
    weighted_classification_report,
)
from app.services.storage import Table, read_diagnostics, read_table, write_json

logger = logging.getLogger(__name__)

PROBABILITY_COLUMNS = ["p_fall", "p_neutral", "p_rise"]


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="Score predictions against the truth")
    parser.add_argument("--pred", required=True, help="Prediction CSV or diagnostics JSONL")
    parser.add_argument("--truth", required=True, help="Truth CSV")
    parser.add_argument("--task", required=True, choices=["movement", "mse"])
    parser.add_argument("--out", required=True, help="Report JSON to write")
    parser.set_defaults(handler=handle)


def _load_predictions(path: str) -> Table:
    if not path.endswith(".jsonl"):
        return read_table(path)
    records = read_diagnostics(path)
    return Table(
        path=path,
        columns=["y"],
        t=[r.t for r in records],
        cells={"y": [repr(r.fused) for r in records]},
        lines=list(range(1, len(records) + 1)),
    )


def _movement_labels(table: Table, allow_probabilities: bool) -> Tuple[List[int], List[MovementLabel]]:
    if "label" in table.columns:
        return table.t, [MovementLabel.parse(v) for v in table.cells["label"]]
    if "close" in table.columns:
        return table.t[1:], movement_labels_from_prices(table.floats("close"))
    if allow_probabilities and all(c in table.columns for c in PROBABILITY_COLUMNS):
        probs = np.column_stack([table.floats(c) for c in PROBABILITY_COLUMNS])
        return table.t, [MOVEMENT_CLASSES[k] for k in one_vs_rest_decision(probs)]
    raise FileFormatError("expected a 'label' or 'close' column", line=1, path=table.path)


def _check_aligned(truth_t: List[int], pred_t: List[int]) -> None:
    if truth_t != pred_t:
        raise SequenceError(
            f"truth and pred are misaligned: {len(truth_t)} vs {len(pred_t)} ticks"
            + ("" if len(truth_t) != len(pred_t) else ", t values differ"))


def handle(args) -> int:
    pred = _load_predictions(args.pred)
    truth = read_table(args.truth)

    if args.task == "movement":
        truth_t, truth_labels = _movement_labels(truth, allow_probabilities=False)
        pred_t, pred_labels = _movement_labels(pred, allow_probabilities=True)
        _check_aligned(truth_t, pred_t)
        report = weighted_classification_report(truth_labels, pred_labels).rounded(4)
        print(f"F1 {report.f1:.4f} / Acc {report.accuracy:.4f} / "
              f"Precision {report.precision:.4f} / Recall {report.recall:.4f}")
    else:
        missing = [c for c in pred.columns if c not in truth.columns]
        if missing:
            raise FileFormatError(f"truth lacks channels {', '.join(missing)}", line=1, path=args.truth)
        _check_aligned(truth.t, pred.t)
        truth_matrix = np.column_stack([truth.floats(c) for c in pred.columns])
        pred_matrix = np.column_stack([pred.floats(c) for c in pred.columns])
        report = MseReport(mse=round(horizon_mse(truth_matrix, pred_matrix), 4),
                           horizon=len(pred.t), channels=pred.columns)
        print(f"MSE {report.mse:.4f}")

    write_json(args.out, report)
    return EXIT_OK
