from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class DiagnosticsRecord(BaseModel):
    """One line of the diagnostics file, written once per tick."""

    model_config = ConfigDict(extra="forbid")

    t: int = Field(..., description="Tick index of the observation")
    y: float = Field(..., description="Realized target")
    fused: float = Field(..., description="Fused MoE-F prediction")
    estimates: List[float] = Field(..., description="Per-filter estimates")
    pi_bar: List[float] = Field(..., description="Softmin aggregation weights")
    scores: List[float] = Field(..., description="Per-filter losses used by the softmin")
    q: List[float] = Field(..., description="Projected Q installed for the next tick, row-major")
    floor_events: int = Field(0, ge=0, description="eps_B floor activations during this tick")
    mixture: Optional[List[float]] = Field(None, description="Expert-level weights pi_bar^T Pi")
    q_valid: bool = Field(True, description="Whether q is a valid intensity matrix")


class ClassMetrics(BaseModel):
    label: str
    precision: float
    recall: float
    f1: float
    support: int


class ClassificationReport(BaseModel):
    f1: float = Field(..., description="Support-weighted F1")
    accuracy: float
    precision: float = Field(..., description="Support-weighted precision")
    recall: float = Field(..., description="Support-weighted recall")
    per_class: List[ClassMetrics]
    class_names: List[str]
    confusion: List[List[int]] = Field(..., description="Rows are true classes, columns predictions")

    def rounded(self, digits: int = 4) -> "ClassificationReport":
        return self.model_copy(update={
            "f1": round(self.f1, digits),
            "accuracy": round(self.accuracy, digits),
            "precision": round(self.precision, digits),
            "recall": round(self.recall, digits),
            "per_class": [
                m.model_copy(update={
                    "precision": round(m.precision, digits),
                    "recall": round(m.recall, digits),
                    "f1": round(m.f1, digits),
                })
                for m in self.per_class
            ],
        })


class MseReport(BaseModel):
    mse: float = Field(..., description="Channel-averaged squared-norm error")
    horizon: int
    channels: List[str]


class RegimeTrackingReport(BaseModel):
    burn_in: int
    scored_ticks: int
    fused_loss: float = Field(..., description="Cumulative squared error of the fused stream")
    expert_losses: List[float] = Field(..., description="Cumulative squared error of every expert")
    tracking_fraction: float = Field(
        ..., description="Share of scored ticks whose expert-level weight on the active expert exceeds 0.5")
    filter_tracking_fraction: float = Field(
        ..., description="Same share measured on pi_bar, the weight of the active expert's filter")

    @property
    def fused_dominates(self) -> bool:
        return all(self.fused_loss < loss for loss in self.expert_losses)


class RunSummary(BaseModel):
    loss: str
    ticks: int
    fused_loss: float = Field(..., description="Cumulative loss of the fused stream")
    expert_losses: List[float] = Field(..., description="Cumulative loss of every raw expert")
    floor_events: int = 0
    weighted_f1: Optional[float] = Field(
        None, description="Weighted F1 of thresholded fused probabilities (BCE streams)")

    @property
    def fused_beats_all(self) -> bool:
        return all(self.fused_loss <= loss for loss in self.expert_losses)
