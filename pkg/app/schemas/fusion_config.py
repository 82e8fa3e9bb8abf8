from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator


class LossKind(str, Enum):
    BCE = "bce"
    MSE = "mse"


class QDiag(str, Enum):
    ROW = "row"
    COLUMN = "column"


class FusionConfig(BaseModel):
    """Hyperparameters and numerical clamps of one MoE-F engine."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    loss: LossKind = Field(
        LossKind.MSE, description="Running loss watched by every filter (bce or mse)")
    lambda_: float = Field(
        1.0, gt=0, alias="lambda", description="Gibbs temperature of the softmin aggregation")
    alpha: float = Field(
        0.5, description="Weight of the identity in the perturbed matrix P^alpha, in (0, 1)")
    delta: float = Field(
        1.0, gt=0, le=1, description="Noise-decay hyperparameter; 1 gives the unit-variance case")
    eps_f: float = Field(
        1e-6, gt=0, lt=0.5, description="Probability predictions are clamped into [eps_f, 1 - eps_f]")
    eps_B: float = Field(
        1e-8, gt=0, description="Floor on |B| when it is used as a denominator")
    eps_pi: float = Field(
        1e-12, gt=0, lt=1, description="Floor on posterior entries before renormalization")
    dt: float = Field(
        1.0, gt=0, description="Step size multiplying the drift term")
    q_diag: QDiag = Field(
        QDiag.ROW, description="Diagonal of the projected Q: row sums (valid) or column sums (unchecked)")

    @field_validator("loss", "q_diag", mode="before")
    @classmethod
    def _lowercase(cls, value):
        if isinstance(value, str):
            return value.strip().lower()
        return value

    @field_validator("alpha")
    @classmethod
    def _alpha_in_open_unit_interval(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"alpha must lie in the open interval (0, 1), got {value}")
        return value

    @property
    def is_bce(self) -> bool:
        return self.loss == LossKind.BCE

    def with_overrides(self, **overrides) -> "FusionConfig":
        """A validated copy with the non-None overrides applied (``lambda_`` or ``lambda``)."""
        if "lambda_" in overrides:
            overrides["lambda"] = overrides.pop("lambda_")
        data = self.model_dump(by_alias=True)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return FusionConfig.model_validate(data)
