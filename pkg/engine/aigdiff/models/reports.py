"""
Evaluation Report Models

JSON shapes emitted by `eval`, the ablation runner and `refine`.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class CaseRecord(BaseModel):
    """Per-condition evaluation outcome"""

    index: int = Field(..., ge=0)
    tt: List[str] = Field(..., description="Condition as hex truth-table columns")
    n_in: int = Field(..., ge=0)
    accuracies: List[float] = Field(
        ..., description="Function accuracy of each of the K samples"
    )
    best_accuracy: float = Field(..., ge=0, le=1)
    correct_gates: int = Field(
        ..., ge=0, description="Correctly wired gates over the K raw samples"
    )
    total_gates: int = Field(..., ge=0)
    max_level: int = Field(..., ge=0, description="Max level of the best parsed circuit")


class Histograms(BaseModel):
    sample: Dict[int, int] = Field(default_factory=dict)
    reference: Dict[int, int] = Field(default_factory=dict)


class EvalReport(BaseModel):
    """Aggregate metrics over a set of conditions"""

    model_config = ConfigDict(extra="forbid")

    validity: float = Field(..., ge=0, le=1, description="Gate-pooled raw-graph validity")
    accuracy: float = Field(..., ge=0, le=1, description="Mean best-of-K function accuracy")
    level_emd: float = Field(
        ..., ge=0, description="1-D EMD between normalized max-level histograms"
    )
    histograms: Histograms
    cases: List[CaseRecord] = Field(default_factory=list)
    metadata: Dict[str, Any] = Field(default_factory=dict)


class AblationReport(BaseModel):
    """Full model against one variant, evaluated on the same conditions"""

    model_config = ConfigDict(extra="forbid")

    toggle: str = Field(..., description="Which setting the variant changes (lambda or beta)")
    conditions: List[List[str]] = Field(..., description="Shared evaluation conditions (hex)")
    full: EvalReport
    variant: EvalReport


class RefineReport(BaseModel):
    """Outcome of one MCTS refinement"""

    tt: List[str]
    reward_before: float = Field(..., ge=0, le=1)
    reward_after: float = Field(..., ge=0, le=1)
    improved: bool
    record: Optional[Dict[str, Any]] = Field(None, description="Refined circuit as a graph record")
