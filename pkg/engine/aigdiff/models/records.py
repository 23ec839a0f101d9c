"""
Dataset Record Models

Defines the JSONL line schema for graph datasets and sample outputs.
"""

from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from aigdiff.models.dag import K_E, K_X


class GraphRecord(BaseModel):
    """One graph with its truth-table condition"""

    model_config = ConfigDict(extra="forbid")

    n_in: int = Field(..., ge=0, description="Primary input count")
    n_out: int = Field(..., ge=0, description="Primary output count")
    node_types: List[int] = Field(
        ..., description="Node category per id (0 input, 1 AND, 2 output)"
    )
    levels: Optional[List[int]] = Field(
        None, description="Stored level labels; recomputed from edges when absent"
    )
    edges: List[Tuple[int, int, int]] = Field(
        ..., description="Existing edges as [child, parent, category]"
    )
    tt: List[str] = Field(..., description="Hex truth-table column per output")

    @field_validator("node_types")
    @classmethod
    def _node_categories(cls, value: List[int]) -> List[int]:
        bad = [v for v in value if not 0 <= v < K_X]
        if bad:
            raise ValueError(f"node categories out of range: {bad}")
        return value

    @field_validator("edges")
    @classmethod
    def _edge_categories(cls, value: List[Tuple[int, int, int]]) -> List[Tuple[int, int, int]]:
        for child, parent, cat in value:
            if not 1 <= cat < K_E:
                raise ValueError(f"edge ({child}, {parent}) has category {cat}")
        return value
