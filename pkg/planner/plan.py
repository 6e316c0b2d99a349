"""
Precision plans: which bit width every weight matrix of a model gets.

A group setting is an int bit width (1..8), None for full precision, or a
ClusterSpec for the frequency-clustered embedding. Per-matrix overrides win
over the group setting.
"""

import logging
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from bcq.quantized import MAX_BITS
from planner.clusters import ClusterSpec, average_bits_embedding, cluster_embedding
from planner.errors import MissingFrequencyError, PlanCoverageError
from planner.frequency import FrequencyTable, assign_word_bits
from planner.groups import (
    BASE_DIMS,
    ModelDims,
    ParameterGroup,
    ParamSpec,
    model_layout,
    target_matrices,
)

logger = logging.getLogger(__name__)

FP_BITS = 32

Bits = Annotated[int, Field(ge=1, le=MAX_BITS)]
GroupSetting = Bits | ClusterSpec | None


class PrecisionPlan(BaseModel):
    dims: ModelDims
    groups: dict[ParameterGroup, GroupSetting] = Field(default_factory=dict)
    overrides: dict[str, Bits | None] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self) -> "PrecisionPlan":
        for group, setting in self.groups.items():
            if isinstance(setting, ClusterSpec):
                if group != ParameterGroup.EMBEDDING:
                    raise ValueError(f"Only the embedding can be frequency clustered, not {group.value}")
                if setting.vocab_size != self.dims.vocab_size:
                    raise ValueError(
                        f"Embedding clusters cover {setting.vocab_size} words, "
                        f"vocabulary has {self.dims.vocab_size}"
                    )

        targets = {spec.name for spec in target_matrices(self.dims)}
        unknown = sorted(set(self.overrides) - targets)
        if unknown:
            raise ValueError(f"Overrides name unknown weight matrices: {', '.join(unknown)}")
        return self

    def is_covered(self, spec: ParamSpec) -> bool:
        return spec.name in self.overrides or spec.group in self.groups

    def uncovered(self) -> list[str]:
        return [spec.name for spec in target_matrices(self.dims) if not self.is_covered(spec)]

    def check_coverage(self) -> None:
        missing = self.uncovered()
        if missing:
            raise PlanCoverageError(missing)

    def setting_for(self, spec: ParamSpec) -> GroupSetting:
        if spec.group is None:
            return None
        if spec.name in self.overrides:
            return self.overrides[spec.name]
        if spec.group not in self.groups:
            raise PlanCoverageError([spec.name])
        return self.groups[spec.group]

    def matrix_bits(self, spec: ParamSpec) -> float:
        """Average bits per weight of one target matrix (full precision counts 32)"""
        setting = self.setting_for(spec)
        if setting is None:
            return float(FP_BITS)
        if isinstance(setting, ClusterSpec):
            return average_bits_embedding(setting)
        return float(setting)

    def row_clusters(self, spec: ParamSpec) -> list[tuple[int, int]] | None:
        """(row_count, bits) runs in frequency-rank order for clusters; None when FP"""
        setting = self.setting_for(spec)
        if setting is None:
            return None
        if isinstance(setting, ClusterSpec):
            return setting.row_clusters()
        return [(spec.shape[0], setting)]

    def row_bits(self, spec: ParamSpec, freq: FrequencyTable | None = None) -> np.ndarray | None:
        """Bit width of every row in storage order; None when the matrix stays FP"""
        setting = self.setting_for(spec)
        if setting is None:
            return None
        if isinstance(setting, ClusterSpec):
            if freq is None:
                raise MissingFrequencyError(
                    f"{spec.name} is frequency clustered; a frequency table is required"
                )
            return assign_word_bits(freq, setting).bits_by_token()
        return np.full(spec.shape[0], setting, dtype=np.int64)

    def needs_frequencies(self) -> bool:
        return isinstance(self.groups.get(ParameterGroup.EMBEDDING), ClusterSpec)

    def quantized_groups(self) -> set[ParameterGroup]:
        return {group for group, setting in self.groups.items() if setting is not None}

    def restricted_to(self, groups: set[ParameterGroup]) -> "PrecisionPlan":
        """Same plan with every group outside groups (and its overrides) set to FP"""
        kept = {
            group: (setting if group in groups else None)
            for group, setting in self.groups.items()
        }
        layout = {spec.name: spec for spec in model_layout(self.dims)}
        overrides = {
            name: bits
            for name, bits in self.overrides.items()
            if layout[name].group in groups
        }
        return PrecisionPlan(dims=self.dims, groups=kept, overrides=overrides)

    @staticmethod
    def uniform(dims: ModelDims, bits: int | None) -> "PrecisionPlan":
        return PrecisionPlan(dims=dims, groups={group: bits for group in ParameterGroup})


class EmbeddingClusters(BaseModel):
    b: int = Field(ge=1, le=MAX_BITS)
    r: float = Field(ge=1.0)


FileSetting = Bits | Literal["fp"] | EmbeddingClusters


class PlanFile(BaseModel):
    """On-disk JSON plan: {"groups": {...}, "overrides": {...}, "dims": {...}}"""

    groups: dict[ParameterGroup, FileSetting]
    overrides: dict[str, Bits | Literal["fp"]] = Field(default_factory=dict)
    dims: ModelDims | None = None

    @field_validator("groups", "overrides", mode="before")
    @classmethod
    def _thirty_two_is_fp(cls, value: dict) -> dict:
        if isinstance(value, dict):
            return {k: ("fp" if v == FP_BITS else v) for k, v in value.items()}
        return value

    def resolve(self, dims: ModelDims | None = None) -> PrecisionPlan:
        """dims (usually from the checkpoint) win over the file's dims"""
        resolved_dims = dims or self.dims
        if resolved_dims is None:
            logger.info("plan file has no dims; using the base configuration")
            resolved_dims = BASE_DIMS

        groups: dict[ParameterGroup, GroupSetting] = {}
        for group, setting in self.groups.items():
            if setting == "fp":
                groups[group] = None
            elif isinstance(setting, EmbeddingClusters):
                groups[group] = cluster_embedding(
                    resolved_dims.vocab_size, setting.b, setting.r
                )
            else:
                groups[group] = setting

        overrides = {
            name: (None if bits == "fp" else bits) for name, bits in self.overrides.items()
        }
        return PrecisionPlan(dims=resolved_dims, groups=groups, overrides=overrides)

    @staticmethod
    def from_plan(plan: PrecisionPlan) -> "PlanFile":
        groups: dict[ParameterGroup, FileSetting] = {}
        for group, setting in plan.groups.items():
            if setting is None:
                groups[group] = "fp"
            elif isinstance(setting, ClusterSpec):
                groups[group] = EmbeddingClusters(b=setting.b, r=setting.r)
            else:
                groups[group] = setting
        overrides = {
            name: ("fp" if bits is None else bits) for name, bits in plan.overrides.items()
        }
        return PlanFile(groups=groups, overrides=overrides, dims=plan.dims)


def load_plan(path: str | Path, dims: ModelDims | None = None) -> PrecisionPlan:
    plan_file = PlanFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    return plan_file.resolve(dims)


def save_plan(plan: PrecisionPlan, path: str | Path) -> None:
    Path(path).write_text(
        PlanFile.from_plan(plan).model_dump_json(indent=2), encoding="utf-8"
    )


# Retraining phases: embedding first, then the decoder, then the encoder
PHASE_GROUPS: list[set[ParameterGroup]] = [
    {ParameterGroup.EMBEDDING},
    {
        ParameterGroup.EMBEDDING,
        ParameterGroup.DEC_DD,
        ParameterGroup.DEC_ED,
        ParameterGroup.DEC_FFN,
    },
    set(ParameterGroup),
]


def cumulative_phases(plan: PrecisionPlan) -> list[PrecisionPlan]:
    """Three phase plans, each quantizing a superset of the previous one"""
    return [plan.restricted_to(groups) for groups in PHASE_GROUPS]
