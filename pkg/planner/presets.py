"""
Precision plan template definitions.

Named plans covering the uniform baselines and the mixed-precision
configurations, so a plan can be picked by id instead of written by hand.
Templates are written like plan files: an int bit width, "fp", or
{"b": .., "r": ..} for a frequency-clustered embedding.
"""

from dataclasses import dataclass, field

from planner.groups import ModelDims
from planner.plan import PlanFile, PrecisionPlan

# Sub-layer settings reused across the mixed-precision templates
DECODER_1_8 = {"dec_dd": 2, "dec_ed": 3, "dec_ffn": 1}
ENCODER_3_7 = {"enc_ee": 3, "enc_ffn": 4}
DECODER_FP = {"dec_dd": "fp", "dec_ed": "fp", "dec_ffn": "fp"}
ENCODER_FP = {"enc_ee": "fp", "enc_ffn": "fp"}

EMBEDDING_2_5 = {"b": 4, "r": 1}
EMBEDDING_1_3 = {"b": 4, "r": 4}
EMBEDDING_1_1 = {"b": 4, "r": 8}


@dataclass
class PlanTemplate:
    """Template for building precision plans."""

    description: str
    groups: dict[str, object] = field(default_factory=dict)
    overrides: dict[str, object] = field(default_factory=dict)

    def build(self, dims: ModelDims) -> PrecisionPlan:
        plan_file = PlanFile.model_validate(
            {"groups": self.groups, "overrides": self.overrides}
        )
        return plan_file.resolve(dims)


def _uniform(bits: object) -> dict[str, object]:
    return {
        "embedding": bits,
        "enc_ee": bits,
        "enc_ffn": bits,
        "dec_dd": bits,
        "dec_ed": bits,
        "dec_ffn": bits,
    }


# Template registry
PLAN_TEMPLATES: dict[str, PlanTemplate] = {
    # Baselines: one bit width for every target
    "fp": PlanTemplate("Full precision everywhere", _uniform("fp")),
    "uniform-4": PlanTemplate("4-bit baseline", _uniform(4)),
    "uniform-3": PlanTemplate("3-bit baseline", _uniform(3)),
    "uniform-2": PlanTemplate("2-bit baseline", _uniform(2)),
    "uniform-1": PlanTemplate("1-bit baseline", _uniform(1)),
    "emb-2": PlanTemplate(
        "2-bit embedding baseline, FP blocks",
        {"embedding": 2, **DECODER_FP, **ENCODER_FP},
    ),
    # Phase 1: frequency-clustered embedding only
    "emb-2.5": PlanTemplate(
        "2.5-bit clustered embedding (b=4, r=1), FP blocks",
        {"embedding": EMBEDDING_2_5, **DECODER_FP, **ENCODER_FP},
    ),
    "emb-1.3": PlanTemplate(
        "1.3-bit clustered embedding (b=4, r=4), FP blocks",
        {"embedding": EMBEDDING_1_3, **DECODER_FP, **ENCODER_FP},
    ),
    "emb-1.1": PlanTemplate(
        "1.1-bit clustered embedding (b=4, r=8), FP blocks",
        {"embedding": EMBEDDING_1_1, **DECODER_FP, **ENCODER_FP},
    ),
    # Phase 2: + 1.8-bit decoder
    "emb-2.5-dec-1.8": PlanTemplate(
        "2.5-bit embedding, 1.8-bit decoder, FP encoder",
        {"embedding": EMBEDDING_2_5, **DECODER_1_8, **ENCODER_FP},
    ),
    "emb-1.3-dec-1.8": PlanTemplate(
        "1.3-bit embedding, 1.8-bit decoder, FP encoder",
        {"embedding": EMBEDDING_1_3, **DECODER_1_8, **ENCODER_FP},
    ),
    "emb-1.1-dec-1.8": PlanTemplate(
        "1.1-bit embedding, 1.8-bit decoder, FP encoder",
        {"embedding": EMBEDDING_1_1, **DECODER_1_8, **ENCODER_FP},
    ),
    # Phase 3: + 3.7-bit encoder
    "emb-2.5-dec-1.8-enc-3.7": PlanTemplate(
        "2.5-bit embedding, 1.8-bit decoder, 3.7-bit encoder",
        {"embedding": EMBEDDING_2_5, **DECODER_1_8, **ENCODER_3_7},
    ),
    "emb-1.3-dec-1.8-enc-3.7": PlanTemplate(
        "1.3-bit embedding, 1.8-bit decoder, 3.7-bit encoder",
        {"embedding": EMBEDDING_1_3, **DECODER_1_8, **ENCODER_3_7},
    ),
    "emb-1.1-dec-1.8-enc-3.7": PlanTemplate(
        "1.1-bit embedding, 1.8-bit decoder, 3.7-bit encoder",
        {"embedding": EMBEDDING_1_1, **DECODER_1_8, **ENCODER_3_7},
    ),
}


def get_template(template_id: str) -> PlanTemplate | None:
    """Get a plan template by ID."""
    return PLAN_TEMPLATES.get(template_id)


def list_templates() -> list[str]:
    """List all available template IDs."""
    return list(PLAN_TEMPLATES.keys())
