"""earthdial: geospatial instruction-dataset forge and evaluation toolkit.

Pipeline pieces: raster loading and curation filters, adaptive 448-tile
planning, spectral/temporal token fusion, prompt-driven instruction-record
generation with format retries, rotated-box geometry, and the evaluation
metric suite, all wired together behind the ``earthdial`` CLI.
"""

from ._kernels import available_backends, backend, use_backend
from .errors import EarthdialError
from .fusion import FusionConfig, TokenGrid, TokenSequence, token_budget
from .geometry import RotatedBox, parse_boxes, render_boxes, rotated_iou
from .instruct import (
    InstructionRecord,
    Label,
    LabeledSample,
    Turn,
    curate_records,
    generate_record,
    render_prompt,
    render_task_record,
    validate_qa_format,
)
from .metrics import (
    EvalReport,
    classification_scores,
    detection_scores,
    meteor,
    multilabel_scores,
    rouge_l,
    rouge_n,
    tokenize,
)
from .raster import Raster, load_raster, read_bgrid, write_bgrid
from .tags import ModalityTag, TaskTag, render_tags
from .tiler import TilePlan, TilerConfig, crop, plan_tiles, select_grid

__version__ = "0.1.0"

__all__ = [
    "EarthdialError",
    "Raster",
    "load_raster",
    "read_bgrid",
    "write_bgrid",
    "TilerConfig",
    "TilePlan",
    "select_grid",
    "plan_tiles",
    "crop",
    "FusionConfig",
    "TokenGrid",
    "TokenSequence",
    "token_budget",
    "Label",
    "LabeledSample",
    "Turn",
    "InstructionRecord",
    "render_prompt",
    "validate_qa_format",
    "generate_record",
    "render_task_record",
    "curate_records",
    "RotatedBox",
    "rotated_iou",
    "parse_boxes",
    "render_boxes",
    "tokenize",
    "rouge_n",
    "rouge_l",
    "meteor",
    "detection_scores",
    "classification_scores",
    "multilabel_scores",
    "EvalReport",
    "ModalityTag",
    "TaskTag",
    "render_tags",
    "use_backend",
    "backend",
    "available_backends",
    "__version__",
]
