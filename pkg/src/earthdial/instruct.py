"""Instruction-record generation: filters, prompts, templates, manifests.

Two production paths feed the corpus. Pre-training captions/QA come from a
generator endpoint, prompted with an annotated keyword list and validated
against a strict Question:/Answer: format with bounded retries. Downstream
task records are rendered from label data through fixed templates, one per
task family, each stamped with the stage and tag string of its manifest row.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .errors import (
    FormatError,
    FormatExhausted,
    InvalidClassLabel,
    InvalidRange,
    MissingField,
    ParseError,
    UnknownSubject,
)
from .geometry import RotatedBox, render_box, render_boxes
from .jsonio import read_jsonl, write_jsonl
from .raster import Raster, mean_luminance, valid_coverage
from .tags import ModalityTag, TaskTag, VALID_STAGE_TAGS, render_tags

INSTRUCT_SCHEMA = "earthdial-instruct/1"
IMAGE_PLACEHOLDER = "<ImageHere>"

DEFAULT_MIN_LABELS = 3
DEFAULT_LUM_MAX = 0.8
DEFAULT_COV_MIN = 0.5
DEFAULT_MAX_ATTEMPTS = 5

GEOMETRY_KINDS = ("point", "polygon", "box")

TASK_KINDS = (
    "pretrain_caption",
    "classification",
    "detection",
    "grounding",
    "caption",
    "vqa",
    "change_detection",
    "disaster",
    "methane",
    "uhi",
    "lcz",
    "tree_species",
)

DISASTER_TYPES = ("flood", "wind", "fire", "tsunami", "earthquake", "volcano")
UHI_CLASSES = ("cooler", "mildly hot", "extremely hot")

# Pre-training source -> (stage, manifest dataset, modality).
SOURCE_ROW: dict[str, tuple[int, str, ModalityTag]] = {
    "NAIP": (1, "NAIP", ModalityTag.HR_RGB_05),
    "Sentinel-2": (1, "Sentinel-2", ModalityTag.S2_RGB_10),
    "Landsat": (1, "Landsat", ModalityTag.L8_RGB_30),
    "SkyScript": (1, "SkyScript", ModalityTag.S2_RGB_10),
    "Sentinel-1": (3, "Sentinel-1", ModalityTag.S1_VH_10),
}

# task_kind -> (stage, task tag, modality, default manifest dataset).
TASK_DEFAULTS: dict[str, tuple[int, TaskTag | None, ModalityTag, str]] = {
    "pretrain_caption": (1, None, ModalityTag.HR_RGB_05, "NAIP"),
    "classification": (2, None, ModalityTag.HR_RGB_05, "Classification"),
    "detection": (2, None, ModalityTag.HR_RGB_05, "Detection"),
    "grounding": (2, None, ModalityTag.HR_RGB_05, "Visual Grounding"),
    "caption": (2, TaskTag.CAPTION, ModalityTag.HR_RGB_05, "Caption"),
    "vqa": (2, None, ModalityTag.HR_RGB_05, "VQA"),
    "change_detection": (2, TaskTag.CHANGEDET, ModalityTag.HR_RGB_TEMP_05, "Change Detection"),
    "disaster": (2, None, ModalityTag.HR_RGB_TEMP_05, "Disaster assessment"),
    "methane": (3, None, ModalityTag.HYPER_RGB_3, "Methane Plume"),
    "uhi": (3, TaskTag.UHI, ModalityTag.L8_MS_30, "Urban Heat Island"),
    "lcz": (3, None, ModalityTag.S2_MS_30, "Local Climate Zones"),
    "tree_species": (3, TaskTag.TREECLASSIFY, ModalityTag.HR_RGBI_05, "Tree Species"),
}

PARKING_LOT_EXEMPLAR = (
    "Subject: parking lot. Question: How does the parking lot contribute to "
    "environmental sustainability? Answer: The parking lot in the lower left "
    "seems to be equipped with solar panel canopies, promoting renewable "
    "energy use."
)


@dataclass(frozen=True)
class Label:
    """One annotation on a sample: a category plus optional geometry info."""

    category: str
    geometry: str = "point"
    position: str = ""
    attributes: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.category.strip():
            raise ValueError("label category must be non-empty")
        if self.geometry not in GEOMETRY_KINDS:
            raise ValueError(f"geometry must be one of {GEOMETRY_KINDS}")


@dataclass(frozen=True)
class LabeledSample:
    """Source image reference(s) plus annotations, pre-curation."""

    sample_id: str
    image_refs: tuple[str, ...]
    source: str
    labels: tuple[Label, ...] = ()

    def __post_init__(self) -> None:
        if not self.sample_id.strip():
            raise ValueError("sample_id must be non-empty")
        if not self.image_refs:
            raise ValueError("sample needs at least one image ref")
        object.__setattr__(self, "image_refs", tuple(self.image_refs))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def categories(self) -> list[str]:
        """Label categories, deduplicated, in first-appearance order."""
        seen = []
        for label in self.labels:
            if label.category not in seen:
                seen.append(label.category)
        return seen


@dataclass(frozen=True)
class Turn:
    role: str
    text: str

    def __post_init__(self) -> None:
        if self.role not in ("user", "assistant"):
            raise ValueError(f"role must be user/assistant, got {self.role!r}")
        if not self.text.strip():
            raise ValueError("turn text must be non-empty")


@dataclass(frozen=True)
class InstructionRecord:
    """One emitted training record; validated against the manifest rows."""

    record_id: str
    stage: int
    task_kind: str
    dataset: str
    tags: str
    image_refs: tuple[str, ...]
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        if not self.record_id.strip():
            raise ValueError("record_id must be non-empty")
        if self.stage not in (1, 2, 3):
            raise ValueError(f"stage must be 1, 2 or 3, got {self.stage}")
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        if not self.dataset.strip():
            raise ValueError("dataset must be non-empty")
        if (self.stage, self.tags) not in VALID_STAGE_TAGS:
            raise ValueError(
                f"tag string {self.tags!r} is not valid for stage {self.stage}"
            )
        if not self.image_refs:
            raise ValueError("record needs at least one image ref")
        if len(self.turns) < 2 or len(self.turns) % 2:
            raise ValueError("turns must be non-empty user/assistant pairs")
        for i, turn in enumerate(self.turns):
            expected = "user" if i % 2 == 0 else "assistant"
            if turn.role != expected:
                raise ValueError(f"turn {i} must be {expected}, got {turn.role}")
        object.__setattr__(self, "image_refs", tuple(self.image_refs))
        object.__setattr__(self, "turns", tuple(self.turns))

    def to_dict(self) -> dict:
        return {
            "schema": INSTRUCT_SCHEMA,
            "record_id": self.record_id,
            "stage": self.stage,
            "task_kind": self.task_kind,
            "dataset": self.dataset,
            "tags": self.tags,
            "image_refs": list(self.image_refs),
            "turns": [{"role": t.role, "text": t.text} for t in self.turns],
        }


# --- curation filters -------------------------------------------------------

def filter_labels(
    samples: Iterable[LabeledSample], min_labels: int = DEFAULT_MIN_LABELS
) -> list[LabeledSample]:
    """Keep samples with at least ``min_labels`` annotations."""

    if min_labels < 1:
        raise InvalidRange(f"min_labels must be >= 1, got {min_labels}")
    return [s for s in samples if len(s.labels) >= min_labels]


def filter_image(
    raster: Raster,
    lum_max: float = DEFAULT_LUM_MAX,
    cov_min: float = DEFAULT_COV_MIN,
) -> bool:
    """True when the image passes the brightness and coverage gates."""

    for name, v in (("lum_max", lum_max), ("cov_min", cov_min)):
        if not 0.0 <= v <= 1.0:
            raise InvalidRange(f"{name} must be in [0, 1], got {v}")
    return mean_luminance(raster) <= lum_max and valid_coverage(raster) >= cov_min


# --- prompt rendering and format validation ---------------------------------

def render_prompt(
    sample: LabeledSample, subject: str, exemplar: str = PARKING_LOT_EXEMPLAR
) -> str:
    """Generation prompt for one sample/subject pair.

    The subject must be one of the sample's label categories
    (case-insensitive); keywords are all categories in annotation order.
    """

    categories = sample.categories
    if subject.strip().lower() not in {c.lower() for c in categories}:
        raise UnknownSubject(
            f"subject {subject!r} is not among the sample's categories {categories}"
        )
    keywords = ", ".join(categories)
    ex = exemplar.strip()
    if not ex.endswith("."):
        ex += "."
    return (
        "Write a question and answer pair about this satellite image. "
        f"For example, on another image, a satisfactory pair is: {ex} "
        "The current image has been annotated with the following keywords: "
        f"{keywords}. Generate the pair for the following subject: {subject}, "
        "which is visible in the satellite image. The question or answer must "
        f"refer to the {subject}, and must refer to either its position, "
        "interaction with other elements in the image, characteristics, or "
        "function. The answer must be objective, based on visible elements in "
        "the image, and require the image to answer. Avoid any assumptions or "
        "extrapolations that are not clearly supported by the image."
    )


def wrap_with_image_placeholder(prompt: str) -> str:
    """Full message text: the image placeholder directly before the prompt."""

    return IMAGE_PLACEHOLDER + prompt


_Q_MARK = "Question:"
_A_MARK = "Answer:"


def validate_qa_format(text: str) -> tuple[str, str]:
    """Split generated text into (question, answer) or raise FormatError.

    The text must contain exactly one "Question:" and exactly one "Answer:",
    in that order, each followed by non-empty content.
    """

    q_count = text.count(_Q_MARK)
    a_count = text.count(_A_MARK)
    if q_count == 0 or a_count == 0:
        raise FormatError(
            f"missing marker: {q_count} Question:, {a_count} Answer:"
        )
    if q_count > 1 or a_count > 1:
        raise FormatError(
            f"duplicate marker: {q_count} Question:, {a_count} Answer:"
        )
    qi = text.index(_Q_MARK)
    ai = text.index(_A_MARK)
    if ai < qi:
        raise FormatError("marker order: Answer: precedes Question:")
    question = text[qi + len(_Q_MARK) : ai].strip()
    answer = text[ai + len(_A_MARK) :].strip()
    if not question or not answer:
        raise FormatError("empty field: question or answer has no content")
    return question, answer


class GeneratorLike(Protocol):
    """Anything that can answer a prompt about a set of images."""

    def generate(self, prompt: str, image_refs: Sequence[str] = ()) -> str: ...


_SLUG_RE = re.compile(r"[^a-z0-9]+")


def _slug(text: str) -> str:
    return _SLUG_RE.sub("-", text.strip().lower()).strip("-") or "x"


def _source_row(source: str) -> tuple[int, str, ModalityTag]:
    # Unlisted sources are treated as generic high-res VQA material.
    return SOURCE_ROW.get(source, (2, source, ModalityTag.HR_RGB_05))


def generate_record(
    sample: LabeledSample,
    subject: str,
    client: GeneratorLike,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    exemplar: str = PARKING_LOT_EXEMPLAR,
) -> InstructionRecord:
    """Prompt the generator until the output validates; bounded retries.

    Each retry resends the identical prompt. Format failures are consumed
    up to ``max_attempts`` total attempts, then FormatExhausted; transport
    errors are the client's concern and propagate immediately.
    """

    if max_attempts < 1:
        raise InvalidRange(f"max_attempts must be >= 1, got {max_attempts}")
    message = wrap_with_image_placeholder(render_prompt(sample, subject, exemplar))
    for _ in range(max_attempts):
        try:
            question, answer = validate_qa_format(
                client.generate(message, sample.image_refs)
            )
        except FormatError:
            continue
        stage, dataset, modality = _source_row(sample.source)
        return InstructionRecord(
            record_id=f"{sample.sample_id}:{_slug(subject)}",
            stage=stage,
            task_kind="pretrain_caption" if stage != 2 else "vqa",
            dataset=dataset,
            tags=render_tags(None, modality),
            image_refs=sample.image_refs,
            turns=(Turn("user", question), Turn("assistant", answer)),
        )
    raise FormatExhausted(max_attempts)


def offline_caption(sample: LabeledSample) -> str:
    """Deterministic caption used when no generator endpoint is configured."""

    categories = sample.categories
    if not categories:
        raise MissingField("sample has no labels to caption")
    if len(categories) == 1:
        listed = categories[0]
    else:
        listed = ", ".join(categories[:-1]) + " and " + categories[-1]
    return f"A satellite scene containing {listed}."


def curate_records(
    samples: Sequence[LabeledSample],
    client: GeneratorLike | None = None,
    min_labels: int = DEFAULT_MIN_LABELS,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    seed: int = 0,
    image_check: "Callable[[LabeledSample], bool] | None" = None,
) -> tuple[list[InstructionRecord], list[dict]]:
    """Filter samples and emit one record each; returns (records, skipped).

    Without a client, records are deterministic template captions. With
    one, the prompt subject is drawn per sample from a seeded RNG and
    format-exhausted samples are skipped rather than aborting the run.
    Record order follows input order, so identical inputs and seed give
    byte-identical output files.
    """

    if min_labels < 1:
        raise InvalidRange(f"min_labels must be >= 1, got {min_labels}")
    rng = random.Random(seed)
    records: list[InstructionRecord] = []
    skipped: list[dict] = []
    for sample in samples:
        if len(sample.labels) < min_labels:
            skipped.append({"sample_id": sample.sample_id, "reason": "min_labels"})
            continue
        if image_check is not None and not image_check(sample):
            skipped.append({"sample_id": sample.sample_id, "reason": "image_filter"})
            continue
        if client is None:
            records.append(
                render_task_record(
                    "pretrain_caption",
                    {
                        "image_refs": sample.image_refs,
                        "caption": offline_caption(sample),
                        "record_id": sample.sample_id,
                        "source": sample.source,
                    },
                )
            )
            continue
        subject = rng.choice(sample.categories)
        try:
            records.append(
                generate_record(sample, subject, client, max_attempts=max_attempts)
            )
        except FormatExhausted:
            skipped.append({"sample_id": sample.sample_id, "reason": "format_exhausted"})
    return records, skipped


# --- task templates ----------------------------------------------------------

def _require(inputs: Mapping, key: str):
    if key not in inputs or inputs[key] in (None, "", []):
        raise MissingField(f"task input {key!r} is required")
    return inputs[key]


def _canonical_choice(value: str, options: Sequence[str]) -> str:
    for opt in options:
        if opt.strip().lower() == value.strip().lower():
            return opt
    raise InvalidClassLabel(f"{value!r} is not among options {list(options)}")


def _coerce_box(value) -> RotatedBox:
    if isinstance(value, RotatedBox):
        return value
    vals = [float(v) for v in value]
    if len(vals) == 4:
        vals.append(0.0)
    if len(vals) != 5:
        raise MissingField(f"box needs 4 or 5 numbers, got {value!r}")
    return RotatedBox(*vals)


def _fmt_rate(rate: float) -> str:
    return str(int(rate)) if float(rate).is_integer() else str(float(rate))


def render_task_record(task_kind: str, inputs: Mapping) -> InstructionRecord:
    """Build a downstream-task record from labels through fixed templates.

    ``inputs`` carries the per-task fields plus ``image_refs`` and an
    optional ``record_id``/``dataset`` override; missing required fields
    raise MissingField, closed-vocabulary violations InvalidClassLabel.
    """

    if task_kind not in TASK_DEFAULTS:
        raise InvalidRange(f"unknown task_kind {task_kind!r}")
    image_refs = tuple(_require(inputs, "image_refs"))
    turns: list[Turn]

    if task_kind in ("classification", "lcz", "tree_species"):
        options = [str(o) for o in _require(inputs, "options")]
        answer = _canonical_choice(str(_require(inputs, "class_label")), options)
        turns = [
            Turn(
                "user",
                "Classify the given image in one of the following classes. "
                f"Options: {', '.join(options)}.",
            ),
            Turn("assistant", answer),
        ]
    elif task_kind == "detection":
        target = str(_require(inputs, "object"))
        boxes = [_coerce_box(b) for b in _require(inputs, "boxes")]
        turns = [
            Turn("user", f"Locate every {target} in the image."),
            Turn("assistant", render_boxes(boxes)),
        ]
    elif task_kind == "grounding":
        expression = str(_require(inputs, "expression"))
        box = _coerce_box(_require(inputs, "box"))
        turns = [
            Turn("user", f"Provide the bounding box for: {expression}."),
            Turn("assistant", render_box(box)),
        ]
    elif task_kind in ("caption", "pretrain_caption"):
        turns = [
            Turn("user", "Could you provide a caption for the image?"),
            Turn("assistant", str(_require(inputs, "caption"))),
        ]
    elif task_kind == "vqa":
        turns = [
            Turn("user", str(_require(inputs, "question"))),
            Turn("assistant", str(_require(inputs, "answer"))),
        ]
    elif task_kind == "change_detection":
        if len(image_refs) < 2:
            raise MissingField("change_detection needs two image refs (pre/post)")
        turns = [
            Turn("user", "Are there any semantic changes between the two images?"),
            Turn("assistant", str(_require(inputs, "description"))),
        ]
    elif task_kind == "disaster":
        if len(image_refs) < 2:
            raise MissingField("disaster needs two image refs (pre/post)")
        answer = _canonical_choice(str(_require(inputs, "disaster_type")), DISASTER_TYPES)
        turns = [
            Turn(
                "user",
                "Identify the type of disaster shown in the images. "
                f"Options: {', '.join(DISASTER_TYPES)}.",
            ),
            Turn("assistant", answer),
        ]
    elif task_kind == "methane":
        present = _require(inputs, "present") if "present" in inputs else None
        if present is None:
            raise MissingField("task input 'present' is required")
        turns = [
            Turn("user", "Does the image contain a methane plume?"),
            Turn("assistant", "Yes" if present else "No"),
        ]
        if inputs.get("box") is not None:
            turns += [
                Turn("user", "Where is the plume located?"),
                Turn("assistant", render_box(_coerce_box(inputs["box"]))),
            ]
        if inputs.get("rate") is not None:
            turns += [
                Turn("user", "What is the estimated emission rate?"),
                Turn(
                    "assistant",
                    f"The emission rate is {_fmt_rate(inputs['rate'])} kg/h.",
                ),
            ]
    elif task_kind == "uhi":
        answer = _canonical_choice(str(_require(inputs, "trend")), UHI_CLASSES)
        turns = [
            Turn(
                "user",
                "What is the temperature trend in the highlighted region? "
                f"Options: {', '.join(UHI_CLASSES)}.",
            ),
            Turn("assistant", answer),
        ]
    else:  # pragma: no cover - TASK_DEFAULTS and branches kept in sync
        raise InvalidRange(f"unhandled task_kind {task_kind!r}")

    stage, task_tag, modality, default_dataset = TASK_DEFAULTS[task_kind]
    if task_kind == "pretrain_caption" and "source" in inputs:
        stage, default_dataset, modality = _source_row(str(inputs["source"]))
    record_id = str(inputs.get("record_id") or f"{task_kind}/{_slug(image_refs[0])}")
    return InstructionRecord(
        record_id=record_id,
        stage=stage,
        task_kind=task_kind,
        dataset=str(inputs.get("dataset") or default_dataset),
        tags=render_tags(task_tag, modality),
        image_refs=image_refs,
        turns=tuple(turns),
    )


# --- manifest and serialization ----------------------------------------------

MANIFEST_SCHEMA = "earthdial-manifest/1"


@dataclass(frozen=True)
class StageManifest:
    """Per (stage, dataset, tags) record counts for an emitted corpus."""

    rows: tuple[tuple[int, str, str, int], ...]

    @property
    def total(self) -> int:
        return sum(count for *_, count in self.rows)

    def count_for(self, stage: int, dataset: str) -> int:
        return sum(c for s, d, _, c in self.rows if (s, d) == (stage, dataset))

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "total": self.total,
            "rows": [
                {"stage": s, "dataset": d, "tags": t, "count": c}
                for s, d, t, c in self.rows
            ],
        }


def assemble_stage_manifest(records: Iterable[InstructionRecord]) -> StageManifest:
    counts: Counter = Counter()
    for record in records:
        counts[(record.stage, record.dataset, record.tags)] += 1
    rows = tuple(
        (stage, dataset, tags, count)
        for (stage, dataset, tags), count in sorted(counts.items())
    )
    return StageManifest(rows=rows)


def write_records(path: str | Path, records: Sequence[InstructionRecord]) -> int:
    return write_jsonl(path, (r.to_dict() for r in records))


def _record_from_dict(obj: dict, line: int) -> InstructionRecord:
    if obj.get("schema") != INSTRUCT_SCHEMA:
        raise ParseError(line, f"expected schema {INSTRUCT_SCHEMA!r}, got {obj.get('schema')!r}")
    try:
        return InstructionRecord(
            record_id=obj["record_id"],
            stage=obj["stage"],
            task_kind=obj["task_kind"],
            dataset=obj["dataset"],
            tags=obj["tags"],
            image_refs=tuple(obj["image_refs"]),
            turns=tuple(Turn(t["role"], t["text"]) for t in obj["turns"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(line, f"bad record: {exc}") from exc


def read_records(path: str | Path) -> list[InstructionRecord]:
    return [_record_from_dict(obj, line) for line, obj in read_jsonl(path)]


def _sample_from_dict(obj: dict, line: int) -> LabeledSample:
    try:
        labels = tuple(
            Label(
                category=l["category"],
                geometry=l.get("geometry", "point"),
                position=l.get("position", ""),
                attributes=tuple(sorted((l.get("attributes") or {}).items())),
            )
            for l in obj.get("labels", [])
        )
        return LabeledSample(
            sample_id=obj["sample_id"],
            image_refs=tuple(obj["image_refs"]),
            source=obj.get("source", "NAIP"),
            labels=labels,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(line, f"bad sample: {exc}") from exc


def read_samples(path: str | Path) -> list[LabeledSample]:
    """Load curation input samples from a JSONL file."""

    return [_sample_from_dict(obj, line) for line, obj in read_jsonl(path)]
