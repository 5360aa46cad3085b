"""Modality and task tags for EarthDial-Instruct records.

Tag strings are part of the record wire format and must render byte-exact.
The canonical combined form is ``[task][modality]`` with no separator; the
published corpus manifest prints some rows with a single space between the
two tags, which :func:`render_row_tags` reproduces.
"""

from __future__ import annotations

import enum
import re

__all__ = [
    "ModalityTag",
    "TaskTag",
    "render_tags",
    "render_row_tags",
    "audit_tag_string",
    "find_unknown_tags",
    "STAGE_ROWS",
    "REFERENCE_STAGE_COUNTS",
]


class ModalityTag(str, enum.Enum):
    """Sensor/resolution tag; the numeric suffix is the GSD in meters."""

    HR_RGB_05 = "hr_rgb_0.5"
    S2_RGB_10 = "s2_rgb_10"
    L8_RGB_30 = "l8_rgb_30"
    S1_VH_10 = "s1_vh_10"
    S2_MS_30 = "s2_ms_30"
    HR_RGBI_05 = "hr_rgbi_0.5"
    HYPER_RGB_3 = "hyper_rgb_3"
    L8_MS_30 = "l8_ms_30"
    HR_RGB_TEMP_05 = "hr_rgb_temp_0.5"

    @property
    def rendered(self) -> str:
        return f"[{self.value}]"


class TaskTag(str, enum.Enum):
    """Task prefix tag; precedes the modality tag when present."""

    CAPTION = "caption"
    CHANGEDET = "changedet"
    TREECLASSIFY = "treeclassify"
    UHI = "uhi"

    @property
    def rendered(self) -> str:
        return f"[{self.value}]"


def render_tags(task: TaskTag | None, modality: ModalityTag) -> str:
    """Canonical combined tag string: ``[task][modality]``, no space."""
    if task is None:
        return modality.rendered
    return task.rendered + modality.rendered


# Rows of the published corpus manifest that carry a task tag print either
# zero or one space between the tags; keyed by task.
_ROW_SPACING = {
    TaskTag.CAPTION: " ",
    TaskTag.CHANGEDET: "",
    TaskTag.TREECLASSIFY: " ",
    TaskTag.UHI: "",
}


def render_row_tags(task: TaskTag | None, modality: ModalityTag) -> str:
    """Tag string exactly as the corresponding manifest row prints it."""
    if task is None:
        return modality.rendered
    return task.rendered + _ROW_SPACING[task] + modality.rendered


_TAG_ATOM = re.compile(r"\[([a-z0-9_.]+)\]")
_KNOWN_ATOMS = {m.value for m in ModalityTag} | {t.value for t in TaskTag}

# A full tag string is one modality tag optionally preceded by a task tag
# with zero or one space in between.
_TAG_STRING = re.compile(
    r"^(?:\[(?:%s)\] ?)?\[(?:%s)\]$"
    % (
        "|".join(re.escape(t.value) for t in TaskTag),
        "|".join(re.escape(m.value) for m in ModalityTag),
    )
)


def audit_tag_string(text: str) -> bool:
    """True iff ``text`` is a well-formed tag string made of known atoms."""
    return bool(_TAG_STRING.match(text))


def find_unknown_tags(text: str) -> list[str]:
    """Bracketed atoms in ``text`` that are not known tags."""
    return [a for a in _TAG_ATOM.findall(text) if a not in _KNOWN_ATOMS]


# (stage, dataset, task tag, modality tag, published record count).
# Counts document the published corpus; they are not reproduced here.
STAGE_ROWS: tuple[tuple[int, str, TaskTag | None, ModalityTag, int], ...] = (
    (1, "NAIP", None, ModalityTag.HR_RGB_05, 3_000_113),
    (1, "Sentinel-2", None, ModalityTag.S2_RGB_10, 2_749_511),
    (1, "Landsat", None, ModalityTag.L8_RGB_30, 1_671_437),
    (1, "SkyScript", None, ModalityTag.S2_RGB_10, 249_855),
    (2, "Classification", None, ModalityTag.HR_RGB_05, 565_853),
    (2, "Detection", None, ModalityTag.HR_RGB_05, 22_624),
    (2, "Visual Grounding", None, ModalityTag.HR_RGB_05, 17_845),
    (2, "Caption", TaskTag.CAPTION, ModalityTag.HR_RGB_05, 202_530),
    (2, "VQA", None, ModalityTag.HR_RGB_05, 630_768),
    (2, "Change Detection", TaskTag.CHANGEDET, ModalityTag.HR_RGB_TEMP_05, 64_631),
    (2, "Disaster assessment", None, ModalityTag.HR_RGB_TEMP_05, 37_563),
    (2, "Geochat", None, ModalityTag.HR_RGB_05, 308_861),
    (3, "Sentinel-1", None, ModalityTag.S1_VH_10, 1_668_043),
    (3, "Local Climate Zones", None, ModalityTag.S2_MS_30, 765_591),
    (3, "Tree Species", TaskTag.TREECLASSIFY, ModalityTag.HR_RGBI_05, 38_527),
    (3, "Methane Plume", None, ModalityTag.HYPER_RGB_3, 6_849),
    (3, "Urban Heat Island", TaskTag.UHI, ModalityTag.L8_MS_30, 1_296),
)

REFERENCE_STAGE_COUNTS: dict[tuple[int, str], int] = {
    (stage, dataset): count for stage, dataset, _, _, count in STAGE_ROWS
}

# Valid (stage, canonical tag string) combinations, derived from the rows.
VALID_STAGE_TAGS: frozenset[tuple[int, str]] = frozenset(
    (stage, render_tags(task, modality)) for stage, _, task, modality, _ in STAGE_ROWS
)
