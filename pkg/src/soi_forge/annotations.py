"""Four-level guidance annotations: data model, format validation, text
composition, noise perturbation, corpus statistics, storage, and the HTTP API
behind the review UI.

Levels: L1 positional context, L2 static appearance, L3 dynamic state,
L4 discriminative cues. Validation is heuristic and lexicon-based; only
mechanically checkable rules are errors, soft stylistic rules are warnings.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
import threading
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

LEVELS = (1, 2, 3, 4)
STATUSES = ("draft", "reviewed", "flagged")

PREPOSITIONS = frozenset(
    """at on in near beside under above over behind by along within inside
    outside between among atop upon toward towards next around amid amidst
    across against below beneath alongside underneath in-front in_front""".split()
)

COLOR_TERMS = frozenset(
    """red blue green yellow black white gray grey orange purple pink brown
    silver gold golden tan beige cyan magenta maroon navy teal violet crimson
    turquoise dark light""".split()
)

COPULAS = frozenset("is are was were being am be seems appears stands sits".split())

DIRECTION_ANTONYMS = {
    "left": "right", "right": "left",
    "above": "below", "below": "above",
    "front": "behind", "behind": "front",
    "upper": "lower", "lower": "upper",
    "top": "bottom", "bottom": "top",
    "near": "far", "far": "near",
}

COLOR_SWAPS = {
    "red": "blue", "blue": "red",
    "green": "orange", "orange": "green",
    "yellow": "purple", "purple": "yellow",
    "black": "white", "white": "black",
    "gray": "pink", "grey": "pink", "pink": "gray",
    "brown": "cyan", "cyan": "brown",
    "dark": "light", "light": "dark",
}

_COORDINATE_RE = re.compile(r"\d+\s*,\s*\d+")
_BOX_LANGUAGE_RE = re.compile(r"bounding\s+box", re.IGNORECASE)


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass
class SoiAnnotation:
    sequence: str
    frame_index: int
    level1: str = ""
    level2: str = ""
    level3: str = ""
    level4: str = ""
    status: str = "draft"
    editor: str = ""
    source: str = "vlm"  # "vlm" | "human"
    tags: list[str] = field(default_factory=list)
    created: str = field(default_factory=_utcnow)
    updated: str = field(default_factory=_utcnow)

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.source not in ("vlm", "human"):
            raise ValueError(f"unknown source {self.source!r}")

    def level_text(self, level: int) -> str:
        return getattr(self, f"level{level}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "SoiAnnotation":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})


@dataclass
class Finding:
    rule: str
    severity: str  # "error" | "warning"
    message: str
    level: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    def to_dict(self) -> dict:
        return {"findings": [f.to_dict() for f in self.findings]}


def _tokens(text: str) -> list[str]:
    return text.split()


def _bare(token: str) -> str:
    return token.strip(".,;:!?\"'()").lower()


def validate(annotation: SoiAnnotation) -> ValidationReport:
    """Check the four level texts against the annotation format rules."""
    findings: list[Finding] = []

    l1 = annotation.level1.strip()
    toks1 = _tokens(l1)
    if not toks1 or _bare(toks1[0]) not in PREPOSITIONS:
        findings.append(Finding("L1.preposition", "error",
                                "positional context must start with a preposition", 1))
    if not l1.endswith(","):
        findings.append(Finding("L1.comma", "error",
                                "positional context must end with a comma", 1))

    l2 = annotation.level2.strip()
    if not (l2.lower().startswith("a ") or l2.lower().startswith("an ")):
        findings.append(Finding("L2.article", "error",
                                "appearance must start with 'a' or 'an'", 2))
    if not any(_bare(t) in COLOR_TERMS for t in _tokens(l2)):
        findings.append(Finding("L2.color", "warning",
                                "appearance should name a color", 2))

    toks3 = _tokens(annotation.level3.strip())
    head = [_bare(t) for t in toks3[:2]]
    if not any(t in COPULAS or t.endswith("ing") for t in head):
        findings.append(Finding("L3.verb", "warning",
                                "dynamic state should open with a verb phrase", 3))

    if "to the target's" not in annotation.level4.lower():
        findings.append(Finding("L4.anchor", "error",
                                "discriminative cues must contain \"to the target's\"", 4))

    for level in LEVELS:
        text = annotation.level_text(level)
        if _COORDINATE_RE.search(text):
            findings.append(Finding("ALL.coordinates", "error",
                                    "descriptions must not contain coordinates", level))
        if _BOX_LANGUAGE_RE.search(text):
            findings.append(Finding("ALL.box-language", "error",
                                    "descriptions must not mention bounding boxes", level))
    return ValidationReport(findings)


def compose_text(annotation: SoiAnnotation, levels=LEVELS) -> str:
    """Concatenate the requested level texts in ascending order."""
    if not levels:
        raise ValueError("at least one level required")
    parts = []
    for level in sorted(levels):
        text = annotation.level_text(level).strip()
        if not text:
            raise ValueError(f"level {level} missing from annotation")
        parts.append(text)
    return " ".join(parts)


def perturb_noise(
    annotation: SoiAnnotation, keep_ratio: float = 0.5, seed: int = 0
) -> SoiAnnotation:
    """Build a contradictory noise variant of an annotation.

    Per level: keep ceil(keep_ratio * n) tokens at seeded positions (order
    preserved), then swap color/direction tokens for their antonyms. The
    result is a fresh draft tagged "noise".
    """
    import math
    import random

    rng = random.Random(seed)
    out = {}
    for level in LEVELS:
        toks = _tokens(annotation.level_text(level))
        n = len(toks)
        if n:
            n_keep = math.ceil(keep_ratio * n)
            keep = sorted(rng.sample(range(n), n_keep))
            toks = [toks[i] for i in keep]
        swapped = []
        for tok in toks:
            bare = _bare(tok)
            repl = DIRECTION_ANTONYMS.get(bare) or COLOR_SWAPS.get(bare)
            if repl is not None:
                # preserve surrounding punctuation and capitalization
                if bare and tok.lower().find(bare) != -1:
                    idx = tok.lower().find(bare)
                    if tok[idx].isupper():
                        repl = repl.capitalize()
                    tok = tok[:idx] + repl + tok[idx + len(bare):]
            swapped.append(tok)
        out[f"level{level}"] = " ".join(swapped)
    return SoiAnnotation(
        sequence=annotation.sequence,
        frame_index=annotation.frame_index,
        status="draft",
        source="vlm",
        tags=sorted(set(annotation.tags) | {"noise"}),
        **out,
    )


def corpus_stats(annotations: list[SoiAnnotation]) -> dict:
    """Whitespace token counts per level plus a per-sequence SOI-frame histogram."""
    per_level = {f"level{lv}": 0 for lv in LEVELS}
    per_sequence: dict[str, int] = {}
    for a in annotations:
        for lv in LEVELS:
            per_level[f"level{lv}"] += len(_tokens(a.level_text(lv)))
        per_sequence[a.sequence] = per_sequence.get(a.sequence, 0) + 1
    buckets = {"1-5": 0, "6-10": 0, "11-15": 0, ">15": 0}
    for count in per_sequence.values():
        if count <= 5:
            buckets["1-5"] += 1
        elif count <= 10:
            buckets["6-10"] += 1
        elif count <= 15:
            buckets["11-15"] += 1
        else:
            buckets[">15"] += 1
    return {
        "tokens_per_level": per_level,
        "total_tokens": sum(per_level.values()),
        "annotation_count": len(annotations),
        "sequence_count": len(per_sequence),
        "frames_per_sequence_histogram": buckets,
    }


# --- prompt templates ---------------------------------------------------------


ANNOTATION_PROMPT = """Scene Description:
You are observing an image that contains the tracking target, marked clearly by a green bounding box. There are also several visually similar distractor objects in the scene. The target object is clearly marked.

Core Warning & Task:
The green bounding boxes in the image are provided only to help you analyze the scene. Do NOT mention any bounding boxes, coordinates, or technical annotation terms in your description.

Your task is to produce a concise, structured, multi-level semantic description of the tracking target, guided strictly by two principles from cognitive linguistics:
- Concretization (vivid, specific, and easily imaginable details)
- Saliency guiding (highlighting distinctive features that rapidly differentiate the target from distractors)

Required Output Format:
Return your answer strictly in this JSON format:
{
    "level1": "<Location Feature>",
    "level2": "<Appearance Description>",
    "level3": "<Dynamic State Description>",
    "level4": "<Distractor Differentiation>"
}

Detailed Level Instructions:
- Location Feature
  - Start with a preposition and end with a comma
  - Describe semantic location (e.g., "At the center of the roadway,")
  - Never include coordinates or annotation terms

- Appearance Description
  - Use one of these formats:
    1. "a/an [adjective(s)] [object]"
    2. "a/an [adjective(s)] [object] on/in [carrier]"
    3. "a/an [adjective(s)] [object] held/carried by [carrier]"
  - Always include color + object type, plus salient visual features

- Dynamic State Description
  - Output a complete verb phrase that continues the sentence
  - Describe motion/pose/state (e.g., "is running along the sidewalk")

- Distractor Differentiation
  - Start phrases with "to the target's [direction]"
  - Autonomously identify elements that may confuse a tracker
  - Use clear directional and visual distinctions
  - Avoid vague terms like "different" or "unlike"

Output only the JSON object, without any explanation or markdown syntax."""


def build_annotation_prompt(frame_context: str = "") -> str:
    """Structured prompt asking a grounding model for four-level draft text."""
    if frame_context:
        return f"{ANNOTATION_PROMPT}\n\nAdditional frame context: {frame_context}"
    return ANNOTATION_PROMPT


def build_grounding_prompt(style: str, text: str) -> str:
    """Model-specific grounding prompt with the guidance text interpolated."""
    if not text:
        raise ValueError("grounding text must be non-empty")
    if style == "qwen":
        return (
            "Please identify and locate the target object based on the description: "
            f'"{text}". Output its bounding box coordinates using JSON format.'
        )
    if style == "deepseek":
        return f"<image>\n<|ref|>{text}<|/ref|>."
    raise ValueError(f"unknown prompt style {style!r}")


# --- storage -------------------------------------------------------------------


class AnnotationStore:
    """One JSON file per sequence ({seq}.soi.json); atomic, serialized writes."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, sequence: str) -> Path:
        if "/" in sequence or sequence.startswith("."):
            raise ValueError(f"bad sequence name {sequence!r}")
        return self.root / f"{sequence}.soi.json"

    def _load(self, sequence: str) -> dict:
        path = self._path(sequence)
        if not path.exists():
            return {"sequence": sequence, "records": {}}
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def sequences(self) -> list[str]:
        return sorted(p.name[: -len(".soi.json")] for p in self.root.glob("*.soi.json"))

    def get(self, sequence: str, frame_index: int) -> dict | None:
        return self._load(sequence)["records"].get(str(frame_index))

    def put(
        self,
        annotation: SoiAnnotation,
        report: ValidationReport | None = None,
        gt: list[float] | None = None,
    ) -> dict:
        if report is None:
            report = validate(annotation)
        with self._lock:
            doc = self._load(annotation.sequence)
            key = str(annotation.frame_index)
            existing = doc["records"].get(key)
            record = annotation.to_dict()
            if existing:
                record["created"] = existing.get("created", record["created"])
                if gt is None:
                    gt = existing.get("gt")
            record["updated"] = _utcnow()
            record["validation"] = report.to_dict()
            if gt is not None:
                record["gt"] = gt
            doc["records"][key] = record
            self._write(doc)
        return record

    def _write(self, doc: dict) -> None:
        path = self._path(doc["sequence"])
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def query(self, status: str | None = None, page: int = 0, page_size: int = 50) -> dict:
        items = []
        for sequence in self.sequences():
            for key, record in sorted(
                self._load(sequence)["records"].items(), key=lambda kv: int(kv[0])
            ):
                if status is None or record.get("status") == status:
                    items.append(
                        {
                            "sequence": sequence,
                            "frame_index": int(key),
                            "status": record.get("status"),
                            "updated": record.get("updated"),
                        }
                    )
        start = page * page_size
        return {"total": len(items), "items": items[start: start + page_size]}

    def all_annotations(self) -> list[SoiAnnotation]:
        out = []
        for sequence in self.sequences():
            for record in self._load(sequence)["records"].values():
                out.append(SoiAnnotation.from_dict(record))
        return out
