"""Interval annotations and their delimited-text exchange format."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

SOURCE_KINDS = ("human", "ruleset", "tree")

EXPORT_FIELDS = [
    "annotation_id", "admission_id", "source", "label",
    "start_hour", "end_hour", "confidence", "cited_parameters",
]


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class Source:
    """Attribution of an annotation: a human user, a ruleset, or a tree model."""

    kind: str
    ref: str

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise AnnotationError(f"unknown source kind {self.kind!r}")
        if not self.ref:
            raise AnnotationError("source ref must be non-empty")

    def __str__(self) -> str:
        return f"{self.kind}:{self.ref}"

    @classmethod
    def parse(cls, text: str) -> "Source":
        kind, sep, ref = text.partition(":")
        if not sep:
            raise AnnotationError(f"malformed source {text!r}")
        return cls(kind, ref)


@dataclass(frozen=True)
class Annotation:
    """A labelled inclusive hour-interval on one admission."""

    admission_id: str
    source: Source
    label: str
    start_hour: int
    end_hour: int
    confidence: float = 0.5
    cited_parameters: tuple[str, ...] = ()
    id: int | None = None
    created_at: str = ""

    def __post_init__(self):
        if self.start_hour < 0 or self.end_hour < self.start_hour:
            raise AnnotationError(
                f"invalid interval [{self.start_hour}, {self.end_hour}]"
            )
        if not 0.0 < self.confidence < 1.0:
            raise AnnotationError(
                f"confidence must be in the open interval (0, 1), got {self.confidence}"
            )

    @property
    def n_hours(self) -> int:
        return self.end_hour - self.start_hour + 1


def export_annotations(annotations: list[Annotation], path: str | Path | io.TextIOBase) -> None:
    fh = path if isinstance(path, io.TextIOBase) else open(path, "w", newline="")
    try:
        writer = csv.writer(fh)
        writer.writerow(EXPORT_FIELDS)
        for a in annotations:
            writer.writerow([
                a.id if a.id is not None else "",
                a.admission_id,
                str(a.source),
                a.label,
                a.start_hour,
                a.end_hour,
                repr(a.confidence),
                "|".join(a.cited_parameters),
            ])
    finally:
        if fh is not path:
            fh.close()


def import_annotations(path: str | Path | io.TextIOBase) -> list[Annotation]:
    fh = path if isinstance(path, io.TextIOBase) else open(path, newline="")
    try:
        reader = csv.DictReader(fh)
        missing = set(EXPORT_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise AnnotationError(f"annotation file missing fields: {sorted(missing)}")
        out = []
        for row in reader:
            out.append(
                Annotation(
                    id=int(row["annotation_id"]) if row["annotation_id"] else None,
                    admission_id=row["admission_id"],
                    source=Source.parse(row["source"]),
                    label=row["label"],
                    start_hour=int(row["start_hour"]),
                    end_hour=int(row["end_hour"]),
                    confidence=float(row["confidence"]),
                    cited_parameters=tuple(
                        p for p in row["cited_parameters"].split("|") if p
                    ),
                )
            )
        return out
    finally:
        if fh is not path:
            fh.close()
