"""Hour-level label vectors and inter-source statistics.

Every comparison here treats annotations as binary presence per hour;
confidence is ignored.  The pairwise "average error" pools hours across the
admissions two sources share: 100 * mismatched hours / hours compared.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annotations import Annotation
from .dataset import Dataset
from .rules import Ruleset
from .dataset import ParameterDictionary, TYPE_TAGS


@dataclass
class LabelVector:
    admission_id: str
    source: str
    bits: np.ndarray  # bool, length n_hours

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelVector):
            return NotImplemented
        return (self.admission_id == other.admission_id
                and self.source == other.source
                and np.array_equal(self.bits, other.bits))


def binarize(
    annotations: list[Annotation],
    source: str,
    label: str,
    admission_id: str,
    n_hours: int,
) -> LabelVector:
    """Union of the source's intervals on one admission as a boolean vector."""
    bits = np.zeros(n_hours, dtype=bool)
    for a in annotations:
        if str(a.source) != source or a.label != label or a.admission_id != admission_id:
            continue
        bits[a.start_hour : a.end_hour + 1] = True
    return LabelVector(admission_id, source, bits)


def majority_aggregate(vectors: list[LabelVector]) -> LabelVector:
    """Bit true iff the mean over sources strictly exceeds 0.5."""
    if not vectors:
        raise ValueError("majority_aggregate needs at least one vector")
    admission_id = vectors[0].admission_id
    n = len(vectors[0].bits)
    for v in vectors:
        if v.admission_id != admission_id:
            raise ValueError("vectors must share one admission")
        if len(v.bits) != n:
            raise ValueError("vectors must share one length")
    stacked = np.stack([v.bits for v in vectors])
    bits = stacked.mean(axis=0) > 0.5
    return LabelVector(admission_id, "majority", bits)


SourceVectors = dict[str, np.ndarray]  # admission_id -> bits


def average_error(a: SourceVectors, b: SourceVectors) -> float | None:
    """Pooled mismatch percentage over the admissions both sources cover,
    or None when they share no admissions."""
    shared = sorted(set(a) & set(b))
    if not shared:
        return None
    mismatched = compared = 0
    for adm in shared:
        va, vb = a[adm], b[adm]
        if len(va) != len(vb):
            raise ValueError(f"length mismatch on admission {adm!r}")
        mismatched += int(np.sum(va != vb))
        compared += len(va)
    return 100.0 * mismatched / compared


@dataclass
class AnnotationMatrixReport:
    sources: list[str]
    cells: np.ndarray  # percentages; NaN where sources share no admissions
    group_of: dict[str, str] = field(default_factory=dict)
    group_means: dict[tuple[str, str], float] = field(default_factory=dict)

    def cell(self, a: str, b: str) -> float | None:
        i, j = self.sources.index(a), self.sources.index(b)
        v = self.cells[i, j]
        return None if np.isnan(v) else float(v)

    def to_doc(self) -> dict:
        return {
            "sources": list(self.sources),
            "cells": [
                [None if np.isnan(v) else round(float(v), 2) for v in row]
                for row in self.cells
            ],
            "group_means": {
                f"{a}|{b}": round(v, 2) for (a, b), v in sorted(self.group_means.items())
            },
        }


def error_matrix(
    vectors_by_source: dict[str, SourceVectors],
    groups: dict[str, str] | None = None,
) -> AnnotationMatrixReport:
    """All pairwise average errors plus per-group means.

    Group means average over defined unordered pairs within and between
    groups (e.g. stage-1 humans, stage-2 rulesets, tree).
    """
    sources = list(vectors_by_source)
    if len(sources) < 2:
        raise ValueError("error_matrix needs at least two sources")
    n = len(sources)
    cells = np.full((n, n), np.nan)
    for i in range(n):
        cells[i, i] = 0.0 if vectors_by_source[sources[i]] else np.nan
        for j in range(i + 1, n):
            err = average_error(vectors_by_source[sources[i]], vectors_by_source[sources[j]])
            if err is not None:
                cells[i, j] = cells[j, i] = err

    group_of = dict(groups or {})
    group_means: dict[tuple[str, str], float] = {}
    if group_of:
        buckets: dict[tuple[str, str], list[float]] = {}
        for i in range(n):
            for j in range(i + 1, n):
                if np.isnan(cells[i, j]):
                    continue
                ga = group_of.get(sources[i])
                gb = group_of.get(sources[j])
                if ga is None or gb is None:
                    continue
                key = (ga, gb) if ga <= gb else (gb, ga)
                buckets.setdefault(key, []).append(float(cells[i, j]))
        group_means = {k: float(np.mean(v)) for k, v in buckets.items()}
    return AnnotationMatrixReport(sources, cells, group_of, group_means)


def parameter_prevalence(annotations: list[Annotation]) -> dict[str, float]:
    """Share of unique participant-parameter pairs citing each parameter
    (human annotations only)."""
    pairs = {
        (a.source.ref, p)
        for a in annotations
        if a.source.kind == "human"
        for p in a.cited_parameters
    }
    if not pairs:
        return {}
    counts: dict[str, int] = {}
    for _, p in pairs:
        counts[p] = counts.get(p, 0) + 1
    total = len(pairs)
    return {p: c / total for p, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))}


def parameter_type_distribution(
    ruleset: Ruleset, dictionary: ParameterDictionary
) -> dict[str, float]:
    """Fraction of rule nodes whose parameter carries each type tag."""
    rules = ruleset.rules
    out = {tag: 0.0 for tag in TYPE_TAGS}
    if not rules:
        return out
    for rule in rules:
        out[dictionary[rule.parameter].type_tag] += 1.0
    return {tag: c / len(rules) for tag, c in out.items()}


# ---------------------------------------------------------------------------
# Corpus summaries
# ---------------------------------------------------------------------------


def _per(a: float, b: float) -> float:
    return round(a / b, 2) if b else 0.0


def ruleset_corpus_stats_from_counts(
    n_rulesets: int, n_rules: int, n_relations: int, n_participants: int
) -> dict:
    return {
        "rulesets": n_rulesets,
        "rules": n_rules,
        "relations": n_relations,
        "participants": n_participants,
        "rulesets_per_participant": _per(n_rulesets, n_participants),
        "rules_per_participant": _per(n_rules, n_participants),
        "relations_per_participant": _per(n_relations, n_participants),
        "rules_per_ruleset": _per(n_rules, n_rulesets),
        "relations_per_ruleset": _per(n_relations, n_rulesets),
    }


def ruleset_corpus_stats(rulesets: list[Ruleset]) -> dict:
    return ruleset_corpus_stats_from_counts(
        n_rulesets=len(rulesets),
        n_rules=sum(len(r.rules) for r in rulesets),
        n_relations=sum(len(r.relations) for r in rulesets),
        n_participants=len({r.owner for r in rulesets if r.owner}),
    )


def annotation_corpus_stats_from_counts(
    n_annotations: int, n_participants: int, n_annotated_admissions: int
) -> dict:
    return {
        "annotations": n_annotations,
        "participants": n_participants,
        "annotated_admissions": n_annotated_admissions,
        "annotations_per_participant": _per(n_annotations, n_participants),
        "annotations_per_admission": _per(n_annotations, n_annotated_admissions),
    }


def annotation_corpus_stats(annotations: list[Annotation]) -> dict:
    humans = [a for a in annotations if a.source.kind == "human"]
    return annotation_corpus_stats_from_counts(
        n_annotations=len(humans),
        n_participants=len({a.source.ref for a in humans}),
        n_annotated_admissions=len({(a.source.ref, a.admission_id) for a in humans}),
    )


def summarize_distribution(samples: list[float]) -> dict:
    """Tukey boxplot statistics; whiskers clamp to the extreme sample inside
    the 1.5 * IQR fences, points beyond are outliers.  Quartiles use linear
    interpolation."""
    if len(samples) == 0:
        raise ValueError("summarize_distribution needs at least one sample")
    arr = np.asarray(samples, dtype=np.float64)
    q1, median, q3 = np.percentile(arr, [25, 50, 75])
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = arr[(arr >= low_fence) & (arr <= high_fence)]
    return {
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": sorted(float(v) for v in arr[(arr < low_fence) | (arr > high_fence)]),
    }


# ---------------------------------------------------------------------------
# Store/dataset helpers
# ---------------------------------------------------------------------------


def build_source_vectors(
    annotations: list[Annotation], dataset: Dataset, label: str
) -> dict[str, SourceVectors]:
    """Per-source label vectors over the admissions each source annotated."""
    hours = {a: int(n) for a, n in zip(dataset.admission_ids, dataset.n_hours)}
    covered: dict[str, set[str]] = {}
    for a in annotations:
        if a.label != label or a.admission_id not in hours:
            continue
        covered.setdefault(str(a.source), set()).add(a.admission_id)
    out: dict[str, SourceVectors] = {}
    for source, admissions in covered.items():
        out[source] = {
            adm: binarize(annotations, source, label, adm, hours[adm]).bits
            for adm in sorted(admissions)
        }
    return out
