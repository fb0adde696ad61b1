"""Ruleset evaluation over every admission-hour.

Two interchangeable evaluators:

* :func:`evaluate_ruleset` — batch evaluator: builds dense per-parameter
  columns over the whole dataset and computes each node as one vectorised
  boolean array, then extracts maximal positive runs per admission.
* :func:`evaluate_ruleset_naive` — deliberately plain per-hour tree walk,
  kept as the equivalence oracle.

Missing-value policy: a comparison or category test on a missing value is
false; ``is missing`` is true and ``is present`` false.  An optional
last-observation-carried-forward mode with a bounded horizon fills missing
values before evaluation (default off); both evaluators implement it.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .annotations import Annotation, Source
from .dataset import AdmissionSeries, Dataset
from .rules import Relation, Rule, Ruleset, RulesetError


@dataclass
class EvaluationReport:
    ruleset_id: str
    hours_evaluated: int
    hours_positive: int
    admissions_with_annotation: int
    annotation_count: int
    per_admission_interval_counts: dict[str, int] = field(default_factory=dict)
    wall_time_s: float = 0.0

    def to_doc(self, include_timing: bool = True) -> dict:
        doc = {
            "ruleset_id": self.ruleset_id,
            "hours_evaluated": self.hours_evaluated,
            "hours_positive": self.hours_positive,
            "admissions_with_annotation": self.admissions_with_annotation,
            "annotation_count": self.annotation_count,
            "per_admission_interval_counts": dict(
                sorted(self.per_admission_interval_counts.items())
            ),
        }
        if include_timing:
            doc["wall_time_s"] = self.wall_time_s
        return doc


def _locf_fill(values: np.ndarray, missing_mask: np.ndarray, offsets: np.ndarray,
               n_hours: np.ndarray, horizon: int) -> np.ndarray:
    """Carry the last observation forward up to `horizon` hours, never across
    admission boundaries."""
    total = len(values)
    idx = np.arange(total)
    last = np.where(missing_mask, -1, idx)
    last = np.maximum.accumulate(last)
    floors = np.repeat(offsets[:-1], n_hours)
    last = np.where(last >= floors, last, -1)
    fillable = (last >= 0) & (idx - last <= horizon)
    out = values.copy()
    out[fillable] = values[last[fillable]]
    return out


class _BatchEvaluator:
    def __init__(self, dataset: Dataset, ruleset: Ruleset, locf_horizon: int | None):
        self.dataset = dataset
        self.ruleset = ruleset
        self.locf_horizon = locf_horizon
        self._columns: dict[str, np.ndarray] = {}

    def column(self, param_id: str) -> np.ndarray:
        col = self._columns.get(param_id)
        if col is None:
            col = self.dataset.dense_column(param_id)
            if self.locf_horizon is not None:
                param = self.dataset.dictionary[param_id]
                missing = np.isnan(col) if param.is_numeric else col == -1
                col = _locf_fill(col, missing, self.dataset.offsets,
                                 self.dataset.n_hours, self.locf_horizon)
            self._columns[param_id] = col
        return col

    def bits(self, lo: int, hi: int) -> np.ndarray:
        """Root truth values for global rows [lo, hi)."""
        memo: dict[str, np.ndarray] = {}

        def eval_node(nid: str) -> np.ndarray:
            cached = memo.get(nid)
            if cached is not None:
                return cached
            node = self.ruleset.nodes[nid]
            if isinstance(node, Rule):
                out = self.eval_rule(node, lo, hi)
            elif node.op == "not":
                out = ~eval_node(node.children[0])
            else:
                out = eval_node(node.children[0]).copy()
                if node.op == "and":
                    for c in node.children[1:]:
                        out &= eval_node(c)
                else:
                    for c in node.children[1:]:
                        out |= eval_node(c)
            memo[nid] = out
            return out

        return eval_node(self.ruleset.root)

    def eval_rule(self, rule: Rule, lo: int, hi: int) -> np.ndarray:
        param = self.dataset.dictionary[rule.parameter]
        col = self.column(rule.parameter)[lo:hi]
        if param.is_numeric:
            missing = np.isnan(col)
            if rule.op == "is_missing":
                return missing
            if rule.op == "is_present":
                return ~missing
            with np.errstate(invalid="ignore"):
                if rule.op == "lt":
                    return ~missing & (col < rule.operand)
                if rule.op == "le":
                    return ~missing & (col <= rule.operand)
                if rule.op == "gt":
                    return ~missing & (col > rule.operand)
                if rule.op == "ge":
                    return ~missing & (col >= rule.operand)
            raise RulesetError(f"operator {rule.op!r} on numeric parameter")
        missing = col == -1
        if rule.op == "is_missing":
            return missing
        if rule.op == "is_present":
            return ~missing
        cats = list(param.categories)
        codes = np.array([cats.index(c) for c in rule.operand], dtype=np.int16)
        member = np.isin(col, codes)
        if rule.op in ("eq", "in"):
            return ~missing & member
        if rule.op in ("ne", "not_in"):
            return ~missing & ~member
        raise RulesetError(f"operator {rule.op!r} on categorical parameter")


def _intervals_from_bits(dataset: Dataset, bits: np.ndarray):
    """Maximal positive runs as (admission_index, start_hour, end_hour)."""
    offsets = dataset.offsets
    prev = np.empty_like(bits)
    prev[1:] = bits[:-1]
    prev[0] = False
    prev[offsets[:-1]] = False
    nxt = np.empty_like(bits)
    nxt[:-1] = bits[1:]
    nxt[-1] = False
    if len(offsets) > 1:
        nxt[offsets[1:] - 1] = False
    start_rows = np.flatnonzero(bits & ~prev)
    end_rows = np.flatnonzero(bits & ~nxt)
    adm = dataset.admission_of_row(start_rows)
    starts = start_rows - offsets[adm]
    ends = end_rows - offsets[adm]
    return adm, starts, ends


def _build_result(dataset: Dataset, ruleset: Ruleset, bits: np.ndarray,
                  label: str, started: float):
    adm, starts, ends = _intervals_from_bits(dataset, bits)
    source = Source("ruleset", str(ruleset.id) if ruleset.id is not None else "unsaved")
    annotations = [
        Annotation(
            admission_id=dataset.admission_ids[a],
            source=source,
            label=label,
            start_hour=int(s),
            end_hour=int(e),
        )
        for a, s, e in zip(adm.tolist(), starts.tolist(), ends.tolist())
    ]
    counts_arr = np.bincount(adm, minlength=dataset.n_admissions)
    counts = {
        dataset.admission_ids[i]: int(c)
        for i, c in enumerate(counts_arr.tolist())
        if c > 0
    }
    report = EvaluationReport(
        ruleset_id=str(ruleset.id) if ruleset.id is not None else "unsaved",
        hours_evaluated=dataset.total_hours,
        hours_positive=int(bits.sum()),
        admissions_with_annotation=len(counts),
        annotation_count=len(annotations),
        per_admission_interval_counts=counts,
        wall_time_s=time.perf_counter() - started,
    )
    return annotations, report


def evaluate_ruleset(
    ruleset: Ruleset,
    dataset: Dataset,
    label: str = "weaning",
    workers: int = 1,
    locf_horizon: int | None = None,
) -> tuple[list[Annotation], EvaluationReport]:
    """Evaluate every admission-hour and emit one annotation per maximal
    contiguous positive run.  Results are identical for any worker count."""
    started = time.perf_counter()
    ruleset.validate_against(dataset.dictionary)
    ev = _BatchEvaluator(dataset, ruleset, locf_horizon)
    total = dataset.total_hours
    if total == 0:
        return _build_result(dataset, ruleset, np.zeros(0, dtype=bool), label, started)
    # columns (and LOCF fill) are built once, shared by all workers
    for rule in ruleset.rules:
        ev.column(rule.parameter)
    workers = max(1, min(workers, total))
    if workers == 1:
        bits = ev.bits(0, total)
    else:
        bounds = np.linspace(0, total, workers + 1).astype(np.int64)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda i: ev.bits(bounds[i], bounds[i + 1]),
                                   range(workers)))
        bits = np.concatenate(chunks)
    return _build_result(dataset, ruleset, bits, label, started)


# ---------------------------------------------------------------------------
# Naive reference interpreter (oracle)
# ---------------------------------------------------------------------------


def _naive_value(admission: AdmissionSeries, param_id: str, hour: int,
                 locf_horizon: int | None):
    value = admission.value_at(param_id, hour)
    if value is not None or locf_horizon is None:
        return value
    for back in range(1, locf_horizon + 1):
        if hour - back < 0:
            break
        value = admission.value_at(param_id, hour - back)
        if value is not None:
            return value
    return None


def evaluate_hour(
    ruleset: Ruleset,
    admission: AdmissionSeries,
    hour: int,
    locf_horizon: int | None = None,
) -> bool:
    """Recursive single-hour evaluation (total: never raises on data)."""
    if hour < 0 or hour >= admission.n_hours:
        raise ValueError(f"hour {hour} outside [0, {admission.n_hours})")
    memo: dict[str, bool] = {}

    def eval_node(nid: str) -> bool:
        if nid in memo:
            return memo[nid]
        node = ruleset.nodes[nid]
        if isinstance(node, Relation):
            if node.op == "not":
                out = not eval_node(node.children[0])
            elif node.op == "and":
                out = all(eval_node(c) for c in node.children)
            else:
                out = any(eval_node(c) for c in node.children)
        else:
            value = _naive_value(admission, node.parameter, hour, locf_horizon)
            if node.op == "is_missing":
                out = value is None
            elif node.op == "is_present":
                out = value is not None
            elif value is None:
                out = False
            elif node.op == "lt":
                out = value < node.operand
            elif node.op == "le":
                out = value <= node.operand
            elif node.op == "gt":
                out = value > node.operand
            elif node.op == "ge":
                out = value >= node.operand
            elif node.op in ("eq", "in"):
                out = value in node.operand
            else:  # ne, not_in
                out = value not in node.operand
        memo[nid] = out
        return out

    return eval_node(ruleset.root)


def evaluate_ruleset_naive(
    ruleset: Ruleset,
    dataset: Dataset,
    label: str = "weaning",
    locf_horizon: int | None = None,
) -> tuple[list[Annotation], EvaluationReport]:
    """Per-hour tree-walking evaluator; exists as the equivalence oracle."""
    started = time.perf_counter()
    ruleset.validate_against(dataset.dictionary)
    bits = np.zeros(dataset.total_hours, dtype=bool)
    for i, admission_id in enumerate(dataset.admission_ids):
        admission = dataset.admission(admission_id)
        lo = dataset.offsets[i]
        for hour in range(admission.n_hours):
            bits[lo + hour] = evaluate_hour(
                ruleset, admission, hour, locf_horizon=locf_horizon
            )
    return _build_result(dataset, ruleset, bits, label, started)
