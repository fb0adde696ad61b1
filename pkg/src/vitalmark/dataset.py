"""Parameter dictionary and hourly admission data model.

The hourly grid is dense per admission (hours 0..n_hours-1); parameter values
are sparse on that grid.  Internally a :class:`Dataset` is columnar: each
parameter holds sorted global row indices plus a value array, where global row
``offsets[i] + hour`` addresses hour ``hour`` of admission ``i``.  This layout
lets the rule engine evaluate millions of admission-hours with vectorised
numpy while :meth:`Dataset.admission` still hands out per-admission views.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

GROUPS = ("vitals", "respiratory", "equipment")
KINDS = ("numeric", "categorical")
TYPE_TAGS = ("set", "observed", "set_or_observed")

RESERVED_COLUMNS = ("admission_id", "hour")


class DataError(ValueError):
    """Raised for malformed dictionaries, data files, or inconsistent series."""


@dataclass(frozen=True)
class ParameterDef:
    id: str
    name: str
    group: str
    kind: str
    unit: str = ""
    type_tag: str = "observed"
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise DataError("parameter id must be non-empty")
        if self.group not in GROUPS:
            raise DataError(f"parameter {self.id!r}: unknown group {self.group!r}")
        if self.kind not in KINDS:
            raise DataError(f"parameter {self.id!r}: unknown kind {self.kind!r}")
        if self.type_tag not in TYPE_TAGS:
            raise DataError(f"parameter {self.id!r}: unknown type_tag {self.type_tag!r}")
        if self.kind == "categorical":
            if len(self.categories) < 1:
                raise DataError(f"categorical parameter {self.id!r} needs >= 1 category")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"parameter {self.id!r}: duplicate categories")
        elif self.categories:
            raise DataError(f"numeric parameter {self.id!r} cannot declare categories")

    @property
    def is_numeric(self) -> bool:
        return self.kind == "numeric"


class ParameterDictionary:
    """Ordered catalogue of parameters; order defines column order downstream."""

    def __init__(self, parameters: list[ParameterDef] | tuple[ParameterDef, ...]):
        self.parameters: tuple[ParameterDef, ...] = tuple(parameters)
        self.by_id: dict[str, ParameterDef] = {}
        for p in self.parameters:
            if p.id in self.by_id:
                raise DataError(f"duplicate parameter id {p.id!r}")
            if p.id in RESERVED_COLUMNS:
                raise DataError(f"parameter id {p.id!r} is reserved")
            self.by_id[p.id] = p

    def __len__(self) -> int:
        return len(self.parameters)

    def __iter__(self):
        return iter(self.parameters)

    def __contains__(self, param_id: str) -> bool:
        return param_id in self.by_id

    def __getitem__(self, param_id: str) -> ParameterDef:
        try:
            return self.by_id[param_id]
        except KeyError:
            raise DataError(f"unknown parameter {param_id!r}") from None

    def __eq__(self, other) -> bool:
        return isinstance(other, ParameterDictionary) and self.parameters == other.parameters

    def ids(self) -> list[str]:
        return [p.id for p in self.parameters]


@dataclass
class AdmissionSeries:
    """One admission's hourly frames.

    ``values`` maps parameter id to ``(hours, vals)`` where hours is a strictly
    increasing int array and vals is float64 (numeric) or an object array of
    category strings (categorical).
    """

    admission_id: str
    n_hours: int
    values: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def validate(self, dictionary: ParameterDictionary) -> None:
        if not self.admission_id:
            raise DataError("admission_id must be non-empty")
        if self.n_hours < 1:
            raise DataError(f"admission {self.admission_id!r}: n_hours must be >= 1")
        for pid, (hours, vals) in self.values.items():
            param = dictionary[pid]
            if len(hours) != len(vals):
                raise DataError(f"admission {self.admission_id!r}, {pid!r}: length mismatch")
            if len(hours) == 0:
                continue
            if hours[0] < 0 or hours[-1] >= self.n_hours:
                raise DataError(f"admission {self.admission_id!r}, {pid!r}: hour out of range")
            if len(hours) > 1 and not np.all(np.diff(hours) > 0):
                raise DataError(
                    f"admission {self.admission_id!r}, {pid!r}: hours not strictly increasing"
                )
            if param.is_numeric:
                if not np.all(np.isfinite(vals.astype(np.float64))):
                    raise DataError(f"admission {self.admission_id!r}, {pid!r}: non-finite value")
            else:
                bad = set(vals.tolist()) - set(param.categories)
                if bad:
                    raise DataError(
                        f"admission {self.admission_id!r}, {pid!r}: "
                        f"value {sorted(bad)[0]!r} not in category list"
                    )

    def value_at(self, param_id: str, hour: int):
        """Value of a parameter at an hour, or None when missing."""
        entry = self.values.get(param_id)
        if entry is None:
            return None
        hours, vals = entry
        i = int(np.searchsorted(hours, hour))
        if i < len(hours) and hours[i] == hour:
            return vals[i]
        return None

    def __eq__(self, other) -> bool:
        if not isinstance(other, AdmissionSeries):
            return NotImplemented
        if self.admission_id != other.admission_id or self.n_hours != other.n_hours:
            return False
        if set(self.values) != set(other.values):
            return False
        for pid, (h, v) in self.values.items():
            oh, ov = other.values[pid]
            if not (np.array_equal(h, oh) and np.array_equal(v, ov)):
                return False
        return True


@dataclass
class ParamColumn:
    """Sparse global column: sorted row indices plus aligned values.

    Numeric values are float64; categorical values are int16 codes into the
    parameter's category list.
    """

    rows: np.ndarray
    values: np.ndarray


class Dataset:
    """Immutable collection of admissions over one dictionary."""

    def __init__(
        self,
        dictionary: ParameterDictionary,
        admission_ids: list[str],
        n_hours: np.ndarray,
        columns: dict[str, ParamColumn],
    ):
        if len(set(admission_ids)) != len(admission_ids):
            raise DataError("duplicate admission ids")
        self.dictionary = dictionary
        self.admission_ids = list(admission_ids)
        self.n_hours = np.asarray(n_hours, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.n_hours)])
        self.columns = columns
        self._index = {a: i for i, a in enumerate(self.admission_ids)}

    @property
    def total_hours(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_admissions(self) -> int:
        return len(self.admission_ids)

    @classmethod
    def from_admissions(
        cls, dictionary: ParameterDictionary, admissions: list[AdmissionSeries]
    ) -> "Dataset":
        for adm in admissions:
            adm.validate(dictionary)
        admission_ids = [a.admission_id for a in admissions]
        n_hours = np.array([a.n_hours for a in admissions], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(n_hours)])
        per_param_rows: dict[str, list[np.ndarray]] = {}
        per_param_vals: dict[str, list[np.ndarray]] = {}
        for i, adm in enumerate(admissions):
            for pid, (hours, vals) in adm.values.items():
                param = dictionary[pid]
                if param.is_numeric:
                    enc = np.asarray(vals, dtype=np.float64)
                else:
                    lookup = {c: k for k, c in enumerate(param.categories)}
                    enc = np.array([lookup[v] for v in vals], dtype=np.int16)
                per_param_rows.setdefault(pid, []).append(
                    np.asarray(hours, dtype=np.int64) + offsets[i]
                )
                per_param_vals.setdefault(pid, []).append(enc)
        columns = {}
        for pid, chunks in per_param_rows.items():
            columns[pid] = ParamColumn(
                rows=np.concatenate(chunks), values=np.concatenate(per_param_vals[pid])
            )
        return cls(dictionary, admission_ids, n_hours, columns)

    def admission(self, admission_id: str) -> AdmissionSeries:
        """Materialise one admission's sparse series (categoricals as strings)."""
        i = self._index.get(admission_id)
        if i is None:
            raise DataError(f"unknown admission {admission_id!r}")
        lo, hi = self.offsets[i], self.offsets[i + 1]
        values: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for pid, col in self.columns.items():
            a = int(np.searchsorted(col.rows, lo))
            b = int(np.searchsorted(col.rows, hi))
            if a == b:
                continue
            hours = col.rows[a:b] - lo
            vals = col.values[a:b]
            param = self.dictionary[pid]
            if not param.is_numeric:
                cats = np.array(param.categories, dtype=object)
                vals = cats[vals]
            values[pid] = (hours, vals.copy())
        return AdmissionSeries(admission_id, int(self.n_hours[i]), values)

    def admissions(self) -> list[AdmissionSeries]:
        return [self.admission(a) for a in self.admission_ids]

    def dense_column(self, param_id: str) -> np.ndarray:
        """Dense global column over all admission-hours.

        Numeric: float64 with NaN for missing.  Categorical: int16 codes with
        -1 for missing.
        """
        param = self.dictionary[param_id]
        col = self.columns.get(param_id)
        if param.is_numeric:
            out = np.full(self.total_hours, np.nan)
        else:
            out = np.full(self.total_hours, -1, dtype=np.int16)
        if col is not None:
            out[col.rows] = col.values
        return out

    def admission_of_row(self, rows: np.ndarray) -> np.ndarray:
        """Map global row indices to admission indices."""
        return np.searchsorted(self.offsets, rows, side="right") - 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.dictionary != other.dictionary:
            return False
        if self.admission_ids != other.admission_ids:
            return False
        if not np.array_equal(self.n_hours, other.n_hours):
            return False
        if set(self.columns) != set(other.columns):
            return False
        for pid, col in self.columns.items():
            o = other.columns[pid]
            if not (np.array_equal(col.rows, o.rows) and np.array_equal(col.values, o.values)):
                return False
        return True


# ---------------------------------------------------------------------------
# Dictionary files
# ---------------------------------------------------------------------------

DICTIONARY_FIELDS = ["id", "name", "group", "kind", "unit", "type_tag", "categories"]
CATEGORY_SEP = "|"


def load_dictionary(path: str | Path | io.TextIOBase) -> ParameterDictionary:
    if isinstance(path, io.TextIOBase):
        fh = path
        close = False
    else:
        fh = open(path, newline="")
        close = True
    try:
        reader = csv.DictReader(fh)
        missing = set(DICTIONARY_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"dictionary file missing fields: {sorted(missing)}")
        params = []
        for lineno, row in enumerate(reader, start=2):
            cats = tuple(c for c in (row["categories"] or "").split(CATEGORY_SEP) if c)
            try:
                params.append(
                    ParameterDef(
                        id=row["id"],
                        name=row["name"],
                        group=row["group"],
                        kind=row["kind"],
                        unit=row["unit"],
                        type_tag=row["type_tag"],
                        categories=cats,
                    )
                )
            except DataError as e:
                raise DataError(f"{e} (line {lineno})") from None
        return ParameterDictionary(params)
    finally:
        if close:
            fh.close()


def save_dictionary(dictionary: ParameterDictionary, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=DICTIONARY_FIELDS)
        writer.writeheader()
        for p in dictionary:
            writer.writerow(
                {
                    "id": p.id,
                    "name": p.name,
                    "group": p.group,
                    "kind": p.kind,
                    "unit": p.unit,
                    "type_tag": p.type_tag,
                    "categories": CATEGORY_SEP.join(p.categories),
                }
            )


def default_dictionary() -> ParameterDictionary:
    """The 50-parameter clinical dictionary shipped with the package."""
    ref = resources.files("vitalmark").joinpath("data/parameters.csv")
    with ref.open("r", newline="") as fh:
        return load_dictionary(fh)


# ---------------------------------------------------------------------------
# Data files
# ---------------------------------------------------------------------------


def ingest_dataset(dictionary_file: str | Path, data_file: str | Path) -> Dataset:
    """Load and validate a columnar data file against a dictionary file.

    The data file is wide text: header ``admission_id,hour,<parameter ids...>``
    with empty cells for missing values.  Errors report 1-based line numbers.
    """
    dictionary = load_dictionary(dictionary_file)
    return ingest_data(dictionary, data_file)


def ingest_data(dictionary: ParameterDictionary, data_file: str | Path) -> Dataset:
    df = pd.read_csv(
        data_file, dtype=str, keep_default_na=False, float_precision="round_trip"
    )
    if "admission_id" not in df.columns or "hour" not in df.columns:
        raise DataError("data file must have admission_id and hour columns")
    unknown = [c for c in df.columns if c not in RESERVED_COLUMNS and c not in dictionary]
    if unknown:
        raise DataError(f"unknown parameter columns: {unknown}")
    if len(df) == 0:
        return Dataset(dictionary, [], np.zeros(0, dtype=np.int64), {})

    lines = df.index.to_numpy() + 2  # header is line 1

    hours = pd.to_numeric(df["hour"], errors="coerce")
    bad = hours.isna()
    if bad.any():
        raise DataError(f"malformed hour value (line {lines[bad.to_numpy()][0]})")
    hours = hours.to_numpy()
    if not np.allclose(hours, np.round(hours)) or (hours < 0).any():
        first = lines[(hours < 0) | (hours != np.round(hours))][0]
        raise DataError(f"hour must be a non-negative integer (line {first})")
    hours = hours.astype(np.int64)

    adm_raw = df["admission_id"].to_numpy()
    if (adm_raw == "").any():
        raise DataError(f"empty admission_id (line {lines[adm_raw == ''][0]})")
    admission_ids = list(dict.fromkeys(adm_raw.tolist()))  # first-appearance order
    adm_index = {a: i for i, a in enumerate(admission_ids)}
    adm_idx = np.array([adm_index[a] for a in adm_raw], dtype=np.int64)

    n_hours = np.zeros(len(admission_ids), dtype=np.int64)
    np.maximum.at(n_hours, adm_idx, hours + 1)
    offsets = np.concatenate([[0], np.cumsum(n_hours)])
    rows = offsets[adm_idx] + hours

    order = np.argsort(rows, kind="stable")
    dup = np.flatnonzero(np.diff(rows[order]) == 0)
    if len(dup):
        raise DataError(
            f"duplicate (admission, hour) row (line {lines[order][dup[0] + 1]})"
        )

    columns: dict[str, ParamColumn] = {}
    param_cols = [c for c in df.columns if c not in RESERVED_COLUMNS]
    for pid in param_cols:
        raw = df[pid].to_numpy()
        present = raw != ""
        if not present.any():
            continue
        param = dictionary[pid]
        prows = rows[present]
        if param.is_numeric:
            try:
                # numpy's parser round-trips shortest-repr float64 exactly
                vals = raw[present].astype(np.float64)
            except ValueError:
                for line, cell in zip(lines[present], raw[present]):
                    try:
                        float(cell)
                    except ValueError:
                        raise DataError(
                            f"malformed numeric for {pid!r} (line {line})"
                        ) from None
                raise
            if np.isnan(vals).any():
                first = lines[present][np.isnan(vals)][0]
                raise DataError(f"non-finite numeric for {pid!r} (line {first})")
            if not np.all(np.isfinite(vals)):
                first = lines[present][~np.isfinite(vals)][0]
                raise DataError(f"non-finite numeric for {pid!r} (line {first})")
        else:
            lookup = {c: k for k, c in enumerate(param.categories)}
            codes = np.array([lookup.get(v, -1) for v in raw[present]], dtype=np.int16)
            if (codes < 0).any():
                first = lines[present][codes < 0][0]
                val = raw[present][codes < 0][0]
                raise DataError(
                    f"value {val!r} for {pid!r} not in category list (line {first})"
                )
            vals = codes
        o = np.argsort(prows, kind="stable")
        columns[pid] = ParamColumn(rows=prows[o], values=vals[o])

    return Dataset(dictionary, admission_ids, n_hours, columns)


def write_data(dataset: Dataset, path: str | Path) -> None:
    """Serialise a dataset back to the wide columnar text format.

    Numeric cells use shortest round-trip float formatting, so
    ingest(write(ds)) == ds bit-exactly.
    """
    total = dataset.total_hours
    adm_col = np.repeat(np.array(dataset.admission_ids, dtype=object), dataset.n_hours)
    hour_col = np.arange(total) - np.repeat(dataset.offsets[:-1], dataset.n_hours)
    frame = {"admission_id": adm_col, "hour": hour_col}
    for p in dataset.dictionary:
        col = dataset.columns.get(p.id)
        out = np.full(total, "", dtype=object)
        if col is not None:
            if p.is_numeric:
                out[col.rows] = [repr(float(v)) for v in col.values]
            else:
                cats = np.array(p.categories, dtype=object)
                out[col.rows] = cats[col.values]
        frame[p.id] = out
    pd.DataFrame(frame).to_csv(path, index=False)
