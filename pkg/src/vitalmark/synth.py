"""Synthetic dataset generator.

Desk-scale stand-in for a real hourly ICU extract.  Generation is fully
deterministic for a fixed seed (vectorised draws in a fixed order), and embeds
a hidden "weaning phase" regime so ground-truth labels are recoverable:

Each admission has at most one weaning episode (a contiguous hour interval).
During an episode the regime parameters are driven so that exactly these
conditions hold, and outside it the ventilator mode guarantees they do not:

    vent_mode in {CPAP, PSV}
    fio2 <= 40
    peep_set <= 8
    resp_rate_set <= 14
    tidal_volume_set is missing
    not (sbt_deferred in {yes})

``hidden_labels`` recomputes the episode mask from the emitted values with
plain numpy, independent of the rule engine; ``hidden_ruleset_dsl`` states the
same condition in the rule DSL.  The regime parameters (except
tidal_volume_set and sbt_deferred, whose missingness is part of the signal)
are always present regardless of the configured missing rate.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, ParamColumn, ParameterDictionary

REGIME_PARAMS = (
    "vent_mode",
    "fio2",
    "peep_set",
    "resp_rate_set",
    "tidal_volume_set",
    "sbt_deferred",
)

WEANING_MODES = ("CPAP", "PSV")

# (mean, std) for numeric draws; anything absent falls back to (50, 15)
_NUMERIC_RANGES = {
    "heart_rate": (85, 15),
    "abp_sys": (120, 18),
    "abp_dia": (65, 12),
    "abp_mean": (82, 13),
    "nbp_sys": (122, 18),
    "nbp_dia": (66, 12),
    "nbp_mean": (84, 13),
    "cardiac_output": (5.2, 1.1),
    "resp_rate": (18, 5),
    "arterial_o2_pressure": (95, 20),
    "arterial_o2_saturation": (96, 2.5),
    "spo2": (96, 2.5),
    "temperature": (37.0, 0.6),
    "minute_volume": (7.5, 1.8),
    "etco2": (38, 6),
}


def hidden_ruleset_dsl() -> str:
    """The 6-rule condition that defines the hidden weaning episodes."""
    return (
        "vent_mode in {CPAP, PSV} and fio2 <= 40 and peep_set <= 8 "
        "and resp_rate_set <= 14 and tidal_volume_set is missing "
        "and not (sbt_deferred in {yes})"
    )


def generate_synthetic(
    dictionary: ParameterDictionary,
    n_admissions: int,
    hours_per_admission: int,
    seed: int,
    missing_rate: float = 0.6,
) -> Dataset:
    if n_admissions < 1 or hours_per_admission < 1:
        raise ValueError("n_admissions and hours_per_admission must be >= 1")
    if not 0.0 <= missing_rate < 1.0:
        raise ValueError("missing_rate must be in [0, 1)")

    rng = np.random.default_rng(seed)
    n, h = n_admissions, hours_per_admission
    total = n * h
    admission_ids = [f"adm{i:06d}" for i in range(n)]
    n_hours = np.full(n, h, dtype=np.int64)
    hour = np.tile(np.arange(h), n)
    adm = np.repeat(np.arange(n), h)

    # weaning episode mask (only embedded when the regime params exist)
    has_regime = all(p in dictionary for p in REGIME_PARAMS)
    has_episode = rng.random(n) < 0.6
    onset = rng.integers(h // 4, max(h // 4 + 1, 3 * h // 4 + 1), n)
    dur = rng.integers(max(2, h // 8), max(3, h // 2 + 1), n)
    weaning = has_episode[adm] & (hour >= onset[adm]) & (hour < (onset + dur)[adm])
    if not has_regime:
        weaning = np.zeros(total, dtype=bool)

    columns: dict[str, ParamColumn] = {}
    all_rows = np.arange(total, dtype=np.int64)

    def regime_column(pid: str) -> bool:
        """Generate one regime-driven column; returns True when handled."""
        if not has_regime or pid not in REGIME_PARAMS:
            return False
        param = dictionary[pid]
        if pid == "vent_mode":
            cats = list(param.categories)
            wean_codes = np.array([cats.index(m) for m in WEANING_MODES], dtype=np.int16)
            other_codes = np.array(
                [i for i in range(len(cats)) if cats[i] not in WEANING_MODES],
                dtype=np.int16,
            )
            vals = np.where(
                weaning,
                wean_codes[rng.integers(0, len(wean_codes), total)],
                other_codes[rng.integers(0, len(other_codes), total)],
            ).astype(np.int16)
            columns[pid] = ParamColumn(all_rows.copy(), vals)
        elif pid == "fio2":
            # taper towards 25% during weaning, 45-80% otherwise
            taper = 40.0 - 15.0 * rng.random(total)
            vals = np.where(weaning, taper, 45.0 + 35.0 * rng.random(total))
            columns[pid] = ParamColumn(all_rows.copy(), vals)
        elif pid == "peep_set":
            vals = np.where(
                weaning, 4.0 + 4.0 * rng.random(total), 8.5 + 6.0 * rng.random(total)
            )
            columns[pid] = ParamColumn(all_rows.copy(), vals)
        elif pid == "resp_rate_set":
            vals = np.where(
                weaning, 8.0 + 6.0 * rng.random(total), 12.0 + 10.0 * rng.random(total)
            )
            columns[pid] = ParamColumn(all_rows.copy(), vals)
        elif pid == "tidal_volume_set":
            present = ~weaning & (rng.random(total) < 0.9)
            rows = np.flatnonzero(present)
            vals = 350.0 + 250.0 * rng.random(len(rows))
            columns[pid] = ParamColumn(rows, vals)
        elif pid == "sbt_deferred":
            cats = list(param.categories)
            yes, no = cats.index("yes"), cats.index("no")
            present = np.where(
                weaning, rng.random(total) < 0.02, rng.random(total) < 0.05
            )
            is_yes = ~weaning & (rng.random(total) < 0.7)
            rows = np.flatnonzero(present)
            vals = np.where(is_yes[rows], yes, no).astype(np.int16)
            columns[pid] = ParamColumn(rows, vals)
        return True

    for param in dictionary:
        if regime_column(param.id):
            continue
        present = rng.random(total) < (1.0 - missing_rate)
        if not present.any():
            present[0] = True  # every parameter appears at least once
        rows = np.flatnonzero(present)
        if param.is_numeric:
            mu, sigma = _NUMERIC_RANGES.get(param.id, (50.0, 15.0))
            vals = rng.normal(mu, sigma, len(rows))
        else:
            vals = rng.integers(0, len(param.categories), len(rows)).astype(np.int16)
        columns[param.id] = ParamColumn(rows, vals)

    return Dataset(dictionary, admission_ids, n_hours, columns)


def hidden_labels(dataset: Dataset) -> np.ndarray:
    """Ground-truth weaning mask over all admission-hours, recomputed from
    the emitted values with the closed-form condition above."""
    d = dataset.dictionary
    for pid in REGIME_PARAMS:
        if pid not in d:
            raise ValueError("dataset dictionary lacks the weaning regime parameters")
    vm_cats = list(d["vent_mode"].categories)
    vm = dataset.dense_column("vent_mode")
    wean_codes = [vm_cats.index(m) for m in WEANING_MODES]
    cond = np.isin(vm, wean_codes)
    with np.errstate(invalid="ignore"):
        fio2 = dataset.dense_column("fio2")
        cond &= ~np.isnan(fio2) & (fio2 <= 40.0)
        peep = dataset.dense_column("peep_set")
        cond &= ~np.isnan(peep) & (peep <= 8.0)
        rr = dataset.dense_column("resp_rate_set")
        cond &= ~np.isnan(rr) & (rr <= 14.0)
        tv = dataset.dense_column("tidal_volume_set")
        cond &= np.isnan(tv)
    sbt_cats = list(d["sbt_deferred"].categories)
    sbt = dataset.dense_column("sbt_deferred")
    cond &= sbt != sbt_cats.index("yes")
    return cond
