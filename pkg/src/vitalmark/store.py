"""Persistence for users, annotations, rulesets, and assignments.

Embedded single-file store (sqlite).  The file carries a magic header via
sqlite's application_id pragma plus a schema version; opening a file with a
different id or version is refused.  Annotations are immutable with tombstone
deletion.  Writes are serialised through one lock (single writer, many
readers).
"""

from __future__ import annotations

import json
import random
import secrets
import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .annotations import Annotation, Source
from .rules import Ruleset, ruleset_from_doc, ruleset_to_doc

APPLICATION_ID = 0x564D4B31  # "VMK1"
SCHEMA_VERSION = 1

ASSIGNMENT_STATUSES = ("pending", "annotated", "skipped")


class StoreError(Exception):
    pass


class NotFoundError(StoreError):
    pass


class NotOwnerError(StoreError):
    pass


class InsufficientAdmissionsError(StoreError):
    def __init__(self, required: int, available: int):
        super().__init__(
            f"need {required} admissions for this configuration, only {available} available"
        )
        self.required = required
        self.available = available


@dataclass(frozen=True)
class AssignmentConfig:
    quota: int
    shared_count: int
    unique_count: int
    seed: int

    def __post_init__(self):
        if self.quota < 1 or self.shared_count < 0 or self.unique_count < 0:
            raise StoreError("counts must be non-negative, quota >= 1")
        if self.shared_count + self.unique_count != self.quota:
            raise StoreError("shared_count + unique_count must equal quota")


@dataclass
class Assignment:
    user_id: str
    order: list[str]
    shared_flags: list[bool]
    status: dict[str, str]

    def pending(self) -> list[str]:
        return [a for a in self.order if self.status[a] == "pending"]


def _shared_positions(quota: int, shared_count: int) -> set[int]:
    # evenly spaced, shared first; reduces to even positions for equal counts
    return {i * quota // shared_count for i in range(shared_count)}


def schedule_assignments(
    config: AssignmentConfig, admission_ids: list[str], user_ids: list[str]
) -> dict[str, Assignment]:
    """Deterministic shared/unique assignment of admissions to users.

    One shared set identical across users; unique sets pairwise disjoint and
    disjoint from the shared set; each user's order interleaves the two with
    even spacing (alternating when the counts are equal).
    """
    n_users = len(user_ids)
    required = config.shared_count + n_users * config.unique_count
    if len(set(admission_ids)) != len(admission_ids):
        raise StoreError("admission_ids must be unique")
    if required > len(admission_ids):
        raise InsufficientAdmissionsError(required, len(admission_ids))

    rng = random.Random(config.seed)
    pool = list(admission_ids)
    rng.shuffle(pool)
    shared = pool[: config.shared_count]
    rest = pool[config.shared_count :]

    shared_pos = _shared_positions(config.quota, config.shared_count) \
        if config.shared_count else set()
    out: dict[str, Assignment] = {}
    for u, user_id in enumerate(user_ids):
        unique = rest[u * config.unique_count : (u + 1) * config.unique_count]
        order, flags = [], []
        si = ui = 0
        for pos in range(config.quota):
            if pos in shared_pos:
                order.append(shared[si])
                flags.append(True)
                si += 1
            else:
                order.append(unique[ui])
                flags.append(False)
                ui += 1
        out[user_id] = Assignment(
            user_id=user_id,
            order=order,
            shared_flags=flags,
            status={a: "pending" for a in order},
        )
    return out


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS users (
    user_id TEXT PRIMARY KEY,
    name TEXT NOT NULL DEFAULT '',
    token TEXT UNIQUE NOT NULL
);
CREATE TABLE IF NOT EXISTS rulesets (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    owner TEXT NOT NULL,
    name TEXT NOT NULL DEFAULT '',
    doc TEXT NOT NULL,
    is_final INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS annotations (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    admission_id TEXT NOT NULL,
    source_kind TEXT NOT NULL,
    source_ref TEXT NOT NULL,
    label TEXT NOT NULL,
    start_hour INTEGER NOT NULL,
    end_hour INTEGER NOT NULL,
    confidence REAL NOT NULL,
    cited_parameters TEXT NOT NULL DEFAULT '',
    created_at TEXT NOT NULL,
    deleted INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS assignments (
    user_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    admission_id TEXT NOT NULL,
    shared INTEGER NOT NULL,
    status TEXT NOT NULL DEFAULT 'pending',
    PRIMARY KEY (user_id, position)
);
"""


class AnnotationStore:
    """Single-file store; one writer lock, snapshot reads."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        fresh = not Path(path).exists() or Path(path).stat().st_size == 0
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.Lock()
        if fresh:
            with self._lock:
                self._conn.execute(f"PRAGMA application_id = {APPLICATION_ID}")
                self._conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")
                self._conn.executescript(_SCHEMA)
                self._conn.execute(
                    "INSERT OR REPLACE INTO meta (key, value) VALUES ('format', 'vitalmark-store')"
                )
                self._conn.commit()
        else:
            app_id = self._conn.execute("PRAGMA application_id").fetchone()[0]
            version = self._conn.execute("PRAGMA user_version").fetchone()[0]
            if app_id != APPLICATION_ID:
                raise StoreError(f"{self.path}: not a vitalmark store")
            if version != SCHEMA_VERSION:
                raise StoreError(
                    f"{self.path}: unsupported store version {version} (expected {SCHEMA_VERSION})"
                )

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "AnnotationStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- users --------------------------------------------------------------

    def add_user(self, user_id: str, name: str = "") -> str:
        """Create a user and mint their bearer token."""
        token = secrets.token_hex(16)
        with self._lock:
            try:
                self._conn.execute(
                    "INSERT INTO users (user_id, name, token) VALUES (?, ?, ?)",
                    (user_id, name, token),
                )
            except sqlite3.IntegrityError:
                raise StoreError(f"user {user_id!r} already exists") from None
            self._conn.commit()
        return token

    def user_by_token(self, token: str) -> str | None:
        row = self._conn.execute(
            "SELECT user_id FROM users WHERE token = ?", (token,)
        ).fetchone()
        return row["user_id"] if row else None

    def user_token(self, user_id: str) -> str:
        row = self._conn.execute(
            "SELECT token FROM users WHERE user_id = ?", (user_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown user {user_id!r}")
        return row["token"]

    def users(self) -> list[str]:
        return [r["user_id"] for r in self._conn.execute(
            "SELECT user_id FROM users ORDER BY user_id")]

    # -- assignments --------------------------------------------------------

    def assign(self, config: AssignmentConfig, admission_ids: list[str]) -> dict[str, Assignment]:
        user_ids = self.users()
        if not user_ids:
            raise StoreError("no users to assign to")
        assignments = schedule_assignments(config, admission_ids, user_ids)
        with self._lock:
            self._conn.execute("DELETE FROM assignments")
            for a in assignments.values():
                for pos, (adm, shared) in enumerate(zip(a.order, a.shared_flags)):
                    self._conn.execute(
                        "INSERT INTO assignments (user_id, position, admission_id, shared, status) "
                        "VALUES (?, ?, ?, ?, 'pending')",
                        (a.user_id, pos, adm, int(shared)),
                    )
            self._conn.commit()
        return assignments

    def assignment(self, user_id: str) -> Assignment | None:
        rows = self._conn.execute(
            "SELECT admission_id, shared, status FROM assignments "
            "WHERE user_id = ? ORDER BY position",
            (user_id,),
        ).fetchall()
        if not rows:
            return None
        return Assignment(
            user_id=user_id,
            order=[r["admission_id"] for r in rows],
            shared_flags=[bool(r["shared"]) for r in rows],
            status={r["admission_id"]: r["status"] for r in rows},
        )

    def next_unannotated(self, user_id: str) -> str | None:
        if self._conn.execute(
            "SELECT 1 FROM users WHERE user_id = ?", (user_id,)
        ).fetchone() is None:
            raise NotFoundError(f"unknown user {user_id!r}")
        row = self._conn.execute(
            "SELECT admission_id FROM assignments WHERE user_id = ? AND status = 'pending' "
            "ORDER BY position LIMIT 1",
            (user_id,),
        ).fetchone()
        return row["admission_id"] if row else None

    def set_assignment_status(self, user_id: str, admission_id: str, status: str) -> None:
        if status not in ASSIGNMENT_STATUSES:
            raise StoreError(f"unknown status {status!r}")
        with self._lock:
            cur = self._conn.execute(
                "UPDATE assignments SET status = ? WHERE user_id = ? AND admission_id = ?",
                (status, user_id, admission_id),
            )
            self._conn.commit()
        if cur.rowcount == 0:
            raise NotFoundError(f"admission {admission_id!r} not assigned to {user_id!r}")

    # -- annotations --------------------------------------------------------

    def create_annotation(self, draft: Annotation, n_hours: int | None = None) -> Annotation:
        """Persist a draft with a fresh id; if the source is a human with this
        admission assigned, mark it annotated."""
        if n_hours is not None and draft.end_hour >= n_hours:
            raise StoreError(
                f"interval [{draft.start_hour}, {draft.end_hour}] outside admission "
                f"bounds (n_hours={n_hours})"
            )
        created_at = draft.created_at or _now()
        with self._lock:
            cur = self._conn.execute(
                "INSERT INTO annotations (admission_id, source_kind, source_ref, label, "
                "start_hour, end_hour, confidence, cited_parameters, created_at) "
                "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    draft.admission_id, draft.source.kind, draft.source.ref, draft.label,
                    draft.start_hour, draft.end_hour, draft.confidence,
                    "|".join(draft.cited_parameters), created_at,
                ),
            )
            if draft.source.kind == "human":
                self._conn.execute(
                    "UPDATE assignments SET status = 'annotated' "
                    "WHERE user_id = ? AND admission_id = ? AND status = 'pending'",
                    (draft.source.ref, draft.admission_id),
                )
            self._conn.commit()
        return Annotation(
            id=cur.lastrowid,
            admission_id=draft.admission_id,
            source=draft.source,
            label=draft.label,
            start_hour=draft.start_hour,
            end_hour=draft.end_hour,
            confidence=draft.confidence,
            cited_parameters=draft.cited_parameters,
            created_at=created_at,
        )

    def delete_annotation(self, annotation_id: int) -> None:
        with self._lock:
            cur = self._conn.execute(
                "UPDATE annotations SET deleted = 1 WHERE id = ? AND deleted = 0",
                (annotation_id,),
            )
            self._conn.commit()
        if cur.rowcount == 0:
            raise NotFoundError(f"unknown annotation {annotation_id}")

    def annotations(
        self,
        source: Source | None = None,
        admission_id: str | None = None,
        label: str | None = None,
        include_deleted: bool = False,
    ) -> list[Annotation]:
        query = "SELECT * FROM annotations WHERE 1=1"
        args: list = []
        if not include_deleted:
            query += " AND deleted = 0"
        if source is not None:
            query += " AND source_kind = ? AND source_ref = ?"
            args += [source.kind, source.ref]
        if admission_id is not None:
            query += " AND admission_id = ?"
            args.append(admission_id)
        if label is not None:
            query += " AND label = ?"
            args.append(label)
        query += " ORDER BY id"
        return [self._row_to_annotation(r) for r in self._conn.execute(query, args)]

    @staticmethod
    def _row_to_annotation(r: sqlite3.Row) -> Annotation:
        return Annotation(
            id=r["id"],
            admission_id=r["admission_id"],
            source=Source(r["source_kind"], r["source_ref"]),
            label=r["label"],
            start_hour=r["start_hour"],
            end_hour=r["end_hour"],
            confidence=r["confidence"],
            cited_parameters=tuple(p for p in r["cited_parameters"].split("|") if p),
            created_at=r["created_at"],
        )

    def add_annotations(self, annotations: list[Annotation]) -> list[Annotation]:
        return [self.create_annotation(a) for a in annotations]

    # -- rulesets -----------------------------------------------------------

    def save_ruleset(self, ruleset: Ruleset, owner: str, name: str = "") -> Ruleset:
        created_at = _now()
        doc = ruleset_to_doc(ruleset.with_meta(owner=owner, name=name, id=None,
                                              is_final=False, created_at=created_at))
        with self._lock:
            cur = self._conn.execute(
                "INSERT INTO rulesets (owner, name, doc, created_at) VALUES (?, ?, ?, ?)",
                (owner, name, json.dumps(doc), created_at),
            )
            self._conn.commit()
        return ruleset.with_meta(id=cur.lastrowid, owner=owner, name=name,
                                 is_final=False, created_at=created_at)

    def ruleset(self, ruleset_id: int) -> Ruleset:
        row = self._conn.execute(
            "SELECT * FROM rulesets WHERE id = ?", (ruleset_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown ruleset {ruleset_id}")
        return self._row_to_ruleset(row)

    @staticmethod
    def _row_to_ruleset(row: sqlite3.Row) -> Ruleset:
        rs = ruleset_from_doc(json.loads(row["doc"]))
        return rs.with_meta(id=row["id"], owner=row["owner"], name=row["name"],
                            is_final=bool(row["is_final"]), created_at=row["created_at"])

    def rulesets(self, owner: str | None = None) -> list[Ruleset]:
        if owner is None:
            rows = self._conn.execute("SELECT * FROM rulesets ORDER BY id")
        else:
            rows = self._conn.execute(
                "SELECT * FROM rulesets WHERE owner = ? ORDER BY id", (owner,)
            )
        return [self._row_to_ruleset(r) for r in rows]

    def set_final_ruleset(self, user_id: str, ruleset_id: int) -> None:
        """Mark one ruleset final for its owner, clearing any previous flag."""
        row = self._conn.execute(
            "SELECT owner FROM rulesets WHERE id = ?", (ruleset_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown ruleset {ruleset_id}")
        if row["owner"] != user_id:
            raise NotOwnerError(f"ruleset {ruleset_id} is not owned by {user_id!r}")
        with self._lock:
            self._conn.execute(
                "UPDATE rulesets SET is_final = 0 WHERE owner = ?", (user_id,)
            )
            self._conn.execute(
                "UPDATE rulesets SET is_final = 1 WHERE id = ?", (ruleset_id,)
            )
            self._conn.commit()

    def final_ruleset(self, user_id: str) -> Ruleset | None:
        row = self._conn.execute(
            "SELECT * FROM rulesets WHERE owner = ? AND is_final = 1", (user_id,)
        ).fetchone()
        return self._row_to_ruleset(row) if row else None
