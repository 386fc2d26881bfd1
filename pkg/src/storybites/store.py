"""Single-file SQLite store plus content-addressed asset blobs.

One writer at a time (serialized through an RLock), any number of readers.
Sessions are event-sourced: the ``session_transitions`` log is append-only
and the ``sessions`` row is just the current snapshot. Every write commits
its own transaction, so reopening after an interruption between operations
never loses acknowledged writes.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import tempfile
import threading
import time
import zipfile
from pathlib import Path
from pydantic import BaseModel

from .domain import (
    ChildAvatar,
    Episode,
    EpisodeKind,
    FeedbackMessage,
    PostMealRecord,
    RecapAndGoal,
    StoryFramework,
    canonical_parse,
    canonical_serialize,
    check_invariants,
)
from .errors import (
    ChildNotFound,
    NotFound,
    ReferentialViolation,
    SessionAlreadyActive,
    StorageError,
)
from .pipeline import GenerationJob, JobStage, JobStatus
from .sessions import InteractionEvent, SessionEvent, SessionState, TfoSession
from .validation import ValidationReport

_SCHEMA = """
CREATE TABLE IF NOT EXISTS avatars (
    id TEXT PRIMARY KEY, body TEXT NOT NULL, created_at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS frameworks (
    id TEXT PRIMARY KEY, owner_child_id TEXT, story_mode TEXT NOT NULL,
    recurring_phrase TEXT NOT NULL, body TEXT NOT NULL, created_at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS episodes (
    id TEXT PRIMARY KEY, child_id TEXT, framework_id TEXT NOT NULL,
    kind TEXT NOT NULL, target_food TEXT NOT NULL, body TEXT NOT NULL,
    approved INTEGER NOT NULL DEFAULT 0, approved_seq INTEGER,
    created_at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS recaps (
    episode_id TEXT PRIMARY KEY, body TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS sessions (
    id TEXT PRIMARY KEY, child_id TEXT NOT NULL, body TEXT NOT NULL,
    state TEXT NOT NULL, closed INTEGER NOT NULL DEFAULT 0,
    created_at REAL NOT NULL, updated_at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS session_transitions (
    seq INTEGER PRIMARY KEY AUTOINCREMENT, session_id TEXT NOT NULL,
    event TEXT NOT NULL, from_state TEXT NOT NULL, to_state TEXT NOT NULL,
    attachments TEXT NOT NULL, at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS records (
    id TEXT PRIMARY KEY, child_id TEXT, session_id TEXT,
    body TEXT NOT NULL, created_at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS feedback (
    record_id TEXT PRIMARY KEY, child_id TEXT, session_id TEXT,
    body TEXT NOT NULL, seq INTEGER NOT NULL, delivered_at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS interaction_events (
    seq INTEGER PRIMARY KEY AUTOINCREMENT, event_id TEXT UNIQUE NOT NULL,
    session_id TEXT NOT NULL, body TEXT NOT NULL, transcription TEXT,
    at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS jobs (
    job_id TEXT PRIMARY KEY, session_id TEXT, stage TEXT NOT NULL,
    status TEXT NOT NULL, attempts INTEGER NOT NULL,
    last_report TEXT, result TEXT, error TEXT, updated_at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS page_assets (
    episode_id TEXT NOT NULL, kind TEXT NOT NULL, page_id TEXT NOT NULL,
    asset_id TEXT NOT NULL, PRIMARY KEY (episode_id, kind, page_id));
CREATE TABLE IF NOT EXISTS assets (
    hash TEXT PRIMARY KEY, media_type TEXT NOT NULL, size INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS idempotency (
    key TEXT PRIMARY KEY, method TEXT NOT NULL, path TEXT NOT NULL,
    status INTEGER NOT NULL, body BLOB NOT NULL, at REAL NOT NULL);
"""


class Store:
    """Embedded storage for one family deployment."""

    def __init__(self, path: str | Path = ":memory:",
                 asset_dir: str | Path | None = None):
        self.path = str(path)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)
        if asset_dir is None:
            if self.path == ":memory:":
                self._tmp_assets = tempfile.TemporaryDirectory(prefix="sb-assets-")
                asset_dir = self._tmp_assets.name
            else:
                asset_dir = str(Path(self.path).with_suffix("")) + "_assets"
        self.asset_dir = Path(asset_dir)
        self.asset_dir.mkdir(parents=True, exist_ok=True)

    def close(self) -> None:
        self._conn.close()

    # -- generic put/get ---------------------------------------------------------

    def put(self, value: BaseModel, *, child_id: str | None = None,
            session_id: str | None = None, owner: str | None = None) -> str:
        """Store a domain value; idempotent for identical content under one id."""
        check_invariants(value)
        if isinstance(value, ChildAvatar):
            return self._put_simple("avatars", value.avatar_id, value)
        if isinstance(value, StoryFramework):
            return self._put_framework(value, owner or child_id)
        if isinstance(value, Episode):
            return self._put_episode(value, child_id)
        if isinstance(value, PostMealRecord):
            return self._put_record(value, child_id, session_id)
        if isinstance(value, FeedbackMessage):
            return self._put_feedback(value, child_id, session_id)
        if isinstance(value, TfoSession):
            return self.insert_session(value)
        raise StorageError(f"cannot store values of type {type(value).__name__}")

    def _existing_body(self, table: str, key_col: str, key: str) -> str | None:
        row = self._conn.execute(
            f"SELECT body FROM {table} WHERE {key_col} = ?", (key,)).fetchone()
        return row["body"] if row else None

    def _idempotent_hit(self, table: str, key_col: str, key: str,
                        body: str) -> bool:
        existing = self._existing_body(table, key_col, key)
        if existing is None:
            return False
        if existing != body:
            raise StorageError(
                f"{table} id {key!r} already stored with different content")
        return True

    def _put_simple(self, table: str, key: str, value: BaseModel) -> str:
        body = canonical_serialize(value).decode("utf-8")
        with self._lock, self._conn:
            if self._idempotent_hit(table, "id", key, body):
                return key
            self._conn.execute(
                f"INSERT INTO {table} (id, body, created_at) VALUES (?, ?, ?)",
                (key, body, time.time()))
        return key

    def _put_framework(self, value: StoryFramework, owner: str | None) -> str:
        body = canonical_serialize(value).decode("utf-8")
        phrase = value.recurring_elements.recurring_phrase
        with self._lock, self._conn:
            if self._idempotent_hit("frameworks", "id", value.framework_id, body):
                return value.framework_id
            clash = self._conn.execute(
                "SELECT id FROM frameworks WHERE story_mode = ? AND "
                "recurring_phrase = ? AND (owner_child_id IS ? OR owner_child_id = ?)",
                (value.story_mode.value, phrase, owner, owner)).fetchone()
            if clash:
                raise ReferentialViolation(
                    f"recurring_phrase {phrase!r} already used for mode "
                    f"{value.story_mode.value} by framework {clash['id']}")
            self._conn.execute(
                "INSERT INTO frameworks (id, owner_child_id, story_mode, "
                "recurring_phrase, body, created_at) VALUES (?, ?, ?, ?, ?, ?)",
                (value.framework_id, owner, value.story_mode.value, phrase,
                 body, time.time()))
        return value.framework_id

    def _put_episode(self, value: Episode, child_id: str | None) -> str:
        body = canonical_serialize(value).decode("utf-8")
        with self._lock, self._conn:
            if self._idempotent_hit("episodes", "id", value.episode_id, body):
                return value.episode_id
            if self._existing_body("frameworks", "id", value.framework_id) is None:
                raise ReferentialViolation(
                    f"episode references missing framework {value.framework_id!r}")
            self._conn.execute(
                "INSERT INTO episodes (id, child_id, framework_id, kind, "
                "target_food, body, created_at) VALUES (?, ?, ?, ?, ?, ?, ?)",
                (value.episode_id, child_id, value.framework_id,
                 value.kind.value, value.target_food, body, time.time()))
        return value.episode_id

    def _put_record(self, value: PostMealRecord, child_id: str | None,
                    session_id: str | None) -> str:
        body = canonical_serialize(value).decode("utf-8")
        with self._lock, self._conn:
            if self._idempotent_hit("records", "id", value.record_id, body):
                return value.record_id
            self._conn.execute(
                "INSERT INTO records (id, child_id, session_id, body, created_at)"
                " VALUES (?, ?, ?, ?, ?)",
                (value.record_id, child_id, session_id, body, time.time()))
        return value.record_id

    def _put_feedback(self, value: FeedbackMessage, child_id: str | None,
                      session_id: str | None) -> str:
        body = canonical_serialize(value).decode("utf-8")
        with self._lock, self._conn:
            if self._idempotent_hit("feedback", "record_id", value.record_id, body):
                return value.record_id
            if self._existing_body("records", "id", value.record_id) is None:
                raise ReferentialViolation(
                    f"feedback references missing record {value.record_id!r}")
            seq = self._conn.execute(
                "SELECT COALESCE(MAX(seq), 0) + 1 AS n FROM feedback").fetchone()["n"]
            self._conn.execute(
                "INSERT INTO feedback (record_id, child_id, session_id, body, "
                "seq, delivered_at) VALUES (?, ?, ?, ?, ?, ?)",
                (value.record_id, child_id, session_id, body, seq, time.time()))
        return value.record_id

    def _load(self, table: str, key_col: str, key: str, tag: str,
              missing: type[Exception] = NotFound) -> BaseModel:
        body = self._existing_body(table, key_col, key)
        if body is None:
            raise missing(f"no {tag} stored under id {key!r}")
        return canonical_parse(body, tag)

    def get_avatar(self, avatar_id: str) -> ChildAvatar:
        return self._load("avatars", "id", avatar_id, "avatar", ChildNotFound)

    def get_framework(self, framework_id: str) -> StoryFramework:
        return self._load("frameworks", "id", framework_id, "framework")

    def get_episode(self, episode_id: str) -> Episode:
        return self._load("episodes", "id", episode_id, "episode")

    def get_record(self, record_id: str) -> PostMealRecord:
        return self._load("records", "id", record_id, "record")

    def get_feedback(self, record_id: str) -> FeedbackMessage:
        return self._load("feedback", "record_id", record_id, "feedback")

    def get_feedback_for_session(self, session_id: str) -> FeedbackMessage | None:
        row = self._conn.execute(
            "SELECT body FROM feedback WHERE session_id = ?", (session_id,)
        ).fetchone()
        return canonical_parse(row["body"], "feedback") if row else None

    def latest_framework(self, child_id: str) -> StoryFramework:
        row = self._conn.execute(
            "SELECT body FROM frameworks WHERE owner_child_id = ? "
            "ORDER BY rowid DESC LIMIT 1", (child_id,)).fetchone()
        if row is None:
            row = self._conn.execute(
                "SELECT body FROM frameworks ORDER BY rowid DESC LIMIT 1"
            ).fetchone()
        if row is None:
            raise StorageError(f"no framework stored for child {child_id!r}")
        return canonical_parse(row["body"], "framework")

    def list_frameworks(self, child_id: str | None = None) -> list[StoryFramework]:
        if child_id is None:
            rows = self._conn.execute(
                "SELECT body FROM frameworks ORDER BY rowid").fetchall()
        else:
            rows = self._conn.execute(
                "SELECT body FROM frameworks WHERE owner_child_id = ? "
                "ORDER BY rowid", (child_id,)).fetchall()
        return [canonical_parse(r["body"], "framework") for r in rows]

    # -- recaps ------------------------------------------------------------------

    def put_recap(self, episode_id: str, recap: RecapAndGoal) -> None:
        body = canonical_serialize(recap).decode("utf-8")
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO recaps (episode_id, body) VALUES (?, ?)",
                (episode_id, body))

    def get_recap(self, episode_id: str) -> RecapAndGoal | None:
        row = self._conn.execute(
            "SELECT body FROM recaps WHERE episode_id = ?", (episode_id,)
        ).fetchone()
        return canonical_parse(row["body"], "recap") if row else None

    # -- sessions ------------------------------------------------------------------

    def assert_no_active_session(self, child_id: str) -> None:
        row = self._conn.execute(
            "SELECT id FROM sessions WHERE child_id = ? AND closed = 0 AND "
            "state != ?", (child_id, SessionState.REVISITED.value)).fetchone()
        if row:
            raise SessionAlreadyActive(
                f"child {child_id!r} already has active session {row['id']}")

    def insert_session(self, session: TfoSession) -> str:
        check_invariants(session)
        body = canonical_serialize(session).decode("utf-8")
        with self._lock, self._conn:
            if self._idempotent_hit("sessions", "id", session.session_id, body):
                return session.session_id
            if self._existing_body("avatars", "id", session.child_id) is None:
                raise ReferentialViolation(
                    f"session references missing child {session.child_id!r}")
            self._conn.execute(
                "INSERT INTO sessions (id, child_id, body, state, created_at, "
                "updated_at) VALUES (?, ?, ?, ?, ?, ?)",
                (session.session_id, session.child_id, body,
                 session.state.value, session.created_at, session.updated_at))
            self._conn.execute(
                "INSERT INTO session_transitions (session_id, event, from_state,"
                " to_state, attachments, at) VALUES (?, ?, ?, ?, ?, ?)",
                (session.session_id, "__created__", "", session.state.value,
                 body, session.created_at))
        return session.session_id

    def get_session(self, session_id: str) -> TfoSession:
        return self._load("sessions", "id", session_id, "session")

    def update_session(self, session: TfoSession, event: str,
                       attachments: dict) -> None:
        """Snapshot update plus append-only log row, in one transaction."""
        check_invariants(session)
        body = canonical_serialize(session).decode("utf-8")
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT state FROM sessions WHERE id = ?",
                (session.session_id,)).fetchone()
            if row is None:
                raise StorageError(f"no session {session.session_id!r}")
            self._conn.execute(
                "UPDATE sessions SET body = ?, state = ?, updated_at = ? "
                "WHERE id = ?",
                (body, session.state.value, session.updated_at,
                 session.session_id))
            self._conn.execute(
                "INSERT INTO session_transitions (session_id, event, from_state,"
                " to_state, attachments, at) VALUES (?, ?, ?, ?, ?, ?)",
                (session.session_id, event, row["state"], session.state.value,
                 json.dumps(attachments, sort_keys=True), session.updated_at))

    def update_session_flags(self, session: TfoSession) -> None:
        """Non-transition snapshot refresh (task flag only)."""
        body = canonical_serialize(session).decode("utf-8")
        with self._lock, self._conn:
            self._conn.execute(
                "UPDATE sessions SET body = ? WHERE id = ?",
                (body, session.session_id))

    def close_session(self, session_id: str) -> None:
        with self._lock, self._conn:
            cur = self._conn.execute(
                "UPDATE sessions SET closed = 1 WHERE id = ?", (session_id,))
            if cur.rowcount == 0:
                raise NotFound(f"no session {session_id!r}")

    def session_log(self, session_id: str) -> tuple[TfoSession, list]:
        """Creation value plus the ordered (event, attachments) list."""
        rows = self._conn.execute(
            "SELECT event, attachments FROM session_transitions WHERE "
            "session_id = ? ORDER BY seq", (session_id,)).fetchall()
        if not rows or rows[0]["event"] != "__created__":
            raise StorageError(f"no creation log row for session {session_id!r}")
        initial = canonical_parse(rows[0]["attachments"], "session")
        events = []
        for row in rows[1:]:
            attachments = {k: v for k, v in
                           json.loads(row["attachments"]).items()
                           if k in {"main_episode_id", "record_id",
                                    "ending_episode_id"}}
            events.append((SessionEvent(row["event"]), attachments))
        return initial, events

    def sessions_for_child(self, child_id: str) -> list[TfoSession]:
        rows = self._conn.execute(
            "SELECT body FROM sessions WHERE child_id = ? ORDER BY rowid",
            (child_id,)).fetchall()
        return [canonical_parse(r["body"], "session") for r in rows]

    # -- history queries ---------------------------------------------------------------

    def _require_child(self, child_id: str) -> None:
        if self._existing_body("avatars", "id", child_id) is None:
            raise ChildNotFound(f"no avatar stored under id {child_id!r}")

    def recent_feedback_phrases(self, child_id: str, limit: int) -> list[str]:
        """Last delivered feedback texts, newest first."""
        self._require_child(child_id)
        if limit <= 0:
            return []
        rows = self._conn.execute(
            "SELECT body FROM feedback WHERE child_id = ? ORDER BY seq DESC "
            "LIMIT ?", (child_id, limit)).fetchall()
        return [json.loads(r["body"])["text_cn"] for r in rows]

    def mark_episode_approved(self, episode_id: str) -> None:
        with self._lock, self._conn:
            seq = self._conn.execute(
                "SELECT COALESCE(MAX(approved_seq), 0) + 1 AS n FROM episodes"
            ).fetchone()["n"]
            cur = self._conn.execute(
                "UPDATE episodes SET approved = 1, approved_seq = ? WHERE id = ?",
                (seq, episode_id))
            if cur.rowcount == 0:
                raise StorageError(f"no episode {episode_id!r}")

    def latest_episodes(self, child_id: str, limit: int) -> list[Episode]:
        """Most recent approved main episodes, oldest first (summarizer order)."""
        self._require_child(child_id)
        if limit <= 0:
            return []
        rows = self._conn.execute(
            "SELECT body FROM episodes WHERE child_id = ? AND approved = 1 AND "
            "kind = ? ORDER BY approved_seq DESC LIMIT ?",
            (child_id, EpisodeKind.MAIN.value, limit)).fetchall()
        episodes = [canonical_parse(r["body"], "episode") for r in rows]
        episodes.reverse()
        return episodes

    # -- interaction events --------------------------------------------------------------

    def append_interaction(self, event: InteractionEvent,
                           transcription: str | None = None) -> None:
        check_invariants(event)
        body = canonical_serialize(event).decode("utf-8")
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO interaction_events (event_id, session_id, body, "
                "transcription, at) VALUES (?, ?, ?, ?, ?)",
                (event.event_id, event.session_id, body, transcription,
                 event.timestamp or time.time()))

    def interactions_for_session(self, session_id: str) -> list[InteractionEvent]:
        rows = self._conn.execute(
            "SELECT body FROM interaction_events WHERE session_id = ? "
            "ORDER BY seq", (session_id,)).fetchall()
        return [canonical_parse(r["body"], "interaction_event") for r in rows]

    def choice_for_page(self, session_id: str, page_id: str) -> str | None:
        """The branch already selected on a page, if any."""
        for event in self.interactions_for_session(session_id):
            if (event.page_id == page_id
                    and event.payload.kind.value == "choice_selected"):
                return event.payload.choice_branch
        return None

    # -- jobs --------------------------------------------------------------------------------

    def save_job(self, job: GenerationJob, result: dict | None = None) -> None:
        data = job.to_dict()
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO jobs (job_id, session_id, stage, status,"
                " attempts, last_report, result, error, updated_at) VALUES "
                "(?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (data["job_id"], data["session_id"], data["stage"],
                 data["status"], data["attempts"],
                 json.dumps(data["last_report"]) if data["last_report"] else None,
                 json.dumps(result, sort_keys=True) if result else None,
                 data["error"], time.time()))

    def get_job(self, job_id: str) -> GenerationJob | None:
        row = self._conn.execute(
            "SELECT * FROM jobs WHERE job_id = ?", (job_id,)).fetchone()
        if row is None:
            return None
        report = None
        if row["last_report"]:
            report = ValidationReport.model_validate(json.loads(row["last_report"]))
        return GenerationJob(
            job_id=row["job_id"], stage=JobStage(row["stage"]),
            status=JobStatus(row["status"]), attempts=row["attempts"],
            last_report=report, session_id=row["session_id"],
            result_id=None, error=row["error"])

    def get_job_result(self, job_id: str) -> dict | None:
        row = self._conn.execute(
            "SELECT result FROM jobs WHERE job_id = ?", (job_id,)).fetchone()
        if row is None or row["result"] is None:
            return None
        return json.loads(row["result"])

    # -- page media ----------------------------------------------------------------------------

    def set_page_assets(self, episode_id: str, kind: str,
                        assets: dict[str, str]) -> None:
        with self._lock, self._conn:
            for page_id, asset_id in assets.items():
                self._conn.execute(
                    "INSERT OR REPLACE INTO page_assets (episode_id, kind, "
                    "page_id, asset_id) VALUES (?, ?, ?, ?)",
                    (episode_id, kind, page_id, asset_id))

    def get_page_assets(self, episode_id: str, kind: str) -> dict[str, str]:
        rows = self._conn.execute(
            "SELECT page_id, asset_id FROM page_assets WHERE episode_id = ? "
            "AND kind = ?", (episode_id, kind)).fetchall()
        return {r["page_id"]: r["asset_id"] for r in rows}

    # -- blobs --------------------------------------------------------------------------------

    def put_asset(self, data: bytes, media_type: str = "application/octet-stream",
                  ) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.asset_dir / digest
        with self._lock, self._conn:
            if not path.exists():
                path.write_bytes(data)
            self._conn.execute(
                "INSERT OR IGNORE INTO assets (hash, media_type, size) "
                "VALUES (?, ?, ?)", (digest, media_type, len(data)))
        return digest

    def get_asset(self, asset_id: str) -> tuple[bytes, str]:
        row = self._conn.execute(
            "SELECT media_type FROM assets WHERE hash = ?", (asset_id,)).fetchone()
        path = self.asset_dir / asset_id
        if row is None or not path.exists():
            raise NotFound(f"no asset {asset_id!r}")
        return path.read_bytes(), row["media_type"]

    def delete_asset(self, asset_id: str) -> None:
        with self._lock, self._conn:
            self._conn.execute("DELETE FROM assets WHERE hash = ?", (asset_id,))
        path = self.asset_dir / asset_id
        if path.exists():
            path.unlink()

    # -- idempotency -----------------------------------------------------------------------------

    def idempotent_response(self, key: str) -> tuple[int, bytes] | None:
        row = self._conn.execute(
            "SELECT status, body FROM idempotency WHERE key = ?", (key,)).fetchone()
        return (row["status"], row["body"]) if row else None

    def save_idempotent_response(self, key: str, method: str, path: str,
                                 status: int, body: bytes) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR IGNORE INTO idempotency (key, method, path, status, "
                "body, at) VALUES (?, ?, ?, ?, ?, ?)",
                (key, method, path, status, body, time.time()))

    # -- export ------------------------------------------------------------------------------------

    def export_child(self, child_id: str, out_path: str | Path) -> Path:
        """One archive with everything recorded for a child."""
        avatar = self.get_avatar(child_id)
        out = Path(out_path)
        referenced_assets: set[str] = set()
        with zipfile.ZipFile(out, "w", zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("avatar.json", canonical_serialize(avatar))
            for fw in self.list_frameworks(child_id):
                zf.writestr(f"frameworks/{fw.framework_id}.json",
                            canonical_serialize(fw))
            rows = self._conn.execute(
                "SELECT body, id FROM episodes WHERE child_id = ?",
                (child_id,)).fetchall()
            for row in rows:
                zf.writestr(f"episodes/{row['id']}.json", row["body"])
                for kind in ("image", "audio"):
                    for asset in self.get_page_assets(row["id"], kind).values():
                        referenced_assets.add(asset)
            for session in self.sessions_for_child(child_id):
                sid = session.session_id
                zf.writestr(f"sessions/{sid}/session.json",
                            canonical_serialize(session))
                log_rows = self._conn.execute(
                    "SELECT event, from_state, to_state, attachments, at FROM "
                    "session_transitions WHERE session_id = ? ORDER BY seq",
                    (sid,)).fetchall()
                zf.writestr(
                    f"sessions/{sid}/transitions.json",
                    json.dumps([dict(r) for r in log_rows], ensure_ascii=False,
                               sort_keys=True, indent=1))
                events = self.interactions_for_session(sid)
                zf.writestr(
                    f"sessions/{sid}/events.json",
                    json.dumps([json.loads(canonical_serialize(e)) for e in events],
                               ensure_ascii=False, sort_keys=True, indent=1))
                for e in events:
                    if e.payload.audio_asset:
                        referenced_assets.add(e.payload.audio_asset)
            rec_rows = self._conn.execute(
                "SELECT id, body FROM records WHERE child_id = ?",
                (child_id,)).fetchall()
            for row in rec_rows:
                zf.writestr(f"records/{row['id']}.json", row["body"])
            fb_rows = self._conn.execute(
                "SELECT record_id, body FROM feedback WHERE child_id = ?",
                (child_id,)).fetchall()
            for row in fb_rows:
                zf.writestr(f"feedback/{row['record_id']}.json", row["body"])
            for asset in sorted(referenced_assets):
                try:
                    data, _ = self.get_asset(asset)
                except StorageError:
                    continue
                zf.writestr(f"assets/{asset}", data)
        return out
