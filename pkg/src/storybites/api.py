"""HTTP surface over the loop: thin, stateless handlers delegating to the
session manager, pipeline, and store.

Generation endpoints are asynchronous: POST returns a job id and clients poll
GET /jobs/{id}. Validation errors map to 422, missing resources to 404,
illegal transitions and conflicts to 409, provider failures to 502.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from typing import Callable, Optional

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import __version__
from .config import AppConfig
from .domain import (
    ChildAvatar,
    Gender,
    PostMealRecord,
    SpecialCircumstance,
    StoryMode,
    canonical_dict,
    check_invariants,
    parse_structural,
)
from .errors import (
    ConfigError,
    DuplicateChoice,
    FoodMismatch,
    GenerationFailed,
    IllegalTransition,
    InvariantViolation,
    NotFound,
    ParseError,
    ProviderError,
    RangeError,
    ReferentialViolation,
    SchemaViolation,
    SessionAlreadyActive,
    StorageError,
)
from .pipeline import GenerationJob, JobStage, JobStatus
from .providers import GenerationProvider
from .sessions import (
    InteractionKind,
    SessionManager,
    SessionState,
    avatar_feedback_state,
)
from .store import Store
from .validation import validate_episode

_STATUS_MAP: list[tuple[type[Exception], int]] = [
    (NotFound, 404),
    (IllegalTransition, 409),
    (SessionAlreadyActive, 409),
    (DuplicateChoice, 409),
    (GenerationFailed, 502),
    (ProviderError, 502),
    (ParseError, 422),
    (SchemaViolation, 422),
    (InvariantViolation, 422),
    (FoodMismatch, 422),
    (RangeError, 422),
    (ReferentialViolation, 422),
    (ValueError, 422),
    (StorageError, 409),
    (ConfigError, 500),
]


def _error_response(exc: Exception) -> JSONResponse:
    status = 500
    for etype, code in _STATUS_MAP:
        if isinstance(exc, etype):
            status = code
            break
    body = {"code": type(exc).__name__, "detail": str(exc)}
    if isinstance(exc, GenerationFailed):
        body["violations"] = [v.model_dump(mode="json")
                              for v in exc.report.violations]
    return JSONResponse(status_code=status, content=body)


# --- request bodies ----------------------------------------------------------------


class _Body(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AvatarCreate(_Body):
    nickname: str
    gender: Gender = Gender.UNSPECIFIED
    clothing: str = ""
    accessories: tuple[str, ...] = ()
    base_reference_image: Optional[str] = None


class FrameworkCreate(_Body):
    child_id: str
    theme: str = ""
    mode: StoryMode


class SessionCreate(_Body):
    child_id: str
    food: str


class GenerateRequest(_Body):
    framework_id: Optional[str] = None
    regeneration_note: Optional[str] = None


class ReviewRequest(_Body):
    action: str  # approve | regenerate
    note: Optional[str] = None


class EventCreate(_Body):
    page_id: str
    event_key: str
    kind: InteractionKind
    choice_branch: Optional[str] = None
    audio_asset: Optional[str] = None


class PostMealCreate(_Body):
    target_food: str
    baseline_try: int
    try_level: int
    intake: int
    resistance: int
    emotion: int
    parent_pressure: int
    helpfulness: int
    self_rating: int
    self_description: str = ""
    special_circumstances: tuple[SpecialCircumstance, ...] = ()
    task_completed: bool = False


# --- app factory --------------------------------------------------------------------


def create_app(config: AppConfig | None = None,
               store: Store | None = None,
               provider: GenerationProvider | None = None) -> FastAPI:
    config = config or AppConfig()
    store = store or config.open_store()
    provider = provider or config.build_provider(store)
    pipeline = config.build_pipeline(store, provider)
    manager = SessionManager(store, pipeline,
                             constraints=config.basic_constraints())
    executor = ThreadPoolExecutor(max_workers=max(1, config.job_workers))

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        executor.shutdown(wait=True, cancel_futures=True)
        store.close()

    app = FastAPI(title="storybites", version=__version__, lifespan=lifespan)
    app.state.config = config
    app.state.store = store
    app.state.provider = provider
    app.state.pipeline = pipeline
    app.state.manager = manager

    @app.exception_handler(Exception)
    async def on_error(_: Request, exc: Exception):
        return _error_response(exc)

    @app.exception_handler(RequestValidationError)
    async def on_body_error(_: Request, exc: RequestValidationError):
        detail = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
            for err in exc.errors())
        return JSONResponse(status_code=422,
                            content={"code": "SchemaViolation", "detail": detail})

    @app.middleware("http")
    async def idempotency(request: Request, call_next: Callable):
        if request.method != "POST":
            return await call_next(request)
        key = request.headers.get("Idempotency-Key")
        if not key:
            return await call_next(request)
        cached = store.idempotent_response(key)
        if cached is not None:
            status, body = cached
            return Response(content=body, status_code=status,
                            media_type="application/json",
                            headers={"X-Idempotent-Replay": "true"})
        response = await call_next(request)
        chunks = [chunk async for chunk in response.body_iterator]
        body = b"".join(chunks)
        if response.status_code < 500:
            store.save_idempotent_response(
                key, request.method, request.url.path,
                response.status_code, body)
        return Response(content=body, status_code=response.status_code,
                        media_type=response.media_type,
                        headers=dict(response.headers))

    @app.middleware("http")
    async def auth(request: Request, call_next: Callable):
        token = config.auth_token
        if token and request.url.path != "/health":
            header = request.headers.get("Authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse(status_code=401, content={
                    "code": "Unauthorized", "detail": "bearer token required"})
        return await call_next(request)

    # -- jobs ---------------------------------------------------------------------

    def submit_job(stage: JobStage, session_id: str | None,
                   work: Callable[[GenerationJob], dict]) -> GenerationJob:
        job = GenerationJob(job_id=pipeline.ids.new("job"), stage=stage,
                            session_id=session_id)
        store.save_job(job)

        def run() -> None:
            job.status = JobStatus.RUNNING
            store.save_job(job)
            try:
                result = work(job)
            except GenerationFailed as exc:
                job.status = JobStatus.FAILED
                job.error = str(exc)
                job.last_report = exc.report
                store.save_job(job)
            except Exception as exc:  # surfaced via job polling
                job.status = JobStatus.FAILED
                job.error = f"{type(exc).__name__}: {exc}"
                store.save_job(job)
            else:
                if job.status is not JobStatus.FAILED:
                    job.status = JobStatus.SUCCEEDED
                store.save_job(job, result)

        executor.submit(run)
        return job

    def running_job_for(session_id: str) -> bool:
        job_rows = store._conn.execute(
            "SELECT 1 FROM jobs WHERE session_id = ? AND status IN (?, ?)",
            (session_id, JobStatus.QUEUED.value, JobStatus.RUNNING.value),
        ).fetchone()
        return job_rows is not None

    # -- health and assets -----------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok", "provider": provider.name,
                "version": __version__}

    @app.get("/assets/{asset_id}")
    def get_asset(asset_id: str):
        data, media_type = store.get_asset(asset_id)
        return Response(content=data, media_type=media_type)

    @app.post("/assets", status_code=201)
    async def upload_asset(request: Request):
        data = await request.body()
        if not data:
            raise ValueError("asset body must be non-empty")
        media_type = request.headers.get("Content-Type",
                                         "application/octet-stream")
        return {"asset_id": store.put_asset(data, media_type)}

    # -- avatars -----------------------------------------------------------------------

    @app.post("/avatars", status_code=201)
    def create_avatar(body: AvatarCreate):
        avatar = ChildAvatar(avatar_id=pipeline.ids.new("avatar"),
                             **body.model_dump())
        check_invariants(avatar)
        store.put(avatar)
        return canonical_dict(avatar)

    @app.get("/avatars/{avatar_id}")
    def get_avatar(avatar_id: str):
        return canonical_dict(store.get_avatar(avatar_id))

    # -- frameworks -----------------------------------------------------------------------

    @app.post("/frameworks", status_code=202)
    def create_framework(body: FrameworkCreate):
        avatar = store.get_avatar(body.child_id)

        def work(job: GenerationJob) -> dict:
            framework = pipeline.generate_framework(
                body.theme, body.mode, manager.constraints, avatar, job=job)
            store.put(framework, owner=body.child_id)
            return {"framework_id": framework.framework_id,
                    "framework": canonical_dict(framework)}

        job = submit_job(JobStage.FRAMEWORK, None, work)
        return {"job_id": job.job_id}

    # -- sessions ----------------------------------------------------------------------------

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreate):
        session = manager.create_session(body.child_id, body.food)
        return canonical_dict(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return canonical_dict(store.get_session(session_id))

    @app.post("/sessions/{session_id}/generate", status_code=202)
    def generate(session_id: str, body: GenerateRequest | None = None):
        body = body or GenerateRequest()
        session = store.get_session(session_id)
        if session.state not in (SessionState.FOOD_SELECTED,
                                 SessionState.STORY_GENERATING):
            raise IllegalTransition(session.state.value, "generate")
        if running_job_for(session_id):
            raise StorageError(f"a generation job is already active for "
                               f"session {session_id}")
        framework = (store.get_framework(body.framework_id)
                     if body.framework_id else None)

        def work(job: GenerationJob) -> dict:
            episode = manager.generate_main_episode(
                session_id, framework,
                regeneration_note=body.regeneration_note, job=job)
            return {"episode_id": episode.episode_id}

        job = submit_job(JobStage.EPISODE, session_id, work)
        return {"job_id": job.job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = store.get_job(job_id)
        if job is None:
            raise NotFound(f"no job {job_id!r}")
        payload = job.to_dict()
        payload["result"] = store.get_job_result(job_id)
        return payload

    @app.get("/sessions/{session_id}/episode")
    def get_episode(session_id: str):
        session = store.get_session(session_id)
        if not session.main_episode_id:
            raise NotFound(f"session {session_id} has no episode yet")
        episode = store.get_episode(session.main_episode_id)
        return {
            "episode": canonical_dict(episode),
            "page_images": store.get_page_assets(episode.episode_id, "image"),
            "page_audio": store.get_page_assets(episode.episode_id, "audio"),
            "session_state": session.state.value,
        }

    @app.post("/sessions/{session_id}/review")
    def review(session_id: str, body: ReviewRequest):
        if body.action not in ("approve", "regenerate"):
            raise ValueError("action must be approve or regenerate")
        if body.action == "approve":
            session = manager.review(session_id, approve=True)
            return canonical_dict(session)
        session = manager.review(session_id, approve=False, note=body.note)

        def work(job: GenerationJob) -> dict:
            episode = manager.generate_main_episode(
                session_id, None, regeneration_note=body.note, job=job)
            return {"episode_id": episode.episode_id}

        job = submit_job(JobStage.EPISODE, session_id, work)
        return {"session": canonical_dict(session), "job_id": job.job_id}

    @app.post("/sessions/{session_id}/events", status_code=201)
    def post_event(session_id: str, body: EventCreate):
        event = manager.record_interaction(
            session_id, body.page_id, body.event_key, body.kind,
            body.choice_branch, body.audio_asset)
        return canonical_dict(event)

    @app.post("/sessions/{session_id}/reading-finished")
    def reading_finished(session_id: str):
        return canonical_dict(manager.finish_reading(session_id))

    @app.post("/sessions/{session_id}/post-meal", status_code=202)
    def post_meal(session_id: str, body: PostMealCreate):
        record = PostMealRecord(
            record_id=pipeline.ids.new("rec"),
            **body.model_dump(exclude={"task_completed"}))
        session = manager.submit_post_meal(session_id, record,
                                           task_completed=body.task_completed)

        def work(job: GenerationJob) -> dict:
            feedback, ending = manager.run_post_meal_pipeline(
                session_id, seed=config.seed)
            return {"record_id": record.record_id,
                    "feedback": canonical_dict(feedback),
                    "ending_episode_id": ending.episode_id}

        job = submit_job(JobStage.ENDING, session_id, work)
        return {"session": canonical_dict(session), "job_id": job.job_id}

    @app.get("/sessions/{session_id}/feedback")
    def get_feedback(session_id: str):
        session = store.get_session(session_id)
        feedback = store.get_feedback_for_session(session_id)
        if feedback is None:
            raise NotFound(f"no feedback delivered yet for {session_id}")
        record = store.get_record(feedback.record_id)
        return {
            "feedback": canonical_dict(feedback),
            "avatar_state": avatar_feedback_state(record).value,
            "session_state": session.state.value,
        }

    @app.get("/sessions/{session_id}/ending")
    def get_ending(session_id: str):
        session = store.get_session(session_id)
        if not session.ending_episode_id:
            raise NotFound(f"no ending ready yet for {session_id}")
        ending = store.get_episode(session.ending_episode_id)
        if session.state is SessionState.ENDING_READY:
            session = manager.revisit(session_id)
        return {
            "episode": canonical_dict(ending),
            "page_images": store.get_page_assets(ending.episode_id, "image"),
            "page_audio": store.get_page_assets(ending.episode_id, "audio"),
            "session_state": session.state.value,
        }

    # -- library -----------------------------------------------------------------------------

    @app.get("/children/{child_id}/library")
    def library(child_id: str):
        avatar = store.get_avatar(child_id)
        sessions = store.sessions_for_child(child_id)
        return {
            "child": canonical_dict(avatar),
            "sessions": [canonical_dict(s) for s in sessions],
        }

    # -- standalone validation (parity with the CLI linter) -----------------------------------

    @app.post("/validate/episode")
    def validate_episode_payload(request_body: dict):
        episode = parse_structural(request_body, "episode")
        report = validate_episode(episode, manager.constraints)
        payload = {"ok": report.ok,
                   "violations": [v.model_dump(mode="json")
                                  for v in report.violations]}
        if report.ok:
            return payload
        return JSONResponse(status_code=422, content={
            "code": "ValidationFailed",
            "detail": report.summary(),
            **payload,
        })

    return app
