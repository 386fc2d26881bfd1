"""The food-trying session loop: one state machine per target-food cycle.

A session walks food selection, story generation, parental review, reading,
the post-meal record, feedback, and the behavior-informed ending. Transitions
are pure functions over the closed table below; the manager persists every
step to an append-only log so replay reconstructs the state exactly.
"""

from __future__ import annotations

import threading
import time
from enum import Enum
from typing import Callable, Optional, Sequence

from pydantic import BaseModel, ConfigDict

from .domain import (
    BasicConstraints,
    ChildAvatar,
    Episode,
    EVENT_KEY_RE,
    FeedbackMessage,
    IdGenerator,
    InteractionType,
    PostMealRecord,
    RecapAndGoal,
    StoryFramework,
    register_invariant_checker,
    register_tag,
)
from .errors import (
    DuplicateChoice,
    FoodMismatch,
    IllegalTransition,
    InvariantViolation,
    UnknownEventKey,
)
from .pipeline import EpisodeOverrides, GenerationPipeline


class SessionState(str, Enum):
    FOOD_SELECTED = "FoodSelected"
    STORY_GENERATING = "StoryGenerating"
    REVIEW_PENDING = "ReviewPending"
    STORY_READY = "StoryReady"
    READ_DONE = "ReadDone"
    POST_MEAL_RECORDED = "PostMealRecorded"
    FEEDBACK_DELIVERED = "FeedbackDelivered"
    ENDING_READY = "EndingReady"
    REVISITED = "Revisited"


class SessionEvent(str, Enum):
    GENERATION_STARTED = "generation_started"
    EPISODE_DRAFTED = "episode_drafted"
    APPROVED = "approved"
    REGENERATION_REQUESTED = "regeneration_requested"
    READING_FINISHED = "reading_finished"
    POST_MEAL_SUBMITTED = "post_meal_submitted"
    FEEDBACK_SHOWN = "feedback_shown"
    ENDING_GENERATED = "ending_generated"
    REVISITED = "revisited"


TRANSITIONS: dict[tuple[SessionState, SessionEvent], SessionState] = {
    (SessionState.FOOD_SELECTED, SessionEvent.GENERATION_STARTED):
        SessionState.STORY_GENERATING,
    (SessionState.STORY_GENERATING, SessionEvent.EPISODE_DRAFTED):
        SessionState.REVIEW_PENDING,
    (SessionState.REVIEW_PENDING, SessionEvent.APPROVED):
        SessionState.STORY_READY,
    (SessionState.REVIEW_PENDING, SessionEvent.REGENERATION_REQUESTED):
        SessionState.STORY_GENERATING,
    (SessionState.STORY_READY, SessionEvent.READING_FINISHED):
        SessionState.READ_DONE,
    (SessionState.STORY_READY, SessionEvent.POST_MEAL_SUBMITTED):
        SessionState.POST_MEAL_RECORDED,
    (SessionState.READ_DONE, SessionEvent.POST_MEAL_SUBMITTED):
        SessionState.POST_MEAL_RECORDED,
    (SessionState.POST_MEAL_RECORDED, SessionEvent.FEEDBACK_SHOWN):
        SessionState.FEEDBACK_DELIVERED,
    (SessionState.FEEDBACK_DELIVERED, SessionEvent.ENDING_GENERATED):
        SessionState.ENDING_READY,
    (SessionState.ENDING_READY, SessionEvent.REVISITED):
        SessionState.REVISITED,
}

# How far along the loop a state sits; used by the id-presence invariants.
_STATE_ORDER = {state: i for i, state in enumerate(SessionState)}


def next_state(state: SessionState, event: SessionEvent) -> SessionState:
    """Pure transition lookup; raises IllegalTransition off the table."""
    try:
        return TRANSITIONS[(state, event)]
    except KeyError:
        raise IllegalTransition(state.value, event.value) from None


class AvatarFeedbackState(str, Enum):
    HAPPY = "happy"
    NEUTRAL = "neutral"
    SAD_BUT_HOPEFUL = "sad-but-hopeful"


def avatar_feedback_state(record: PostMealRecord) -> AvatarFeedbackState:
    """Avatar expression after the meal; thresholds match the ending variants."""
    if record.self_rating >= 7:
        return AvatarFeedbackState.HAPPY
    if record.self_rating <= 3:
        return AvatarFeedbackState.SAD_BUT_HOPEFUL
    return AvatarFeedbackState.NEUTRAL


# --- session value ----------------------------------------------------------------


class TfoSession(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    session_id: str
    child_id: str
    target_food: str
    state: SessionState = SessionState.FOOD_SELECTED
    main_episode_id: Optional[str] = None
    ending_episode_id: Optional[str] = None
    record_id: Optional[str] = None
    regeneration_count: int = 0
    real_world_task_done: bool = False
    created_at: float = 0.0
    updated_at: float = 0.0


def _check_session(v: TfoSession, problems: list[str]) -> None:
    if not v.target_food.strip():
        problems.append("target_food must be non-empty")
    order = _STATE_ORDER[v.state]
    if order >= _STATE_ORDER[SessionState.REVIEW_PENDING] and not v.main_episode_id:
        problems.append(f"main_episode_id required in state {v.state.value}")
    if order >= _STATE_ORDER[SessionState.POST_MEAL_RECORDED] and not v.record_id:
        problems.append(f"record_id required in state {v.state.value}")
    if order >= _STATE_ORDER[SessionState.ENDING_READY] and not v.ending_episode_id:
        problems.append(f"ending_episode_id required in state {v.state.value}")
    if v.regeneration_count < 0:
        problems.append("regeneration_count must be >= 0")


class InteractionKind(str, Enum):
    TAP = "tap"
    DRAG = "drag"
    CHOICE_SELECTED = "choice_selected"
    MIMIC_DONE = "mimic_done"
    VOICE_RECORDED = "voice_recorded"


class InteractionPayload(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: InteractionKind
    choice_branch: Optional[str] = None
    audio_asset: Optional[str] = None


class InteractionEvent(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    event_id: str
    session_id: str
    page_id: str
    event_key: str
    payload: InteractionPayload
    timestamp: Optional[float] = None


def _check_interaction_event(v: InteractionEvent, problems: list[str]) -> None:
    if not EVENT_KEY_RE.match(v.event_key):
        problems.append(f"event_key {v.event_key!r} is not snake_case")
    if v.payload.kind is InteractionKind.CHOICE_SELECTED and not v.payload.choice_branch:
        problems.append("choice_selected events must carry choice_branch")


register_tag("session", TfoSession)
register_tag("interaction_event", InteractionEvent)
register_invariant_checker(TfoSession, _check_session)
register_invariant_checker(InteractionEvent, _check_interaction_event)


def transition(session: TfoSession, event: SessionEvent, *,
               now: Optional[float] = None,
               main_episode_id: Optional[str] = None,
               record_id: Optional[str] = None,
               ending_episode_id: Optional[str] = None) -> TfoSession:
    """Apply one event, returning the new immutable session value."""
    new_state = next_state(session.state, event)
    updates: dict = {
        "state": new_state,
        "updated_at": time.time() if now is None else now,
    }
    if event is SessionEvent.EPISODE_DRAFTED:
        updates["main_episode_id"] = main_episode_id or session.main_episode_id
    if event is SessionEvent.POST_MEAL_SUBMITTED:
        updates["record_id"] = record_id or session.record_id
    if event is SessionEvent.ENDING_GENERATED:
        updates["ending_episode_id"] = ending_episode_id or session.ending_episode_id
    if event is SessionEvent.REGENERATION_REQUESTED:
        updates["regeneration_count"] = session.regeneration_count + 1
    return session.model_copy(update=updates)


def replay(session: TfoSession, events: Sequence[tuple[SessionEvent, dict]],
           ) -> TfoSession:
    """Rebuild the session by folding logged events over its creation value."""
    current = session
    for event, attachments in events:
        current = transition(current, event, **attachments)
    return current


# --- manager -------------------------------------------------------------------------


class SessionManager:
    """Serializes all writes for one family store and drives the loop.

    Generation stages are delegated to the pipeline; every state change goes
    through ``transition`` and lands in the store's append-only log.
    """

    def __init__(self, store, pipeline: GenerationPipeline,
                 constraints: Optional[BasicConstraints] = None,
                 ids: Optional[IdGenerator] = None,
                 clock: Callable[[], float] = time.time):
        self.store = store
        self.pipeline = pipeline
        self.constraints = constraints or BasicConstraints()
        self.ids = ids or pipeline.ids
        self.clock = clock
        self._lock = threading.RLock()

    # -- lifecycle ---------------------------------------------------------------

    def create_session(self, child_id: str, target_food: str) -> TfoSession:
        if not target_food.strip():
            raise ValueError("target_food must be non-empty")
        with self._lock:
            self.store.get_avatar(child_id)  # raises ChildNotFound
            self.store.assert_no_active_session(child_id)
            now = self.clock()
            session = TfoSession(
                session_id=self.ids.new("sess"), child_id=child_id,
                target_food=target_food, state=SessionState.FOOD_SELECTED,
                created_at=now, updated_at=now)
            self.store.insert_session(session)
            return session

    def apply_event(self, session_id: str, event: SessionEvent,
                    **attachments) -> TfoSession:
        with self._lock:
            session = self.store.get_session(session_id)
            new = transition(session, event, now=self.clock(), **attachments)
            self.store.update_session(new, event.value, attachments)
            return new

    # -- generation ------------------------------------------------------------------

    def generate_main_episode(self, session_id: str,
                              framework: Optional[StoryFramework] = None,
                              regeneration_note: Optional[str] = None,
                              job=None) -> Episode:
        """Recap (when history exists) + episode + page media, then review."""
        session = self.store.get_session(session_id)
        if session.state is SessionState.FOOD_SELECTED:
            session = self.apply_event(session_id, SessionEvent.GENERATION_STARTED)
        elif session.state is not SessionState.STORY_GENERATING:
            raise IllegalTransition(session.state.value, "generate")
        avatar = self.store.get_avatar(session.child_id)
        if framework is None:
            framework = self.store.latest_framework(session.child_id)
        recap: Optional[RecapAndGoal] = None
        history = self.store.latest_episodes(session.child_id, 3)
        if history:
            recap = self.pipeline.summarize(history, framework)
        episode = self.pipeline.generate_episode(
            framework, recap, session.target_food, avatar, self.constraints,
            EpisodeOverrides(food_override_must_follow=True),
            regeneration_note=regeneration_note,
            regeneration_count=session.regeneration_count,
            job=job)
        self.store.put(episode, child_id=session.child_id)
        if recap is not None:
            self.store.put_recap(episode.episode_id, recap)
        self.store.set_page_assets(
            episode.episode_id, "image",
            self.pipeline.generate_page_images(episode, avatar))
        self.store.set_page_assets(
            episode.episode_id, "audio",
            self.pipeline.generate_page_audio(episode))
        self.apply_event(session_id, SessionEvent.EPISODE_DRAFTED,
                         main_episode_id=episode.episode_id)
        return episode

    def review(self, session_id: str, approve: bool,
               note: Optional[str] = None) -> TfoSession:
        if approve:
            session = self.apply_event(session_id, SessionEvent.APPROVED)
            self.store.mark_episode_approved(session.main_episode_id)
            return session
        return self.apply_event(session_id, SessionEvent.REGENERATION_REQUESTED)

    # -- reading ------------------------------------------------------------------------

    _INTERACTIVE_STATES = frozenset({
        SessionState.STORY_READY, SessionState.READ_DONE,
        SessionState.ENDING_READY, SessionState.REVISITED,
    })

    def record_interaction(self, session_id: str, page_id: str, event_key: str,
                           kind: InteractionKind,
                           choice_branch: Optional[str] = None,
                           audio_asset: Optional[str] = None) -> InteractionEvent:
        with self._lock:
            session = self.store.get_session(session_id)
            if session.state not in self._INTERACTIVE_STATES:
                raise IllegalTransition(session.state.value, "record_interaction")
            page = self._find_page(session, page_id)
            if (page is None or page.interaction is None
                    or page.interaction.event_key != event_key):
                raise UnknownEventKey(
                    f"no interactive page {page_id!r} with key {event_key!r}")
            if kind is InteractionKind.CHOICE_SELECTED:
                if page.interaction.type is not InteractionType.CHOICE:
                    raise UnknownEventKey(
                        f"page {page_id!r} is not a choice page")
                if choice_branch not in {bc.choice_id for bc in page.branch_choices}:
                    raise UnknownEventKey(
                        f"unknown branch {choice_branch!r} on page {page_id!r}")
                if self.store.choice_for_page(session_id, page_id) is not None:
                    raise DuplicateChoice(
                        f"a branch was already chosen on page {page_id!r}")
            event = InteractionEvent(
                event_id=self.ids.new("evt"), session_id=session_id,
                page_id=page_id, event_key=event_key,
                payload=InteractionPayload(kind=kind, choice_branch=choice_branch,
                                           audio_asset=audio_asset),
                timestamp=self.clock())
            transcription = None
            if kind is InteractionKind.VOICE_RECORDED and audio_asset:
                transcription = self.pipeline.provider.transcribe(audio_asset)
            self.store.append_interaction(event, transcription)
            return event

    def _find_page(self, session: TfoSession, page_id: str):
        for episode_id in (session.main_episode_id, session.ending_episode_id):
            if not episode_id:
                continue
            episode = self.store.get_episode(episode_id)
            for page in episode.pages:
                if page.page_id == page_id:
                    return page
        return None

    def finish_reading(self, session_id: str) -> TfoSession:
        return self.apply_event(session_id, SessionEvent.READING_FINISHED)

    # -- post-meal ------------------------------------------------------------------------

    def submit_post_meal(self, session_id: str, record: PostMealRecord,
                         task_completed: bool = False) -> TfoSession:
        from .domain import check_invariants

        check_invariants(record)
        with self._lock:
            session = self.store.get_session(session_id)
            if record.target_food != session.target_food:
                raise FoodMismatch(
                    f"record food {record.target_food!r} does not match session "
                    f"food {session.target_food!r}")
            # Validates legality (StoryReady or ReadDone) via the table.
            next_state(session.state, SessionEvent.POST_MEAL_SUBMITTED)
            self.store.put(record, child_id=session.child_id,
                           session_id=session_id)
            new = self.apply_event(session_id, SessionEvent.POST_MEAL_SUBMITTED,
                                   record_id=record.record_id)
            if task_completed and not new.real_world_task_done:
                new = new.model_copy(update={"real_world_task_done": True})
                self.store.update_session_flags(new)
            return new

    def run_post_meal_pipeline(self, session_id: str,
                               seed: Optional[int] = None,
                               feedback_job=None, ending_job=None,
                               ) -> tuple[FeedbackMessage, Episode]:
        """Feedback first, then the ending; advances the session to EndingReady."""
        session = self.store.get_session(session_id)
        if session.state is not SessionState.POST_MEAL_RECORDED:
            raise IllegalTransition(session.state.value, "run_post_meal_pipeline")
        record = self.store.get_record(session.record_id)
        avatar = self.store.get_avatar(session.child_id)
        recent = self.store.recent_feedback_phrases(
            session.child_id, self.pipeline.config.recent_phrase_limit)
        feedback = self.pipeline.generate_feedback(
            record, avatar,
            recent, self.pipeline.config.seed if seed is None else seed,
            job=feedback_job)
        self.store.put(feedback, child_id=session.child_id,
                       session_id=session_id)
        self.apply_event(session_id, SessionEvent.FEEDBACK_SHOWN)
        main_episode = self.store.get_episode(session.main_episode_id)
        summary = self.store.get_recap(session.main_episode_id)
        ending = self.pipeline.generate_ending(
            main_episode, record, summary, self.constraints, avatar,
            job=ending_job)
        self.store.put(ending, child_id=session.child_id)
        self.store.set_page_assets(
            ending.episode_id, "image",
            self.pipeline.generate_page_images(ending, avatar))
        self.store.set_page_assets(
            ending.episode_id, "audio",
            self.pipeline.generate_page_audio(ending))
        self.apply_event(session_id, SessionEvent.ENDING_GENERATED,
                         ending_episode_id=ending.episode_id)
        return feedback, ending

    def revisit(self, session_id: str) -> TfoSession:
        return self.apply_event(session_id, SessionEvent.REVISITED)

    # -- replay ---------------------------------------------------------------------------

    def replay_state(self, session_id: str) -> TfoSession:
        """Recompute the session purely from the creation row and the log."""
        initial, events = self.store.session_log(session_id)
        return replay(initial, events)
