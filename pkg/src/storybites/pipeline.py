"""Stage orchestration: framework, recap, episode, ending, and feedback.

Each stage is prompt template + provider call + validate-retry loop. Nothing
invalid ever escapes: a stage either returns a value that passes its gate
validator or raises GenerationFailed carrying the last report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

from .domain import (
    BasicConstraints,
    ChildAvatar,
    Episode,
    EpisodeDraft,
    EpisodeKind,
    FeedbackDraft,
    FeedbackMessage,
    FeedbackType,
    IdGenerator,
    InteractionType,
    PagePromptPackage,
    PostMealRecord,
    RecapAndGoal,
    StoryFramework,
    StoryMode,
    VisualCanon,
    canonical_dict,
    check_invariants,
    parse_structural,
)
from .errors import FoodMismatch, GenerationFailed, InvariantViolation, RangeError
from .providers import GenerationProvider
from .validation import (
    ValidationReport,
    Violation,
    ViolationCode,
    validate_episode,
    validate_feedback_text,
    validate_framework,
    validate_invariants,
    validate_vocabulary,
)

T = TypeVar("T")

# Vocabulary that marks a recap as a behavioral-stage analysis instead of a
# content-level direction; configurable via PipelineConfig.
STAGE_LABEL_DENYLIST = (
    "阶段", "意愿等级", "准备度", "干预进度", "行为目标",
    "readiness", "willingness stage", "intervention stage",
)

FIRST_PERSON_DENYLIST = ("我", "咱", "俺")

PROGRESS_LEXICON = (
    "尝了", "吃了", "咬了", "舔了", "咽下", "试了", "进步", "主动吃", "吃掉",
)

AVOIDANCE_LEXICON = (
    "拒绝", "推开", "哭", "不肯", "没碰", "不碰", "害怕", "躲开", "扔掉",
)


class JobStage(str, Enum):
    FRAMEWORK = "framework"
    SUMMARIZE = "summarize"
    EPISODE = "episode"
    ENDING = "ending"
    FEEDBACK = "feedback"
    PAGE_IMAGE = "page_image"


class JobStatus(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    AWAITING_REVIEW = "awaiting_review"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass
class GenerationJob:
    """Mutable progress record for one generation stage run."""

    job_id: str
    stage: JobStage
    status: JobStatus = JobStatus.QUEUED
    attempts: int = 0
    last_report: Optional[ValidationReport] = None
    session_id: Optional[str] = None
    result_id: Optional[str] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "stage": self.stage.value,
            "status": self.status.value,
            "attempts": self.attempts,
            "last_report": (self.last_report.model_dump(mode="json")
                            if self.last_report else None),
            "session_id": self.session_id,
            "result_id": self.result_id,
            "error": self.error,
        }


class EndingVariant(str, Enum):
    POSITIVE = "positive"
    GENTLE = "gentle"
    WARM = "warm"


class DescriptionSignal(str, Enum):
    PROGRESS = "progress"
    AVOIDANCE = "avoidance"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class EpisodeOverrides:
    food_override_must_follow: bool = False
    temporary_props: tuple[str, ...] = ()


@dataclass(frozen=True)
class PipelineConfig:
    max_retries: int = 2
    seed: int = 0
    prompt_dir: Optional[Path] = None
    recent_phrase_limit: int = 5
    stage_label_denylist: tuple[str, ...] = STAGE_LABEL_DENYLIST
    first_person_denylist: tuple[str, ...] = FIRST_PERSON_DENYLIST
    progress_lexicon: tuple[str, ...] = PROGRESS_LEXICON
    avoidance_lexicon: tuple[str, ...] = AVOIDANCE_LEXICON


# --- pure rule functions -----------------------------------------------------------


def select_ending_variant(score: int) -> EndingVariant:
    """Map the 1-10 self rating onto the ending tone."""
    if not isinstance(score, int) or not 1 <= score <= 10:
        raise RangeError(f"score must be within 1-10, got {score!r}")
    if score >= 7:
        return EndingVariant.POSITIVE
    if score <= 3:
        return EndingVariant.GENTLE
    return EndingVariant.WARM


def classify_feedback_type(record: PostMealRecord,
                           description_signal: DescriptionSignal) -> FeedbackType:
    """Praise/encourage decision: the description wins, the rating breaks ties."""
    if description_signal is DescriptionSignal.PROGRESS:
        return FeedbackType.PRAISE
    if description_signal is DescriptionSignal.AVOIDANCE:
        return FeedbackType.ENCOURAGE
    return FeedbackType.PRAISE if record.self_rating >= 7 else FeedbackType.ENCOURAGE


def derive_description_signal(
        description: str,
        progress_lexicon: Sequence[str] = PROGRESS_LEXICON,
        avoidance_lexicon: Sequence[str] = AVOIDANCE_LEXICON) -> DescriptionSignal:
    """Keyword read of the free-text description; mixed evidence is neutral."""
    progress = any(term in description for term in progress_lexicon)
    avoidance = any(term in description for term in avoidance_lexicon)
    if progress and not avoidance:
        return DescriptionSignal.PROGRESS
    if avoidance and not progress:
        return DescriptionSignal.AVOIDANCE
    return DescriptionSignal.NEUTRAL


def assemble_image_prompt(canon: VisualCanon, package: PagePromptPackage) -> str:
    """Positive image prompt: prefix, character lock, world lock, page suffix.

    The negative prompt stays on its own channel (canon.negative_prompt_en).
    """
    parts = [
        canon.global_visual_prompt_prefix_en,
        canon.character_lock_prompt_en,
        canon.world_lock_prompt_en,
        package.image_prompt_suffix_en,
    ]
    return ", ".join(p.strip() for p in parts if p.strip())


# --- retry loop ---------------------------------------------------------------------


def run_with_validation(call: Callable[[Optional[ValidationReport], int], T],
                        validator: Callable[[T], ValidationReport],
                        max_retries: int,
                        job: Optional[GenerationJob] = None) -> tuple[T, int]:
    """Provider loop: re-invoke with the violation report until the gate passes.

    Returns (value, attempts). Raises GenerationFailed with the last report
    once max_retries + 1 attempts are spent.
    """
    if max_retries < 0:
        raise ValueError("max_retries must be >= 0")
    report: Optional[ValidationReport] = None
    attempts = 0
    candidate: Optional[T] = None
    while attempts <= max_retries:
        attempts += 1
        if job is not None:
            job.status = JobStatus.RUNNING
            job.attempts = attempts
        candidate = call(report, attempts)
        report = validator(candidate)
        if job is not None:
            job.last_report = report
        if report.ok:
            if job is not None:
                job.status = JobStatus.SUCCEEDED
            return candidate, attempts
    if job is not None:
        job.status = JobStatus.FAILED
        job.error = report.summary()
    raise GenerationFailed(report, attempts)


# --- prompt templates ------------------------------------------------------------------


def load_prompt(stage: str, prompt_dir: Optional[Path] = None) -> str:
    """Stage system prompt: operator file when present, packaged default else."""
    if prompt_dir is not None:
        candidate = Path(prompt_dir) / f"{stage}.txt"
        if candidate.exists():
            return candidate.read_text(encoding="utf-8")
    return (resources.files("storybites") / "prompts" / f"{stage}.txt") \
        .read_text(encoding="utf-8")


def _payload_bytes(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")


# --- the pipeline -----------------------------------------------------------------------


class GenerationPipeline:
    """Binds a provider, config, and id generator into the five stages."""

    def __init__(self, provider: GenerationProvider,
                 config: PipelineConfig | None = None,
                 ids: IdGenerator | None = None):
        self.provider = provider
        self.config = config or PipelineConfig()
        self.ids = ids or IdGenerator()
        self.jobs: list[GenerationJob] = []

    # -- shared plumbing --------------------------------------------------------

    def _new_job(self, stage: JobStage,
                 session_id: str | None = None) -> GenerationJob:
        job = GenerationJob(job_id=self.ids.new("job"), stage=stage,
                            session_id=session_id)
        self.jobs.append(job)
        return job

    def _complete(self, stage: str, payload: dict, tag: str,
                  report: Optional[ValidationReport], attempt: int):
        enriched = dict(payload)
        enriched["attempt"] = attempt
        if report is not None:
            enriched["violation_report"] = report.model_dump(mode="json")
        raw = self.provider.complete(
            load_prompt(stage, self.config.prompt_dir),
            _payload_bytes(enriched), tag)
        return parse_structural(raw, tag)

    # -- framework ----------------------------------------------------------------

    def generate_framework(self, theme: str, mode: StoryMode,
                           constraints: BasicConstraints,
                           avatar: ChildAvatar,
                           job: Optional[GenerationJob] = None) -> StoryFramework:
        check_invariants(avatar)
        framework_id = self.ids.new("fw")
        payload = {
            "task": "story_framework",
            "framework_id": framework_id,
            "theme": theme,
            "story_mode": mode.value,
            "avatar": canonical_dict(avatar),
            "basic_constraints": canonical_dict(constraints),
        }
        job = job or self._new_job(JobStage.FRAMEWORK)

        def call(report, attempt):
            draft = self._complete("framework", payload, "framework",
                                   report, attempt)
            return draft.model_copy(update={"framework_id": framework_id})

        framework, _ = run_with_validation(
            call, validate_framework, self.config.max_retries, job)
        job.result_id = framework.framework_id
        return framework

    # -- recap -----------------------------------------------------------------------

    def summarize(self, previous_episodes: Sequence[Episode],
                  framework: Optional[StoryFramework] = None,
                  job: Optional[GenerationJob] = None) -> RecapAndGoal:
        if not previous_episodes:
            raise ValueError("summarize needs at least one previous episode")
        latest = list(previous_episodes)[-3:]
        payload = {
            "task": "summarize",
            "previous_blocks": [canonical_dict(ep) for ep in latest],
            "story_framework": canonical_dict(framework) if framework else None,
        }
        job = job or self._new_job(JobStage.SUMMARIZE)

        def validator(recap: RecapAndGoal) -> ValidationReport:
            texts = [
                ("micro_goal", recap.micro_goal),
                ("recap_cn", recap.recap_cn),
                ("next_episode_seed", recap.continuity_hooks.next_episode_seed),
            ]
            return validate_invariants(recap).merged(
                validate_vocabulary(texts, self.config.stage_label_denylist,
                                    rule="behavioral-stage vocabulary"))

        recap, _ = run_with_validation(
            lambda report, attempt: self._complete(
                "summarize", payload, "recap", report, attempt),
            validator, self.config.max_retries, job)
        return recap

    # -- episode ------------------------------------------------------------------------

    def _episode_gate(self, constraints: BasicConstraints, food: str,
                      must_follow: bool) -> Callable[[Episode], ValidationReport]:
        def validator(episode: Episode) -> ValidationReport:
            report = validate_episode(episode, constraints)
            page_texts = [(p.page_id, p.page_text_cn) for p in episode.pages]
            report = report.merged(validate_vocabulary(
                page_texts, self.config.first_person_denylist,
                rule="first-person narration"))
            if must_follow:
                extra: list[Violation] = []
                if not any(food in p.page_text_cn for p in episode.pages):
                    extra.append(Violation(
                        code=ViolationCode.FOOD_MENTION_MISSING,
                        detail=f"required food {food!r} missing from page texts"))
                if not any(food in pkg.image_prompt_suffix_en
                           for pkg in episode.page_image_prompt_packages):
                    extra.append(Violation(
                        code=ViolationCode.FOOD_MENTION_MISSING,
                        detail=f"required food {food!r} missing from image "
                               f"prompt suffixes"))
                report = report.merged(ValidationReport.from_violations(extra))
            return report

        return validator

    def generate_episode(self, framework: StoryFramework,
                         recap: Optional[RecapAndGoal],
                         target_food: str,
                         avatar: ChildAvatar,
                         constraints: BasicConstraints,
                         overrides: EpisodeOverrides = EpisodeOverrides(),
                         regeneration_note: str | None = None,
                         regeneration_count: int = 0,
                         job: Optional[GenerationJob] = None) -> Episode:
        fw_report = validate_framework(framework)
        if not fw_report.ok:
            raise InvariantViolation(
                [f"framework invalid: {fw_report.summary()}"])
        if not target_food.strip():
            raise ValueError("target_food must be non-empty")
        episode_id = self.ids.new("ep")
        payload = {
            "task": "episode",
            "framework": canonical_dict(framework),
            "recap_and_goal": canonical_dict(recap) if recap else None,
            "basic_constraints": canonical_dict(constraints),
            "avatar_state": {
                "child_avatar": canonical_dict(avatar),
                "temporary_props": list(overrides.temporary_props),
            },
            "run_config": {
                "effective_inputs": {
                    "food_override_hint": target_food,
                    "food_override_must_follow":
                        overrides.food_override_must_follow,
                },
            },
            "regeneration_note": regeneration_note,
            "regeneration_count": regeneration_count,
        }
        job = job or self._new_job(JobStage.EPISODE)

        def call(report, attempt) -> Episode:
            draft: EpisodeDraft = self._complete(
                "episode", payload, "episode_draft", report, attempt)
            return Episode(
                episode_id=episode_id,
                pages=draft.pages,
                visual_canon=draft.visual_canon,
                page_image_prompt_packages=draft.page_image_prompt_packages,
                target_food=target_food,
                framework_id=framework.framework_id,
                kind=EpisodeKind.MAIN,
            )

        episode, _ = run_with_validation(
            call,
            self._episode_gate(constraints, target_food,
                               overrides.food_override_must_follow),
            self.config.max_retries, job)
        job.result_id = episode.episode_id
        return episode

    # -- ending -------------------------------------------------------------------------

    def _ending_gate(self, main_episode: Episode, constraints: BasicConstraints,
                     food: str) -> Callable[[Episode], ValidationReport]:
        main_ids = {p.page_id for p in main_episode.pages}
        main_keys = {
            p.interaction.event_key for p in main_episode.pages
            if p.interaction is not None and p.interaction.event_key
        }
        next_no = main_episode.pages[-1].page_no + 1

        def validator(ending: Episode) -> ValidationReport:
            report = validate_episode(ending, constraints)
            extra: list[Violation] = []
            for page in ending.pages:
                if page.page_id in main_ids:
                    extra.append(Violation(
                        code=ViolationCode.DANGLING_PAGE_REFERENCE,
                        page_id=page.page_id,
                        detail="ending page id collides with the main episode"))
                i = page.interaction
                if i is not None and i.event_key and i.event_key in main_keys:
                    extra.append(Violation(
                        code=ViolationCode.DUPLICATE_EVENT_KEY,
                        page_id=page.page_id,
                        detail=f"event_key {i.event_key!r} already used in the "
                               f"main episode"))
            if ending.pages and ending.pages[0].page_no != next_no:
                extra.append(Violation(
                    code=ViolationCode.TYPE_INVARIANT_VIOLATION,
                    page_id=ending.pages[0].page_id,
                    detail=f"ending must continue numbering at page {next_no}"))
            if not any(food in p.page_text_cn for p in ending.pages):
                extra.append(Violation(
                    code=ViolationCode.FOOD_MENTION_MISSING,
                    detail=f"ending must keep using the food {food!r}"))
            page_texts = [(p.page_id, p.page_text_cn) for p in ending.pages]
            return report.merged(
                ValidationReport.from_violations(extra),
                validate_vocabulary(page_texts,
                                    self.config.first_person_denylist,
                                    rule="first-person narration"))

        return validator

    def generate_ending(self, main_episode: Episode, record: PostMealRecord,
                        summary: Optional[RecapAndGoal],
                        constraints: BasicConstraints,
                        avatar: Optional[ChildAvatar] = None,
                        job: Optional[GenerationJob] = None) -> Episode:
        check_invariants(record)
        if record.target_food != main_episode.target_food:
            raise FoodMismatch(
                f"record food {record.target_food!r} does not match episode "
                f"food {main_episode.target_food!r}")
        variant = select_ending_variant(record.self_rating)
        episode_id = self.ids.new("ep")
        payload = {
            "task": "ending",
            "food_name": record.target_food,
            "score": record.self_rating,
            "content": record.self_description,
            "variant": variant.value,
            "summary": canonical_dict(summary) if summary else None,
            "main_episode": canonical_dict(main_episode),
            "basic_constraints": canonical_dict(constraints),
            "nickname": avatar.nickname if avatar else "小主角",
            "world_concept": main_episode.visual_canon.world_lock_prompt_en,
        }
        job = job or self._new_job(JobStage.ENDING)

        def call(report, attempt) -> Episode:
            draft: EpisodeDraft = self._complete(
                "ending", payload, "episode_draft", report, attempt)
            return Episode(
                episode_id=episode_id,
                pages=draft.pages,
                visual_canon=draft.visual_canon,
                page_image_prompt_packages=draft.page_image_prompt_packages,
                target_food=record.target_food,
                framework_id=main_episode.framework_id,
                kind=EpisodeKind.ENDING_EXTENSION,
            )

        ending, _ = run_with_validation(
            call, self._ending_gate(main_episode, constraints,
                                    record.target_food),
            self.config.max_retries, job)
        job.result_id = ending.episode_id
        return ending

    # -- feedback -----------------------------------------------------------------------

    def generate_feedback(self, record: PostMealRecord, avatar: ChildAvatar,
                          recent_phrases: Sequence[str], seed: int,
                          job: Optional[GenerationJob] = None) -> FeedbackMessage:
        check_invariants(record)
        check_invariants(avatar)
        signal = derive_description_signal(
            record.self_description,
            self.config.progress_lexicon, self.config.avoidance_lexicon)
        basic_type = classify_feedback_type(record, signal)
        payload = {
            "task": "feedback",
            "nickname": avatar.nickname,
            "picky_food": record.target_food,
            "self_rating": record.self_rating,
            "self_description": record.self_description,
            "recent_phrases": list(recent_phrases),
            "seed": seed,
            "basic_type": basic_type.value,
        }
        job = job or self._new_job(JobStage.FEEDBACK)

        def validator(draft: FeedbackDraft) -> ValidationReport:
            return validate_feedback_text(
                draft.text_cn, avatar.nickname, record.target_food,
                recent_phrases)

        draft, _ = run_with_validation(
            lambda report, attempt: self._complete(
                "feedback", payload, "feedback_draft", report, attempt),
            validator, self.config.max_retries, job)
        return FeedbackMessage(text_cn=draft.text_cn, basic_type=basic_type,
                               record_id=record.record_id)

    # -- media --------------------------------------------------------------------------

    def generate_page_images(self, episode: Episode,
                             avatar: Optional[ChildAvatar] = None) -> dict[str, str]:
        """One illustration per page; returns page_id -> asset id."""
        reference = avatar.base_reference_image if avatar else None
        assets: dict[str, str] = {}
        for package in episode.page_image_prompt_packages:
            prompt = assemble_image_prompt(episode.visual_canon, package)
            assets[package.page_id] = self.provider.generate_image(
                prompt, reference)
        return assets

    def generate_page_audio(self, episode: Episode) -> dict[str, str]:
        """Read-aloud track per page; returns page_id -> asset id."""
        return {
            page.page_id: self.provider.synthesize_speech(page.page_text_cn)
            for page in episode.pages
        }
