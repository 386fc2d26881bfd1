"""Shared domain types and the canonical wire format.

Models here do *structural* validation only (field names, basic types, enum
membership, closed schemas). Per-type content invariants are applied by
``check_invariants`` and enforced at the serialization boundary, so invalid
values can still be constructed in memory — the constraint validator and the
mutation tests depend on that.

The canonical format is key-sorted UTF-8 JSON with explicit nulls; two
serializations of equal values are byte-identical.
"""

from __future__ import annotations

import json
import re
import uuid
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import InvariantViolation, ParseError, SchemaViolation

EVENT_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")
PLACEHOLDER_RE = re.compile(r"\{[^{}]*\}|<[^<>]*>")

# Sentence-terminal marks used for "one sentence" and "first sentence" rules.
SENTENCE_TERMINALS = "。！？.!?"


class _Model(BaseModel):
    """Frozen, closed-schema base: unknown keys are rejected everywhere."""

    model_config = ConfigDict(frozen=True, extra="forbid")


# --- enums ---------------------------------------------------------------------

class Gender(str, Enum):
    GIRL = "girl"
    BOY = "boy"
    UNSPECIFIED = "unspecified"


class StoryMode(str, Enum):
    REALISTIC_EVERYDAY = "realistic_everyday"
    LIGHT_FANTASY_FAMILIAR = "light_fantasy_familiar"
    HYBRID_EXPOSITORY_NARRATIVE = "hybrid_expository_narrative"
    JOURNEY_DISCOVERY_FRAMEWORK = "journey_discovery_framework"


class Language(str, Enum):
    ZH_CN = "zh-CN"


class InteractionType(str, Enum):
    NONE = "none"
    TAP = "tap"
    DRAG = "drag"
    CHOICE = "choice"
    MIMIC = "mimic"
    RECORD_VOICE = "record_voice"


MICRO_INTERACTION_TYPES = frozenset(
    {InteractionType.TAP, InteractionType.DRAG, InteractionType.MIMIC}
)


class EpisodeKind(str, Enum):
    MAIN = "main"
    ENDING_EXTENSION = "ending_extension"


class FeedbackType(str, Enum):
    PRAISE = "praise"
    ENCOURAGE = "encourage"


class SpecialCircumstance(str, Enum):
    ILLNESS = "illness"
    POOR_SLEEP = "poor_sleep"
    OUTSIDE_HOME = "outside_home"
    VISITORS = "visitors"
    TIME_PRESSURE = "time_pressure"
    OTHER = "other"


# --- avatar and constraints ------------------------------------------------------

class ChildAvatar(_Model):
    avatar_id: str
    nickname: str
    gender: Gender = Gender.UNSPECIFIED
    clothing: str = ""
    accessories: tuple[str, ...] = ()
    base_reference_image: Optional[str] = None


class BasicConstraints(_Model):
    """Hard limits for one episode run.

    Totals default to the per-page band times the page count; pass them
    explicitly to decouple. ``record_voice_max`` and ``choice_max`` are fixed
    at 1 by contract.
    """

    episode_page_count: int = 12
    ending_page_count: int = 4
    han_chars_per_page_min: int = 60
    han_chars_per_page_max: int = 80
    han_chars_total_min: Optional[int] = None
    han_chars_total_max: Optional[int] = None
    micro_interactions_max_per_episode: int = 4
    record_voice_max: int = 1
    choice_max: int = 1
    language: Language = Language.ZH_CN

    def model_post_init(self, __context) -> None:
        # Derive total band from per-page band x page count when not given.
        if self.han_chars_total_min is None:
            object.__setattr__(
                self, "han_chars_total_min",
                self.han_chars_per_page_min * self.episode_page_count,
            )
        if self.han_chars_total_max is None:
            object.__setattr__(
                self, "han_chars_total_max",
                self.han_chars_per_page_max * self.episode_page_count,
            )

    def total_band_for_pages(self, page_count: int) -> tuple[int, int]:
        """Total Han band for an episode of ``page_count`` pages.

        For the configured main page count the explicit totals apply;
        any other length (ending extensions) derives from the per-page band.
        """
        if page_count == self.episode_page_count:
            return (self.han_chars_total_min, self.han_chars_total_max)
        return (
            self.han_chars_per_page_min * page_count,
            self.han_chars_per_page_max * page_count,
        )


# --- story framework --------------------------------------------------------------

class WorldSetting(_Model):
    concept: str
    core_locations: tuple[str, ...]


class RecurringElements(_Model):
    recurring_object: str
    recurring_phrase: str
    opening_ritual: str
    closing_hook_style: str
    episode_trigger_style: str


class HelperRole(_Model):
    name: str
    role: str


class StoryFramework(_Model):
    framework_id: str
    story_mode: StoryMode
    world_setting: WorldSetting
    world_rules: tuple[str, ...]
    recurring_elements: RecurringElements
    helper_roles: tuple[HelperRole, ...]
    child_role: str


# --- recap ---------------------------------------------------------------------------

class ContinuityHooks(_Model):
    carry_over_anchors: tuple[str, ...]
    next_episode_seed: str


class RecapAndGoal(_Model):
    recap_cn: str
    micro_goal: str
    key_story_elements: tuple[str, ...]
    continuity_hooks: ContinuityHooks


# --- episode --------------------------------------------------------------------------

class InteractionExt(_Model):
    encouragement: str = ""


class Interaction(_Model):
    type: InteractionType
    instruction: str = ""
    event_key: Optional[str] = None
    ext: InteractionExt = InteractionExt()


class BranchChoice(_Model):
    choice_id: str
    label_cn: str
    next_page_id: str


class Page(_Model):
    page_no: int
    page_id: str
    page_text_cn: str
    next_page_id: Optional[str]
    interaction: Optional[Interaction] = None
    branch_choices: tuple[BranchChoice, ...] = ()

    def interaction_type(self) -> InteractionType:
        return self.interaction.type if self.interaction else InteractionType.NONE


class VisualCanon(_Model):
    global_visual_prompt_prefix_en: str
    character_lock_prompt_en: str
    world_lock_prompt_en: str
    negative_prompt_en: str


class PagePromptPackage(_Model):
    page_no: int
    page_id: str
    image_prompt_suffix_en: str


class Episode(_Model):
    episode_id: str
    pages: tuple[Page, ...]
    visual_canon: VisualCanon
    page_image_prompt_packages: tuple[PagePromptPackage, ...]
    target_food: str
    framework_id: str
    kind: EpisodeKind = EpisodeKind.MAIN


class EpisodeDraft(_Model):
    """Provider wire shape for episode content: exactly these three keys."""

    pages: tuple[Page, ...]
    visual_canon: VisualCanon
    page_image_prompt_packages: tuple[PagePromptPackage, ...]


# --- post-meal record and feedback ---------------------------------------------------

class PostMealRecord(_Model):
    record_id: str
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
    timestamp: Optional[float] = None


class FeedbackMessage(_Model):
    text_cn: str
    basic_type: FeedbackType
    record_id: str


class FeedbackDraft(_Model):
    """Provider wire shape for feedback: just the message text."""

    text_cn: str


# --- invariants ------------------------------------------------------------------------


def _single_sentence(text: str) -> bool:
    """True when text holds exactly one sentence: terminal marks may only trail."""
    stripped = text.rstrip(SENTENCE_TERMINALS)
    return bool(stripped.strip()) and not any(
        mark in stripped for mark in SENTENCE_TERMINALS
    )


def _framework_strings(fw: StoryFramework) -> list[str]:
    out = [fw.child_role, fw.world_setting.concept]
    out.extend(fw.world_setting.core_locations)
    out.extend(fw.world_rules)
    re_ = fw.recurring_elements
    out.extend([re_.recurring_object, re_.recurring_phrase, re_.opening_ritual,
                re_.closing_hook_style, re_.episode_trigger_style])
    for h in fw.helper_roles:
        out.extend([h.name, h.role])
    return out


def _check_avatar(v: ChildAvatar, problems: list[str]) -> None:
    if not v.nickname.strip():
        problems.append("nickname must be non-empty after trimming whitespace")


def _check_constraints(v: BasicConstraints, problems: list[str]) -> None:
    if v.episode_page_count < 2:
        problems.append("episode_page_count must be >= 2")
    if v.ending_page_count < 1:
        problems.append("ending_page_count must be >= 1")
    if v.han_chars_per_page_min < 0:
        problems.append("han_chars_per_page_min must be >= 0")
    if v.han_chars_per_page_max < 1:
        problems.append("han_chars_per_page_max must be >= 1")
    if v.han_chars_per_page_min > v.han_chars_per_page_max:
        problems.append("per-page min exceeds per-page max")
    if v.han_chars_total_min > v.han_chars_total_max:
        problems.append("total min exceeds total max")
    if v.han_chars_total_min > v.han_chars_per_page_max * v.episode_page_count:
        problems.append("total min unsatisfiable under per-page max")
    if v.han_chars_total_max < v.han_chars_per_page_min * v.episode_page_count:
        problems.append("total max unsatisfiable under per-page min")
    if v.micro_interactions_max_per_episode < 0:
        problems.append("micro_interactions_max_per_episode must be >= 0")
    if v.record_voice_max != 1:
        problems.append("record_voice_max is fixed at 1")
    if v.choice_max != 1:
        problems.append("choice_max is fixed at 1")


def _check_framework(v: StoryFramework, problems: list[str]) -> None:
    locations = v.world_setting.core_locations
    if len(set(locations)) < 4:
        problems.append("world_setting.core_locations needs >= 4 distinct entries")
    if not v.recurring_elements.recurring_phrase.strip():
        problems.append("recurring_phrase must be non-empty")
    for s in _framework_strings(v):
        if PLACEHOLDER_RE.search(s):
            problems.append(f"placeholder token in framework text: {s!r}")
            break


def _check_recap(v: RecapAndGoal, problems: list[str]) -> None:
    if not _single_sentence(v.continuity_hooks.next_episode_seed):
        problems.append("next_episode_seed must be exactly one sentence")
    for anchor in v.key_story_elements:
        if not anchor.strip():
            problems.append("key_story_elements entries must be non-empty")
            break
    for anchor in v.continuity_hooks.carry_over_anchors:
        if not anchor.strip():
            problems.append("carry_over_anchors entries must be non-empty")
            break


def _check_interaction(v: Interaction, problems: list[str]) -> None:
    if v.type is InteractionType.NONE:
        if v.event_key is not None:
            problems.append("event_key must be absent when interaction type is none")
    else:
        if v.event_key is None:
            problems.append(f"event_key required for interaction type {v.type.value}")
        elif not EVENT_KEY_RE.match(v.event_key):
            problems.append(f"event_key {v.event_key!r} is not snake_case")


def _check_page(v: Page, problems: list[str]) -> None:
    if v.page_no < 1:
        problems.append("page_no must be >= 1")
    if not v.page_id:
        problems.append("page_id must be non-empty")
    if v.interaction is not None:
        _check_interaction(v.interaction, problems)
    is_choice = v.interaction_type() is InteractionType.CHOICE
    if is_choice and len(v.branch_choices) != 2:
        problems.append(
            f"page {v.page_id}: choice pages need exactly 2 branch_choices, "
            f"got {len(v.branch_choices)}"
        )
    if not is_choice and v.branch_choices:
        problems.append(f"page {v.page_id}: branch_choices only allowed on choice pages")


def _check_episode_like(pages: tuple[Page, ...],
                        packages: tuple[PagePromptPackage, ...],
                        problems: list[str]) -> None:
    if not pages:
        problems.append("episode must have at least one page")
        return
    for p in pages:
        _check_page(p, problems)
    ids = [p.page_id for p in pages]
    if len(set(ids)) != len(ids):
        problems.append("page_id values must be unique within an episode")
    if pages[-1].next_page_id is not None:
        problems.append("final page must have next_page_id = null")
    seen_keys: set[str] = set()
    for p in pages:
        i = p.interaction
        if i is not None and i.type is not InteractionType.NONE and i.event_key:
            if i.event_key in seen_keys:
                problems.append(f"duplicate event_key {i.event_key!r}")
            seen_keys.add(i.event_key)
    page_ids = set(ids)
    package_ids = [pkg.page_id for pkg in packages]
    if len(set(package_ids)) != len(package_ids):
        problems.append("duplicate prompt package page_id")
    missing = page_ids - set(package_ids)
    orphans = set(package_ids) - page_ids
    if missing:
        problems.append(f"pages without prompt package: {sorted(missing)}")
    if orphans:
        problems.append(f"prompt packages without page: {sorted(orphans)}")
    by_id = {p.page_id: p for p in pages}
    for pkg in packages:
        page = by_id.get(pkg.page_id)
        if page is not None and page.page_no != pkg.page_no:
            problems.append(
                f"prompt package for {pkg.page_id} has page_no {pkg.page_no}, "
                f"page says {page.page_no}"
            )


def _check_episode(v: Episode, problems: list[str]) -> None:
    if not v.target_food.strip():
        problems.append("target_food must be non-empty")
    _check_episode_like(v.pages, v.page_image_prompt_packages, problems)


def _check_episode_draft(v: EpisodeDraft, problems: list[str]) -> None:
    _check_episode_like(v.pages, v.page_image_prompt_packages, problems)


_SCALES_1_7 = ("baseline_try", "try_level", "intake", "resistance",
               "emotion", "parent_pressure", "helpfulness")


def _check_record(v: PostMealRecord, problems: list[str]) -> None:
    if not v.target_food.strip():
        problems.append("target_food must be non-empty")
    for field in _SCALES_1_7:
        value = getattr(v, field)
        if not 1 <= value <= 7:
            problems.append(f"{field} must be within 1-7, got {value}")
    if not 1 <= v.self_rating <= 10:
        problems.append(f"self_rating must be within 1-10, got {v.self_rating}")


def _check_feedback(v: FeedbackMessage, problems: list[str]) -> None:
    if not v.text_cn.strip():
        problems.append("text_cn must be non-empty")
    if not v.record_id:
        problems.append("record_id must be non-empty")


_CHECKERS = {
    ChildAvatar: _check_avatar,
    BasicConstraints: _check_constraints,
    StoryFramework: _check_framework,
    RecapAndGoal: _check_recap,
    Interaction: _check_interaction,
    Page: _check_page,
    Episode: _check_episode,
    EpisodeDraft: _check_episode_draft,
    PostMealRecord: _check_record,
    FeedbackMessage: _check_feedback,
}


def invariant_problems(value: BaseModel) -> list[str]:
    """All invariant breaches for a structurally valid domain value."""
    problems: list[str] = []
    checker = _CHECKERS.get(type(value))
    if checker is not None:
        checker(value, problems)
    return problems


def check_invariants(value: BaseModel) -> None:
    """Raise InvariantViolation when the value breaks its type invariants."""
    problems = invariant_problems(value)
    if problems:
        raise InvariantViolation(problems)


def register_invariant_checker(model_type: type, checker) -> None:
    """Hook for other modules (sessions) to register their own invariants."""
    _CHECKERS[model_type] = checker


# --- tag registry and canonical wire format ----------------------------------------

_TAGS: dict[str, type[BaseModel]] = {
    "avatar": ChildAvatar,
    "constraints": BasicConstraints,
    "framework": StoryFramework,
    "recap": RecapAndGoal,
    "page": Page,
    "interaction": Interaction,
    "episode": Episode,
    "episode_draft": EpisodeDraft,
    "record": PostMealRecord,
    "feedback": FeedbackMessage,
    "feedback_draft": FeedbackDraft,
}


def register_tag(tag: str, model_type: type[BaseModel]) -> None:
    _TAGS[tag] = model_type


def tag_for(value: BaseModel) -> str:
    for tag, model_type in _TAGS.items():
        if type(value) is model_type:
            return tag
    raise KeyError(f"no tag registered for {type(value).__name__}")


def model_for(tag: str) -> type[BaseModel]:
    try:
        return _TAGS[tag]
    except KeyError:
        raise SchemaViolation(f"unknown type tag: {tag}") from None


def canonical_dict(value: BaseModel) -> dict:
    """JSON-ready dict with explicit nulls, suitable for canonical dumping."""
    return value.model_dump(mode="json")


def canonical_serialize(value: BaseModel) -> bytes:
    """Deterministic key-sorted UTF-8 JSON; raises on invariant breaches."""
    check_invariants(value)
    return json.dumps(
        canonical_dict(value), sort_keys=True, ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")


def parse_structural(data: bytes | str | dict, tag: str) -> BaseModel:
    """Parse into the tagged model without applying invariant checks.

    Raises ParseError for malformed input and SchemaViolation for
    unknown/missing/badly typed fields.
    """
    model_type = model_for(tag)
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"payload is not UTF-8: {exc}") from exc
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaViolation(f"{tag} payload must be an object")
    try:
        return model_type.model_validate(data)
    except ValidationError as exc:
        details = "; ".join(
            f"{'.'.join(str(loc) for loc in err['loc'])}: {err['msg']}"
            for err in exc.errors()
        )
        raise SchemaViolation(f"{tag} payload rejected: {details}") from exc


def canonical_parse(data: bytes | str | dict, tag: str) -> BaseModel:
    """Strict parse: structure plus invariants; round-trips canonical_serialize."""
    value = parse_structural(data, tag)
    check_invariants(value)
    return value


# --- id generation --------------------------------------------------------------------

class IdGenerator:
    """Produces ids for new values; sequential when seeded, random otherwise.

    A seeded generator makes demo transcripts and store contents reproducible.
    """

    def __init__(self, seed: int | None = None):
        self._seeded = seed is not None
        self._counters: dict[str, int] = {}

    def new(self, kind: str) -> str:
        if not self._seeded:
            return f"{kind}-{uuid.uuid4().hex[:12]}"
        n = self._counters.get(kind, 0) + 1
        self._counters[kind] = n
        return f"{kind}-{n:04d}"
