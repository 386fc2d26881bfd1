"""Deterministic rule engine over generated content.

Every check is a pure function from immutable inputs to a ValidationReport;
reports aggregate all violations instead of stopping at the first hit, so a
regeneration loop can feed complete repair context back to the provider.

The violation-code catalog is closed: nothing outside ``ViolationCode`` may
appear in a report.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, Optional, Sequence

import regex as _regex
from pydantic import BaseModel, ConfigDict

from .domain import (
    BasicConstraints,
    Episode,
    EpisodeKind,
    EVENT_KEY_RE,
    InteractionType,
    MICRO_INTERACTION_TYPES,
    Page,
    PLACEHOLDER_RE,
    StoryFramework,
    invariant_problems,
)
from .hanchars import count_han_chars

__all__ = [
    "ViolationCode",
    "Violation",
    "ValidationReport",
    "count_han_chars",
    "validate_page_lengths",
    "validate_interaction_budget",
    "validate_page_graph",
    "validate_feedback_text",
    "validate_framework",
    "validate_vocabulary",
    "validate_invariants",
    "validate_episode",
]

_LATIN = _regex.compile(r"\p{Latin}")
_EMOJI = _regex.compile(r"\p{Extended_Pictographic}")

# First-sentence delimiters for feedback checks (zh sentence-terminal marks).
_FEEDBACK_SENTENCE_MARKS = "。！？"
_OPENING_PREFIX_LEN = 8


class ViolationCode(str, Enum):
    PAGE_COUNT_MISMATCH = "PageCountMismatch"
    PAGE_TOO_SHORT = "PageTooShort"
    PAGE_TOO_LONG = "PageTooLong"
    TOTAL_LENGTH_OUT_OF_BAND = "TotalLengthOutOfBand"
    MICRO_INTERACTION_BUDGET_EXCEEDED = "MicroInteractionBudgetExceeded"
    CHOICE_BUDGET_EXCEEDED = "ChoiceBudgetExceeded"
    RECORD_VOICE_BUDGET_EXCEEDED = "RecordVoiceBudgetExceeded"
    DUPLICATE_EVENT_KEY = "DuplicateEventKey"
    MALFORMED_EVENT_KEY = "MalformedEventKey"
    DANGLING_PAGE_REFERENCE = "DanglingPageReference"
    FINAL_PAGE_NOT_TERMINAL = "FinalPageNotTerminal"
    UNREACHABLE_PAGE = "UnreachablePage"
    CYCLE_DETECTED = "CycleDetected"
    BRANCH_MERGE_TOO_FAR = "BranchMergeTooFar"
    BRANCH_COUNT_VIOLATION = "BranchCountViolation"
    PROMPT_PACKAGE_MISSING = "PromptPackageMissing"
    PROMPT_PACKAGE_ORPHAN = "PromptPackageOrphan"
    LENGTH_VIOLATION = "LengthViolation"
    NICKNAME_COUNT_VIOLATION = "NicknameCountViolation"
    FOOD_MENTION_MISSING = "FoodMentionMissing"
    OPENING_CONTAINS_IDENTITY = "OpeningContainsIdentity"
    RECENT_PHRASE_PREFIX_COLLISION = "RecentPhrasePrefixCollision"
    FORBIDDEN_SCRIPT_DETECTED = "ForbiddenScriptDetected"
    TOO_FEW_LOCATIONS = "TooFewLocations"
    PLACEHOLDER_DETECTED = "PlaceholderDetected"
    EMPTY_RECURRING_PHRASE = "EmptyRecurringPhrase"
    FORBIDDEN_VOCABULARY = "ForbiddenVocabulary"
    TYPE_INVARIANT_VIOLATION = "TypeInvariantViolation"


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    code: ViolationCode
    page_id: Optional[str] = None
    detail: str = ""


class ValidationReport(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    ok: bool
    violations: tuple[Violation, ...] = ()

    @classmethod
    def from_violations(cls, violations: Iterable[Violation]) -> "ValidationReport":
        ordered = tuple(sorted(
            violations, key=lambda v: (v.code.value, v.page_id or "", v.detail)
        ))
        return cls(ok=not ordered, violations=ordered)

    @classmethod
    def passing(cls) -> "ValidationReport":
        return cls(ok=True, violations=())

    def merged(self, *others: "ValidationReport") -> "ValidationReport":
        vs: list[Violation] = list(self.violations)
        for other in others:
            vs.extend(other.violations)
        return ValidationReport.from_violations(vs)

    def codes(self) -> set[ViolationCode]:
        return {v.code for v in self.violations}

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(
            f"{v.code.value}" + (f"[{v.page_id}]" if v.page_id else "") +
            (f": {v.detail}" if v.detail else "")
            for v in self.violations
        )


def _v(code: ViolationCode, page_id: str | None = None, detail: str = "") -> Violation:
    return Violation(code=code, page_id=page_id, detail=detail)


# --- text length ------------------------------------------------------------------

def validate_page_lengths(episode: Episode,
                          constraints: BasicConstraints) -> ValidationReport:
    """Per-page and whole-episode Han character bands."""
    violations: list[Violation] = []
    lo, hi = constraints.han_chars_per_page_min, constraints.han_chars_per_page_max
    total = 0
    for page in episode.pages:
        n = count_han_chars(page.page_text_cn)
        total += n
        if n < lo:
            violations.append(_v(
                ViolationCode.PAGE_TOO_SHORT, page.page_id,
                f"{n} Han chars, minimum {lo}"))
        elif n > hi:
            violations.append(_v(
                ViolationCode.PAGE_TOO_LONG, page.page_id,
                f"{n} Han chars, maximum {hi}"))
    expected_pages = (constraints.episode_page_count
                      if episode.kind is EpisodeKind.MAIN
                      else constraints.ending_page_count)
    t_lo, t_hi = constraints.total_band_for_pages(expected_pages)
    if not t_lo <= total <= t_hi:
        violations.append(_v(
            ViolationCode.TOTAL_LENGTH_OUT_OF_BAND, None,
            f"total {total} Han chars, band {t_lo}-{t_hi}"))
    return ValidationReport.from_violations(violations)


# --- interaction budget --------------------------------------------------------------

def _budgets_for(episode: Episode, constraints: BasicConstraints) -> tuple[int, int, int]:
    """(micro, choice, record_voice) caps. Ending extensions stay low-interaction:
    at most one micro-interaction and no choice or voice recording."""
    if episode.kind is EpisodeKind.ENDING_EXTENSION:
        return 1, 0, 0
    return (constraints.micro_interactions_max_per_episode,
            constraints.choice_max, constraints.record_voice_max)


def validate_interaction_budget(episode: Episode,
                                constraints: BasicConstraints) -> ValidationReport:
    """Caps on tap/drag/mimic, choice, and record_voice pages, plus event keys.

    choice and record_voice never consume the tap/drag/mimic budget.
    """
    violations: list[Violation] = []
    micro_max, choice_max, voice_max = _budgets_for(episode, constraints)
    micro = choice = voice = 0
    seen_keys: dict[str, str] = {}
    for page in episode.pages:
        interaction = page.interaction
        itype = page.interaction_type()
        if itype is InteractionType.NONE:
            if interaction is not None and interaction.event_key is not None:
                violations.append(_v(
                    ViolationCode.MALFORMED_EVENT_KEY, page.page_id,
                    "event_key present on a non-interactive page"))
            continue
        if itype in MICRO_INTERACTION_TYPES:
            micro += 1
        elif itype is InteractionType.CHOICE:
            choice += 1
        elif itype is InteractionType.RECORD_VOICE:
            voice += 1
        key = interaction.event_key
        if key is None or not EVENT_KEY_RE.match(key):
            violations.append(_v(
                ViolationCode.MALFORMED_EVENT_KEY, page.page_id,
                f"event_key {key!r} must be snake_case"))
        elif key in seen_keys:
            violations.append(_v(
                ViolationCode.DUPLICATE_EVENT_KEY, page.page_id,
                f"event_key {key!r} already used on {seen_keys[key]}"))
        else:
            seen_keys[key] = page.page_id
    if micro > micro_max:
        violations.append(_v(
            ViolationCode.MICRO_INTERACTION_BUDGET_EXCEEDED, None,
            f"{micro} tap/drag/mimic pages, maximum {micro_max}"))
    if choice > choice_max:
        violations.append(_v(
            ViolationCode.CHOICE_BUDGET_EXCEEDED, None,
            f"{choice} choice pages, maximum {choice_max}"))
    if voice > voice_max:
        violations.append(_v(
            ViolationCode.RECORD_VOICE_BUDGET_EXCEEDED, None,
            f"{voice} record_voice pages, maximum {voice_max}"))
    return ValidationReport.from_violations(violations)


# --- page graph -------------------------------------------------------------------------

def page_successors(page: Page) -> list[str]:
    """Outgoing navigation targets: branch targets first, then next_page_id.

    On a choice page next_page_id is the skip/default path, so it stays a
    real edge. Targets are deduplicated preserving order; nulls dropped.
    """
    out: list[str] = []
    for bc in page.branch_choices:
        if bc.next_page_id not in out:
            out.append(bc.next_page_id)
    if page.next_page_id is not None and page.next_page_id not in out:
        out.append(page.next_page_id)
    return out


def _reachable_from_root(pages: Sequence[Page]) -> set[str]:
    by_id = {p.page_id: p for p in pages}
    seen: set[str] = set()
    stack = [pages[0].page_id]
    while stack:
        pid = stack.pop()
        if pid in seen or pid not in by_id:
            continue
        seen.add(pid)
        stack.extend(page_successors(by_id[pid]))
    return seen


def _has_cycle(pages: Sequence[Page], reachable: set[str]) -> Optional[str]:
    """Return a page id on a cycle within the reachable subgraph, else None."""
    by_id = {p.page_id: p for p in pages}
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {pid: WHITE for pid in reachable}
    for start in (p.page_id for p in pages if p.page_id in reachable):
        if color[start] != WHITE:
            continue
        stack: list[tuple[str, Iterable[str]]] = [
            (start, iter(page_successors(by_id[start])))]
        color[start] = GRAY
        while stack:
            node, successors = stack[-1]
            advanced = False
            for nxt in successors:
                if nxt not in by_id or nxt not in reachable:
                    continue
                state = color.get(nxt, WHITE)
                if state == GRAY:
                    return nxt
                if state == WHITE:
                    color[nxt] = GRAY
                    stack.append((nxt, iter(page_successors(by_id[nxt]))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


def _within_hops(start: str, by_id: dict[str, Page], hops: int) -> set[str]:
    """Page ids reachable from ``start`` in at most ``hops`` edges (start is 0)."""
    frontier = {start}
    seen = {start}
    for _ in range(hops):
        nxt: set[str] = set()
        for pid in frontier:
            page = by_id.get(pid)
            if page is None:
                continue
            for succ in page_successors(page):
                if succ in by_id and succ not in seen:
                    nxt.add(succ)
        seen |= nxt
        frontier = nxt
    return seen


def validate_page_graph(episode: Episode) -> ValidationReport:
    """Structural soundness of the page graph.

    Checks reference integrity, single reachable terminal on the final page,
    whole-graph reachability, acyclicity, branch arity, and the rule that the
    two paths out of a choice reconverge within two hops.
    """
    violations: list[Violation] = []
    pages = episode.pages
    if not pages:
        violations.append(_v(ViolationCode.PAGE_COUNT_MISMATCH, None, "no pages"))
        return ValidationReport.from_violations(violations)
    by_id: dict[str, Page] = {}
    for p in pages:
        by_id.setdefault(p.page_id, p)

    for page in pages:
        targets = [bc.next_page_id for bc in page.branch_choices]
        if page.next_page_id is not None:
            targets.append(page.next_page_id)
        for target in targets:
            if target not in by_id:
                violations.append(_v(
                    ViolationCode.DANGLING_PAGE_REFERENCE, page.page_id,
                    f"references missing page {target!r}"))
        is_choice = page.interaction_type() is InteractionType.CHOICE
        if is_choice and len(page.branch_choices) != 2:
            violations.append(_v(
                ViolationCode.BRANCH_COUNT_VIOLATION, page.page_id,
                f"choice page has {len(page.branch_choices)} branch_choices, needs 2"))
        if not is_choice and page.branch_choices:
            violations.append(_v(
                ViolationCode.BRANCH_COUNT_VIOLATION, page.page_id,
                "branch_choices present without a choice interaction"))

    reachable = _reachable_from_root(pages)

    null_pages = [p for p in pages if p.next_page_id is None]
    final = pages[-1]
    if len(null_pages) != 1:
        violations.append(_v(
            ViolationCode.FINAL_PAGE_NOT_TERMINAL, None,
            f"{len(null_pages)} pages have next_page_id = null, need exactly 1"))
    elif null_pages[0].page_id != final.page_id:
        violations.append(_v(
            ViolationCode.FINAL_PAGE_NOT_TERMINAL, final.page_id,
            f"final page continues to {final.next_page_id!r}"))
    elif final.page_id not in reachable:
        violations.append(_v(
            ViolationCode.FINAL_PAGE_NOT_TERMINAL, final.page_id,
            "terminal page is not reachable from page 1"))

    for page in pages:
        if page.page_id not in reachable:
            violations.append(_v(
                ViolationCode.UNREACHABLE_PAGE, page.page_id,
                "not reachable from page 1"))

    cycle_node = _has_cycle(pages, reachable)
    if cycle_node is not None:
        violations.append(_v(
            ViolationCode.CYCLE_DETECTED, cycle_node, "page graph contains a cycle"))

    for page in pages:
        if page.interaction_type() is not InteractionType.CHOICE:
            continue
        if len(page.branch_choices) != 2:
            continue  # arity already flagged
        a, b = (bc.next_page_id for bc in page.branch_choices)
        if a not in by_id or b not in by_id:
            continue  # dangling already flagged
        if not (_within_hops(a, by_id, 2) & _within_hops(b, by_id, 2)):
            violations.append(_v(
                ViolationCode.BRANCH_MERGE_TOO_FAR, page.page_id,
                "branch paths do not reconverge within 2 pages"))

    return ValidationReport.from_violations(violations)


# --- feedback text ------------------------------------------------------------------------

def _first_sentence(text: str) -> str:
    cut = len(text)
    for mark in _FEEDBACK_SENTENCE_MARKS:
        idx = text.find(mark)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


def validate_feedback_text(text_cn: str, nickname: str, food: str,
                           recent_phrases: Sequence[str] = ()) -> ValidationReport:
    """Post-meal feedback message rules.

    Length cap of 50 Han characters, nickname exactly once, food at least
    once, identity kept out of the opening sentence, a fresh 8-character
    opening versus recent messages, and no Latin or emoji code points.
    """
    violations: list[Violation] = []
    n = count_han_chars(text_cn)
    if n > 50:
        violations.append(_v(
            ViolationCode.LENGTH_VIOLATION, None, f"{n} Han chars, maximum 50"))
    nickname_count = text_cn.count(nickname) if nickname else 0
    if nickname_count != 1:
        violations.append(_v(
            ViolationCode.NICKNAME_COUNT_VIOLATION, None,
            f"nickname appears {nickname_count} times, need exactly 1"))
    if not food or food not in text_cn:
        violations.append(_v(
            ViolationCode.FOOD_MENTION_MISSING, None,
            f"target food {food!r} not mentioned"))
    opening = _first_sentence(text_cn)
    if (nickname and nickname in opening) or (food and food in opening):
        violations.append(_v(
            ViolationCode.OPENING_CONTAINS_IDENTITY, None,
            "first sentence must not contain the nickname or the food"))
    prefix = text_cn[:_OPENING_PREFIX_LEN]
    for phrase in recent_phrases:
        if prefix and phrase[:_OPENING_PREFIX_LEN] == prefix:
            violations.append(_v(
                ViolationCode.RECENT_PHRASE_PREFIX_COLLISION, None,
                f"opening {prefix!r} repeats a recent message"))
            break
    if _LATIN.search(text_cn):
        violations.append(_v(
            ViolationCode.FORBIDDEN_SCRIPT_DETECTED, None,
            "Latin letters are not allowed"))
    if _EMOJI.search(text_cn):
        violations.append(_v(
            ViolationCode.FORBIDDEN_SCRIPT_DETECTED, None,
            "emoji code points are not allowed"))
    return ValidationReport.from_violations(violations)


# --- story framework ------------------------------------------------------------------------

def _framework_text_fields(framework: StoryFramework) -> list[tuple[str, str]]:
    re_ = framework.recurring_elements
    fields = [
        ("world_setting.concept", framework.world_setting.concept),
        ("child_role", framework.child_role),
        ("recurring_elements.recurring_object", re_.recurring_object),
        ("recurring_elements.recurring_phrase", re_.recurring_phrase),
        ("recurring_elements.opening_ritual", re_.opening_ritual),
        ("recurring_elements.closing_hook_style", re_.closing_hook_style),
        ("recurring_elements.episode_trigger_style", re_.episode_trigger_style),
    ]
    fields.extend(
        (f"world_setting.core_locations[{i}]", loc)
        for i, loc in enumerate(framework.world_setting.core_locations))
    fields.extend(
        (f"world_rules[{i}]", rule) for i, rule in enumerate(framework.world_rules))
    for i, helper in enumerate(framework.helper_roles):
        fields.append((f"helper_roles[{i}].name", helper.name))
        fields.append((f"helper_roles[{i}].role", helper.role))
    return fields


def validate_framework(framework: StoryFramework) -> ValidationReport:
    """Reusable series framework rules: location variety, no placeholder
    tokens, and a non-empty recurring phrase."""
    violations: list[Violation] = []
    distinct = set(framework.world_setting.core_locations)
    if len(distinct) < 4:
        violations.append(_v(
            ViolationCode.TOO_FEW_LOCATIONS, None,
            f"{len(distinct)} distinct core locations, need >= 4"))
    for path, value in _framework_text_fields(framework):
        match = PLACEHOLDER_RE.search(value)
        if match:
            violations.append(_v(
                ViolationCode.PLACEHOLDER_DETECTED, None,
                f"{path} contains placeholder {match.group(0)!r}"))
    if not framework.recurring_elements.recurring_phrase.strip():
        violations.append(_v(ViolationCode.EMPTY_RECURRING_PHRASE, None,
                            "recurring_phrase is empty"))
    return ValidationReport.from_violations(violations)


# --- vocabulary and invariants ---------------------------------------------------------------

def validate_vocabulary(texts: Sequence[tuple[str | None, str]],
                        denylist: Sequence[str],
                        rule: str = "denylist") -> ValidationReport:
    """Flag any denylisted term in the given (unit id, text) pairs."""
    violations: list[Violation] = []
    for unit_id, text in texts:
        hits = sorted({term for term in denylist if term and term in text})
        if hits:
            violations.append(_v(
                ViolationCode.FORBIDDEN_VOCABULARY, unit_id,
                f"{rule}: {', '.join(hits)}"))
    return ValidationReport.from_violations(violations)


def validate_invariants(value) -> ValidationReport:
    """Type invariants surfaced as a report, for use inside generation gates."""
    return ValidationReport.from_violations(
        _v(ViolationCode.TYPE_INVARIANT_VIOLATION, None, problem)
        for problem in invariant_problems(value)
    )


# --- whole-episode composition -----------------------------------------------------------------

def _validate_prompt_packages(episode: Episode) -> ValidationReport:
    violations: list[Violation] = []
    page_ids = {p.page_id for p in episode.pages}
    package_ids = {pkg.page_id for pkg in episode.page_image_prompt_packages}
    for page in episode.pages:
        if page.page_id not in package_ids:
            violations.append(_v(
                ViolationCode.PROMPT_PACKAGE_MISSING, page.page_id,
                "no image prompt package for this page"))
    seen: set[str] = set()
    for pkg in episode.page_image_prompt_packages:
        if pkg.page_id not in page_ids:
            violations.append(_v(
                ViolationCode.PROMPT_PACKAGE_ORPHAN, pkg.page_id,
                "prompt package references no page"))
        elif pkg.page_id in seen:
            violations.append(_v(
                ViolationCode.PROMPT_PACKAGE_ORPHAN, pkg.page_id,
                "duplicate prompt package for this page"))
        seen.add(pkg.page_id)
    return ValidationReport.from_violations(violations)


def validate_episode(episode: Episode,
                     constraints: BasicConstraints) -> ValidationReport:
    """All episode-level rules in one aggregated report."""
    expected = (constraints.episode_page_count
                if episode.kind is EpisodeKind.MAIN
                else constraints.ending_page_count)
    count_report = ValidationReport.passing()
    if len(episode.pages) != expected:
        count_report = ValidationReport.from_violations([_v(
            ViolationCode.PAGE_COUNT_MISMATCH, None,
            f"{len(episode.pages)} pages, expected {expected}")])
    return count_report.merged(
        validate_page_lengths(episode, constraints),
        validate_interaction_budget(episode, constraints),
        validate_page_graph(episode),
        _validate_prompt_packages(episode),
    )
