"""Rule-by-rule validator behavior on hand-built content."""

from __future__ import annotations

from storybites.domain import (
    BasicConstraints,
    EpisodeKind,
    HelperRole,
    InteractionType,
    RecurringElements,
    StoryFramework,
    WorldSetting,
)
from storybites.validation import (
    ViolationCode,
    validate_episode,
    validate_feedback_text,
    validate_framework,
    validate_interaction_budget,
    validate_invariants,
    validate_page_lengths,
    validate_vocabulary,
)

from .conftest import (
    episode_from,
    han_text,
    interaction,
    linear_pages,
    standard_episode,
)


def codes(report):
    return {v.code for v in report.violations}


# --- page lengths ------------------------------------------------------------------


def test_lengths_interior_of_band_ok(constraints):
    report = validate_page_lengths(standard_episode(), constraints)
    assert report.ok


def test_length_one_short_page_flagged(constraints):
    pages = linear_pages(12)
    pages[3] = pages[3].model_copy(update={"page_text_cn": han_text(59)})
    report = validate_page_lengths(episode_from(pages), constraints)
    assert codes(report) == {ViolationCode.PAGE_TOO_SHORT}
    assert report.violations[0].page_id == "p04"


def test_length_reconfigured_band(constraints):
    wide = BasicConstraints(han_chars_per_page_min=80,
                            han_chars_per_page_max=100)
    pages = linear_pages(12, text_len=90)
    assert validate_page_lengths(episode_from(pages), wide).ok


def test_length_boundaries_inclusive(constraints):
    for n in (60, 80):
        pages = linear_pages(12, text_len=n)
        assert validate_page_lengths(episode_from(pages), constraints).ok


def test_total_band_against_explicit_totals():
    tight = BasicConstraints(han_chars_total_min=800, han_chars_total_max=900)
    pages = linear_pages(12, text_len=62)  # 744 total, every page in band
    report = validate_page_lengths(episode_from(pages), tight)
    assert codes(report) == {ViolationCode.TOTAL_LENGTH_OUT_OF_BAND}


def test_ending_total_band_derives_from_page_count(constraints):
    ending = episode_from(linear_pages(4), kind=EpisodeKind.ENDING_EXTENSION)
    assert validate_page_lengths(ending, constraints).ok


# --- interaction budget ---------------------------------------------------------------


def test_budget_three_micro_plus_choice_plus_voice_ok(constraints):
    ep = standard_episode(micro=3, with_choice=True, with_voice=True)
    assert validate_interaction_budget(ep, constraints).ok


def test_budget_choice_and_voice_do_not_consume_micro(constraints):
    ep = standard_episode(micro=4, with_choice=True, with_voice=True)
    assert validate_interaction_budget(ep, constraints).ok


def test_budget_two_choices_flagged(constraints):
    pages = linear_pages(12)
    from storybites.domain import BranchChoice

    for slot, lanes in ((3, ("p05", "p06")), (7, ("p09", "p10"))):
        idx = slot - 1
        pages[idx] = pages[idx].model_copy(update={
            "interaction": interaction(InteractionType.CHOICE, f"choose_{slot}"),
            "branch_choices": (
                BranchChoice(choice_id="a", label_cn="甲", next_page_id=lanes[0]),
                BranchChoice(choice_id="b", label_cn="乙", next_page_id=lanes[1]),
            ),
            "next_page_id": f"p{slot + 3:02d}",
        })
        lane_target = f"p{slot + 3:02d}"
        for lane in lanes:
            lane_idx = int(lane[1:]) - 1
            pages[lane_idx] = pages[lane_idx].model_copy(
                update={"next_page_id": lane_target})
    report = validate_interaction_budget(episode_from(pages), constraints)
    assert ViolationCode.CHOICE_BUDGET_EXCEEDED in codes(report)


def test_budget_zero_interactions_ok(constraints):
    ep = standard_episode(micro=0, with_choice=False, with_voice=False)
    assert validate_interaction_budget(ep, constraints).ok


def test_budget_micro_exceeded(constraints):
    pages = linear_pages(12)
    for slot in (1, 2, 3, 4, 9):
        pages[slot - 1] = pages[slot - 1].model_copy(update={
            "interaction": interaction(InteractionType.TAP, f"tap_{slot:02d}")})
    report = validate_interaction_budget(episode_from(pages), constraints)
    assert codes(report) == {ViolationCode.MICRO_INTERACTION_BUDGET_EXCEEDED}


def test_budget_duplicate_and_malformed_keys(constraints):
    pages = linear_pages(12)
    pages[0] = pages[0].model_copy(update={
        "interaction": interaction(InteractionType.TAP, "same_key")})
    pages[1] = pages[1].model_copy(update={
        "interaction": interaction(InteractionType.DRAG, "same_key")})
    pages[2] = pages[2].model_copy(update={
        "interaction": interaction(InteractionType.MIMIC, "Bad-Key")})
    report = validate_interaction_budget(episode_from(pages), constraints)
    assert codes(report) == {ViolationCode.DUPLICATE_EVENT_KEY,
                             ViolationCode.MALFORMED_EVENT_KEY}


def test_ending_budget_is_low_interaction(constraints):
    pages = linear_pages(4)
    pages[0] = pages[0].model_copy(update={
        "interaction": interaction(InteractionType.TAP, "tap_a")})
    pages[1] = pages[1].model_copy(update={
        "interaction": interaction(InteractionType.TAP, "tap_b")})
    ending = episode_from(pages, kind=EpisodeKind.ENDING_EXTENSION)
    report = validate_interaction_budget(ending, constraints)
    assert ViolationCode.MICRO_INTERACTION_BUDGET_EXCEEDED in codes(report)


# --- feedback text --------------------------------------------------------------------


def _ok_feedback() -> str:
    # 8-char neutral opening, nickname and food only in sentence two.
    return "今天有个小惊喜。小宝和西兰花碰了碰，真不错。"


def test_feedback_compliant_message():
    report = validate_feedback_text(_ok_feedback(), "小宝", "西兰花",
                                    ["上次的开头完全不一样。"])
    assert report.ok


def test_feedback_nickname_twice():
    text = "今天有个小惊喜。小宝和小宝的西兰花碰了碰。"
    report = validate_feedback_text(text, "小宝", "西兰花", [])
    assert codes(report) == {ViolationCode.NICKNAME_COUNT_VIOLATION}


def test_feedback_too_long():
    text = "今天有个小惊喜。" + "小宝和西兰花一起" + han_text(40) + "。"
    assert ViolationCode.LENGTH_VIOLATION in codes(
        validate_feedback_text(text, "小宝", "西兰花", []))


def test_feedback_opening_identity():
    text = "小宝今天很棒。他和西兰花碰了碰。"
    report = validate_feedback_text(text, "小宝", "西兰花", [])
    assert ViolationCode.OPENING_CONTAINS_IDENTITY in codes(report)


def test_feedback_prefix_collision():
    text = _ok_feedback()
    # Same first 8 code points as the message under test.
    report = validate_feedback_text(text, "小宝", "西兰花",
                                    ["今天有个小惊喜。另一句结尾不同。"])
    assert ViolationCode.RECENT_PHRASE_PREFIX_COLLISION in codes(report)
    report = validate_feedback_text(text, "小宝", "西兰花",
                                    ["今天有个小惊喜真的很妙。"])
    assert report.ok


def test_feedback_latin_and_emoji():
    report = validate_feedback_text(
        "今天有个小惊喜。小宝吃了broccoli西兰花😀。", "小宝", "西兰花", [])
    assert codes(report) == {ViolationCode.FORBIDDEN_SCRIPT_DETECTED}
    assert len(report.violations) == 2


def test_feedback_food_missing():
    report = validate_feedback_text("今天有个小惊喜。小宝很勇敢。",
                                    "小宝", "西兰花", [])
    assert codes(report) == {ViolationCode.FOOD_MENTION_MISSING}


# --- framework ---------------------------------------------------------------------------


def _framework(locations=("厨房", "菜园", "教室", "公园"),
               obj="小地图", phrase="出发啦") -> StoryFramework:
    return StoryFramework(
        framework_id="fw1", story_mode="journey_discovery_framework",
        world_setting=WorldSetting(concept="小小世界",
                                   core_locations=tuple(locations)),
        world_rules=("每一站都自己走到",),
        recurring_elements=RecurringElements(
            recurring_object=obj, recurring_phrase=phrase,
            opening_ritual="背上小背包", closing_hook_style="盖一个章",
            episode_trigger_style="新的一站亮起来"),
        helper_roles=(HelperRole(name="图图", role="向导"),),
        child_role="孩子是主角")


def test_framework_four_locations_ok():
    assert validate_framework(_framework()).ok


def test_framework_three_locations_flagged():
    report = validate_framework(_framework(locations=("厨房", "菜园", "教室")))
    assert codes(report) == {ViolationCode.TOO_FEW_LOCATIONS}


def test_framework_duplicate_locations_count_distinct():
    report = validate_framework(
        _framework(locations=("厨房", "菜园", "教室", "教室")))
    assert codes(report) == {ViolationCode.TOO_FEW_LOCATIONS}


def test_framework_placeholder_detected():
    report = validate_framework(_framework(obj="{xxx}"))
    assert codes(report) == {ViolationCode.PLACEHOLDER_DETECTED}
    report = validate_framework(_framework(obj="<待定>"))
    assert codes(report) == {ViolationCode.PLACEHOLDER_DETECTED}


def test_framework_empty_phrase():
    report = validate_framework(_framework(phrase="  "))
    assert codes(report) == {ViolationCode.EMPTY_RECURRING_PHRASE}


# --- vocabulary and invariant reports ------------------------------------------------------


def test_vocabulary_denylist():
    report = validate_vocabulary([("p1", "这是一个阶段目标")], ["阶段"])
    assert codes(report) == {ViolationCode.FORBIDDEN_VOCABULARY}
    assert validate_vocabulary([("p1", "干净的句子")], ["阶段"]).ok


def test_invariant_report():
    from storybites.domain import ChildAvatar

    report = validate_invariants(ChildAvatar(avatar_id="a", nickname=" "))
    assert codes(report) == {ViolationCode.TYPE_INVARIANT_VIOLATION}


# --- composition, determinism, monotonicity --------------------------------------------------


def test_validate_episode_aggregates(constraints):
    pages = linear_pages(11)
    pages[2] = pages[2].model_copy(update={"page_text_cn": han_text(10)})
    report = validate_episode(episode_from(pages), constraints)
    assert ViolationCode.PAGE_COUNT_MISMATCH in codes(report)
    assert ViolationCode.PAGE_TOO_SHORT in codes(report)


def test_validate_episode_prompt_package_checks(constraints):
    ep = standard_episode()
    missing = ep.model_copy(update={
        "page_image_prompt_packages": ep.page_image_prompt_packages[1:]})
    report = validate_episode(missing, constraints)
    assert ViolationCode.PROMPT_PACKAGE_MISSING in codes(report)
    orphan_pkg = ep.page_image_prompt_packages[0].model_copy(
        update={"page_id": "ghost", "page_no": 99})
    orphan = ep.model_copy(update={
        "page_image_prompt_packages":
            ep.page_image_prompt_packages + (orphan_pkg,)})
    report = validate_episode(orphan, constraints)
    assert ViolationCode.PROMPT_PACKAGE_ORPHAN in codes(report)


def test_reports_are_deterministic(constraints):
    pages = linear_pages(11)
    pages[2] = pages[2].model_copy(update={"page_text_cn": han_text(10)})
    ep = episode_from(pages)
    a = validate_episode(ep, constraints)
    b = validate_episode(ep, constraints)
    assert a == b
    assert a.model_dump_json() == b.model_dump_json()


def test_monotonicity_of_unrelated_rules(constraints):
    """An in-band text edit never touches non-length rules."""
    ep = standard_episode()
    before = validate_episode(ep, constraints)
    pages = list(ep.pages)
    pages[8] = pages[8].model_copy(update={"page_text_cn": han_text(61)})
    after = validate_episode(ep.model_copy(update={"pages": tuple(pages)}),
                             constraints)
    assert before.ok and after.ok
