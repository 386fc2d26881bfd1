"""Shared builders and fixtures.

Episode builders here are hand-rolled (never the mock provider) so validator
tests and the mutation suite stay independent of the generation path.
"""

from __future__ import annotations

import socket

import pytest

from storybites.domain import (
    BasicConstraints,
    BranchChoice,
    ChildAvatar,
    Episode,
    EpisodeKind,
    Interaction,
    InteractionExt,
    InteractionType,
    Page,
    PagePromptPackage,
    VisualCanon,
)

# 70 Han characters exactly; the default band midpoint.
HAN_70 = ("小熊在院子里慢慢走着看见一棵小树发芽了他蹲下来看了很久又轻轻摸了摸"
          "叶子心里想着明天还要再来看看这棵小树然后站起来朝家里走去晚饭香了"
          "空气是甜的")

assert len(HAN_70) == 70


def han_text(n: int) -> str:
    """Exactly n Han characters (no punctuation)."""
    reps = (n // len(HAN_70)) + 1
    return (HAN_70 * reps)[:n]


CANON = VisualCanon(
    global_visual_prompt_prefix_en="soft watercolor picture book",
    character_lock_prompt_en="same child on every page",
    world_lock_prompt_en="one cozy garden world",
    negative_prompt_en="no text, no photorealism",
)


def interaction(itype: InteractionType, key: str) -> Interaction:
    return Interaction(type=itype, instruction="试一试",
                       event_key=key, ext=InteractionExt(encouragement="加油"))


def page(no: int, *, pid: str | None = None, text: str | None = None,
         nxt: str | None = None, inter: Interaction | None = None,
         branches: tuple[BranchChoice, ...] = ()) -> Page:
    return Page(
        page_no=no,
        page_id=pid or f"p{no:02d}",
        page_text_cn=han_text(70) if text is None else text,
        next_page_id=nxt,
        interaction=inter,
        branch_choices=branches,
    )


def linear_pages(count: int, text_len: int = 70) -> list[Page]:
    pages = []
    for i in range(1, count + 1):
        pages.append(page(
            i, text=han_text(text_len),
            nxt=f"p{i + 1:02d}" if i < count else None))
    return pages


def packages_for(pages: list[Page]) -> tuple[PagePromptPackage, ...]:
    return tuple(
        PagePromptPackage(page_no=p.page_no, page_id=p.page_id,
                          image_prompt_suffix_en=f"scene {p.page_no} with food")
        for p in pages)


def episode_from(pages: list[Page], *, kind: EpisodeKind = EpisodeKind.MAIN,
                 food: str = "西兰花") -> Episode:
    return Episode(
        episode_id="ep-test", pages=tuple(pages), visual_canon=CANON,
        page_image_prompt_packages=packages_for(pages),
        target_food=food, framework_id="fw-test", kind=kind)


def standard_episode(*, micro: int = 3, with_choice: bool = True,
                     with_voice: bool = True, count: int = 12,
                     text_len: int = 70) -> Episode:
    """Valid episode: optional choice at page 5 (lanes 6/7, merge 8), micro
    interactions spread over early pages, voice near the end."""
    pages = linear_pages(count, text_len)
    micro_types = [InteractionType.TAP, InteractionType.DRAG,
                   InteractionType.MIMIC]
    micro_slots = [1, 2, 3, 9][:micro]
    for n, slot in enumerate(micro_slots):
        idx = slot - 1
        pages[idx] = pages[idx].model_copy(update={
            "interaction": interaction(micro_types[n % 3], f"micro_{slot:02d}")})
    if with_choice and count >= 8:
        pages[4] = pages[4].model_copy(update={
            "interaction": interaction(InteractionType.CHOICE, "choose_path"),
            "branch_choices": (
                BranchChoice(choice_id="left", label_cn="左边", next_page_id="p06"),
                BranchChoice(choice_id="right", label_cn="右边", next_page_id="p07"),
            ),
            "next_page_id": "p08",
        })
        pages[5] = pages[5].model_copy(update={"next_page_id": "p08"})
    if with_voice and count >= 11:
        pages[10] = pages[10].model_copy(update={
            "interaction": interaction(InteractionType.RECORD_VOICE, "say_it")})
    return episode_from(pages)


@pytest.fixture
def constraints() -> BasicConstraints:
    return BasicConstraints()


@pytest.fixture
def avatar() -> ChildAvatar:
    return ChildAvatar(avatar_id="child-1", nickname="小宝",
                       clothing="黄色雨衣", accessories=("红背包",))


@pytest.fixture
def no_network(monkeypatch):
    """Fail the test if anything tries to open a socket."""

    def _blocked(*args, **kwargs):
        raise AssertionError("network access attempted during offline test")

    monkeypatch.setattr(socket.socket, "connect", _blocked)
    return _blocked
