"""Operator CLI: linting exit codes, demo reproducibility, export."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from storybites.cli import main, run_demo_loop
from storybites.domain import canonical_serialize

from .conftest import episode_from, linear_pages, standard_episode


@pytest.fixture
def runner():
    return CliRunner()


def _write_episode(tmp_path, episode, name="episode.json"):
    path = tmp_path / name
    path.write_bytes(canonical_serialize(episode))
    return path


def test_validate_ok_exit_zero(runner, tmp_path):
    path = _write_episode(tmp_path, standard_episode())
    result = runner.invoke(main, ["validate", str(path)])
    assert result.exit_code == 0, result.output
    assert "ok" in result.output


def test_validate_two_choices_exit_one(runner, tmp_path):
    from storybites.domain import BranchChoice, InteractionType

    from .conftest import interaction

    pages = linear_pages(12)
    for slot in (3, 7):
        left, right, merge = slot + 1, slot + 2, slot + 3
        pages[slot - 1] = pages[slot - 1].model_copy(update={
            "interaction": interaction(InteractionType.CHOICE,
                                       f"choose_{slot}"),
            "branch_choices": (
                BranchChoice(choice_id="a", label_cn="甲",
                             next_page_id=f"p{left:02d}"),
                BranchChoice(choice_id="b", label_cn="乙",
                             next_page_id=f"p{right:02d}"),
            ),
            "next_page_id": f"p{merge:02d}",
        })
        pages[left - 1] = pages[left - 1].model_copy(
            update={"next_page_id": f"p{merge:02d}"})
    path = _write_episode(tmp_path, episode_from(pages))
    result = runner.invoke(main, ["validate", str(path)])
    assert result.exit_code == 1
    assert "ChoiceBudgetExceeded" in result.output


def test_validate_garbage_exit_two(runner, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json at all")
    result = runner.invoke(main, ["validate", str(path)])
    assert result.exit_code == 2


def test_validate_accepts_bare_generator_output(runner, tmp_path):
    ep = json.loads(canonical_serialize(standard_episode()))
    draft = {k: ep[k] for k in
             ("pages", "visual_canon", "page_image_prompt_packages")}
    path = tmp_path / "draft.json"
    path.write_text(json.dumps(draft, ensure_ascii=False))
    result = runner.invoke(main, ["validate", str(path)])
    assert result.exit_code == 0, result.output


def test_demo_loop_transcript_reproducible():
    transcripts = []
    for _ in range(2):
        lines: list[str] = []
        run_demo_loop("西兰花", 8, 42, echo=lines.append)
        transcripts.append("\n".join(lines))
    assert transcripts[0] == transcripts[1]
    assert "pages=12" in transcripts[0]
    assert "pages=4" in transcripts[0]
    assert "variant=positive" in transcripts[0]
    assert "avatar-state happy" in transcripts[0]
    assert "state=EndingReady" in transcripts[0]


def test_demo_loop_low_rating_gentle():
    lines: list[str] = []
    run_demo_loop("豆腐", 2, 42, echo=lines.append)
    joined = "\n".join(lines)
    assert "variant=gentle" in joined
    assert "avatar-state sad-but-hopeful" in joined
    assert "feedback[encourage]" in joined


def test_demo_loop_out_of_range_rating(runner):
    result = runner.invoke(main, ["demo-loop", "--rating", "11"])
    assert result.exit_code == 1
    assert "1-10" in result.output


def test_demo_loop_refuses_real_provider(runner):
    result = runner.invoke(main, ["--provider", "real", "demo-loop"])
    assert result.exit_code != 0
    assert "mock" in result.output


def test_demo_loop_via_cli(runner):
    result = runner.invoke(main, ["--seed", "42", "demo-loop"])
    assert result.exit_code == 0, result.output
    assert "= done state=EndingReady" in result.output


def test_gen_framework_prints_canonical_json(runner):
    result = runner.invoke(main, [
        "gen-framework", "--mode", "journey_discovery_framework",
        "--theme", "菜园"])
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert body["story_mode"] == "journey_discovery_framework"
    assert len(body["world_setting"]["core_locations"]) >= 4


def test_gen_episode_prints_valid_episode(runner, tmp_path):
    result = runner.invoke(main, ["--seed", "5", "gen-episode",
                                  "--food", "胡萝卜"])
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert len(body["pages"]) == 12
    assert any("胡萝卜" in p["page_text_cn"] for p in body["pages"])


def test_export_and_close_session(runner, tmp_path):
    """Drive a store on disk, then export and close via the CLI."""
    store_path = tmp_path / "family.db"
    from storybites.config import AppConfig
    from storybites.sessions import SessionManager
    from storybites.store import Store
    from storybites.domain import ChildAvatar, StoryMode

    config = AppConfig(store_path=str(store_path), seed=3)
    store = Store(store_path)
    pipeline = config.build_pipeline(store)
    manager = SessionManager(store, pipeline, config.basic_constraints())
    avatar = ChildAvatar(avatar_id=pipeline.ids.new("avatar"), nickname="小宝")
    store.put(avatar)
    fw = pipeline.generate_framework("菜园", StoryMode.REALISTIC_EVERYDAY,
                                     manager.constraints, avatar)
    store.put(fw, owner=avatar.avatar_id)
    session = manager.create_session(avatar.avatar_id, "西兰花")
    store.close()

    out = tmp_path / "family.zip"
    result = runner.invoke(main, ["--store", str(store_path), "export",
                                  avatar.avatar_id, "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert out.exists()

    result = runner.invoke(main, ["--store", str(store_path), "close-session",
                                  session.session_id])
    assert result.exit_code == 0, result.output

    result = runner.invoke(main, ["--store", str(store_path), "export",
                                  "nobody"])
    assert result.exit_code == 1


def test_export_unknown_child_error(runner, tmp_path):
    store_path = tmp_path / "empty.db"
    from storybites.store import Store

    Store(store_path).close()
    result = runner.invoke(main, ["--store", str(store_path), "export", "x"])
    assert result.exit_code == 1
    assert "error" in result.output
