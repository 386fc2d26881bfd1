"""Operator command line: serve the API, lint episode files, run the offline
demo loop, generate content with the mock provider, and export family data."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import AppConfig
from .domain import (
    BasicConstraints,
    ChildAvatar,
    Episode,
    EpisodeKind,
    Gender,
    IdGenerator,
    PostMealRecord,
    StoryMode,
    canonical_dict,
    canonical_serialize,
    parse_structural,
)
from .errors import ParseError, RangeError, SchemaViolation, StorybitesError
from .pipeline import select_ending_variant
from .sessions import SessionManager, avatar_feedback_state
from .store import Store
from .validation import validate_episode

_DRAFT_KEYS = {"pages", "visual_canon", "page_image_prompt_packages"}


def _load_config(ctx_params: dict) -> AppConfig:
    config = (AppConfig.from_file(ctx_params["config"])
              if ctx_params.get("config") else AppConfig())
    if ctx_params.get("store"):
        config.store_path = ctx_params["store"]
    if ctx_params.get("provider"):
        config.provider.mode = ctx_params["provider"]
    if ctx_params.get("seed") is not None:
        config.seed = ctx_params["seed"]
    return config


@click.group()
@click.option("--config", type=click.Path(), help="JSON config file.")
@click.option("--store", type=click.Path(), help="Store file path.")
@click.option("--provider", type=click.Choice(["mock", "real"]),
              help="Generation backend.")
@click.option("--seed", type=int, help="Deterministic seed for ids and mock output.")
@click.option("--verbose", is_flag=True, default=False)
@click.pass_context
def main(ctx, config, store, provider, seed, verbose):
    """Picture-book engine for family food-trying routines."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, store=store, provider=provider,
                   seed=seed, verbose=verbose)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--token", default=None, help="Require this bearer token.")
@click.pass_context
def serve(ctx, host, port, token):
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app

    config = _load_config(ctx.obj)
    if token:
        config.auth_token = token
    app = create_app(config)
    click.echo(f"serving on http://{host}:{port} "
               f"(provider={config.provider.mode}, store={config.store_path})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(["main", "ending"]), default="main",
              show_default=True, help="Which page-count rule applies.")
@click.pass_context
def validate(ctx, file, kind):
    """Lint an episode file; exit 0 when clean, 1 on violations, 2 on parse errors."""
    config = _load_config(ctx.obj)
    constraints = config.basic_constraints()
    raw = Path(file).read_bytes()
    try:
        episode = _parse_episode_file(raw, kind)
    except (ParseError, SchemaViolation) as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(2)
    report = validate_episode(episode, constraints)
    if report.ok:
        click.echo("ok")
        sys.exit(0)
    for v in report.violations:
        where = f" page={v.page_id}" if v.page_id else ""
        click.echo(f"{v.code.value}{where}: {v.detail}")
    sys.exit(1)


def _parse_episode_file(raw: bytes, kind: str) -> Episode:
    """Accept either a full episode or the bare generator output shape."""
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"not valid UTF-8 JSON: {exc}") from exc
    if isinstance(data, dict) and set(data.keys()) == _DRAFT_KEYS:
        draft = parse_structural(data, "episode_draft")
        return Episode(
            episode_id="lint", pages=draft.pages,
            visual_canon=draft.visual_canon,
            page_image_prompt_packages=draft.page_image_prompt_packages,
            target_food="lint", framework_id="lint",
            kind=EpisodeKind.MAIN if kind == "main"
            else EpisodeKind.ENDING_EXTENSION)
    episode = parse_structural(data, "episode")
    if kind == "ending" and episode.kind is not EpisodeKind.ENDING_EXTENSION:
        episode = episode.model_copy(
            update={"kind": EpisodeKind.ENDING_EXTENSION})
    return episode


def _synthetic_record(ids: IdGenerator, food: str, rating: int) -> PostMealRecord:
    try_level = max(1, min(7, round(rating * 0.7)))
    if rating >= 7:
        description = "尝了一小口，还说脆脆的"
    elif rating <= 3:
        description = "把盘子推开了，不肯碰"
    else:
        description = "看了看，又闻了闻"
    return PostMealRecord(
        record_id=ids.new("rec"), target_food=food,
        baseline_try=2, try_level=try_level, intake=max(1, try_level - 1),
        resistance=max(1, 8 - try_level), emotion=min(7, try_level + 1),
        parent_pressure=2, helpfulness=6, self_rating=rating,
        self_description=description, timestamp=0.0)


def run_demo_loop(food: str, rating: int, seed: int,
                  echo=click.echo, provider_factory=None,
                  store: Store | None = None) -> None:
    """The full loop against a fresh in-memory store with the mock provider.

    Fixed seed makes the whole transcript reproducible byte for byte.
    ``provider_factory(store)`` lets tests wrap the provider (for call
    recording); a caller-supplied store is inspected afterwards, not closed.
    """
    variant = select_ending_variant(rating)  # range-checked before any work
    config = AppConfig(store_path=":memory:", seed=seed)
    owns_store = store is None
    store = store if store is not None else Store(":memory:")
    provider = provider_factory(store) if provider_factory else None
    pipeline = config.build_pipeline(store, provider)
    manager = SessionManager(store, pipeline, config.basic_constraints(),
                             clock=lambda: 0.0)
    ids = pipeline.ids
    echo(f"= demo loop (seed={seed}, provider=mock)")
    avatar = ChildAvatar(avatar_id=ids.new("avatar"), nickname="小宝",
                         gender=Gender.UNSPECIFIED, clothing="黄色小雨衣",
                         accessories=("红色小背包",))
    store.put(avatar)
    echo(f"avatar {avatar.avatar_id} nickname={avatar.nickname}")
    framework = pipeline.generate_framework(
        "菜园里的新朋友", StoryMode.JOURNEY_DISCOVERY_FRAMEWORK,
        manager.constraints, avatar)
    store.put(framework, owner=avatar.avatar_id)
    echo(f"framework {framework.framework_id} mode={framework.story_mode.value}")
    session = manager.create_session(avatar.avatar_id, food)
    echo(f"session {session.session_id} food={food} state={session.state.value}")
    episode = manager.generate_main_episode(session.session_id, framework)
    report = validate_episode(episode, manager.constraints)
    echo(f"main episode {episode.episode_id} pages={len(episode.pages)} "
         f"validation={report.summary()}")
    echo("state -> ReviewPending")
    manager.review(session.session_id, approve=True)
    echo("approved -> StoryReady")
    record = _synthetic_record(ids, food, rating)
    manager.submit_post_meal(session.session_id, record)
    echo(f"post-meal rating={rating} try_level={record.try_level}")
    echo("state -> PostMealRecorded")
    feedback, ending = manager.run_post_meal_pipeline(session.session_id,
                                                      seed=seed)
    echo(f"feedback[{feedback.basic_type.value}] {feedback.text_cn}")
    echo(f"avatar-state {avatar_feedback_state(record).value}")
    ending_report = validate_episode(ending, manager.constraints)
    echo(f"ending {ending.episode_id} pages={len(ending.pages)} "
         f"variant={variant.value} validation={ending_report.summary()}")
    final = store.get_session(session.session_id)
    echo("--- ending pages ---")
    for page in ending.pages:
        echo(f"{page.page_no} | {page.page_text_cn}")
    echo(f"= done state={final.state.value}")
    if owns_store:
        store.close()


@main.command("demo-loop")
@click.option("--food", default="西兰花", show_default=True)
@click.option("--rating", default=8, show_default=True, type=int,
              help="Synthetic self rating 1-10.")
@click.option("--allow-real", is_flag=True, default=False,
              help="Permit a real provider (never the default).")
@click.pass_context
def demo_loop(ctx, food, rating, allow_real):
    """Run one complete food-trying cycle offline and print the transcript."""
    if ctx.obj.get("provider") == "real" and not allow_real:
        raise click.UsageError(
            "demo-loop runs with the mock provider; pass --allow-real to override")
    seed = ctx.obj.get("seed")
    try:
        run_demo_loop(food, rating, 42 if seed is None else seed)
    except RangeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@main.command()
@click.argument("child_id")
@click.option("--out", type=click.Path(), default=None,
              help="Archive path (defaults to <child_id>.zip).")
@click.pass_context
def export(ctx, child_id, out):
    """Write one archive with everything recorded for a child."""
    config = _load_config(ctx.obj)
    store = config.open_store()
    try:
        path = store.export_child(child_id, out or f"{child_id}.zip")
    except StorybitesError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    finally:
        store.close()
    click.echo(f"exported {path}")


@main.command("close-session")
@click.argument("session_id")
@click.pass_context
def close_session(ctx, session_id):
    """Administratively close a stale session."""
    config = _load_config(ctx.obj)
    store = config.open_store()
    try:
        store.close_session(session_id)
    except StorybitesError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    finally:
        store.close()
    click.echo(f"closed {session_id}")


@main.command("gen-framework")
@click.option("--theme", default="", help="Series theme hint.")
@click.option("--mode", type=click.Choice([m.value for m in StoryMode]),
              default=StoryMode.REALISTIC_EVERYDAY.value, show_default=True)
@click.option("--nickname", default="小宝", show_default=True)
@click.option("--save", is_flag=True, default=False,
              help="Persist to the store (creates the avatar when missing).")
@click.pass_context
def gen_framework(ctx, theme, mode, nickname, save):
    """Generate a story framework offline and print its canonical JSON."""
    config = _load_config(ctx.obj)
    store = config.open_store() if save else Store(":memory:")
    try:
        pipeline = config.build_pipeline(store)
        avatar = ChildAvatar(avatar_id=pipeline.ids.new("avatar"),
                             nickname=nickname)
        framework = pipeline.generate_framework(
            theme, StoryMode(mode), config.basic_constraints(), avatar)
        if save:
            store.put(avatar)
            store.put(framework, owner=avatar.avatar_id)
        click.echo(canonical_serialize(framework).decode("utf-8"))
    finally:
        store.close()


@main.command("gen-episode")
@click.option("--food", required=True)
@click.option("--framework-file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Framework JSON (generated when omitted).")
@click.option("--theme", default="", help="Theme for an ad-hoc framework.")
@click.option("--nickname", default="小宝", show_default=True)
@click.pass_context
def gen_episode(ctx, food, framework_file, theme, nickname):
    """Generate one episode offline and print its canonical JSON."""
    config = _load_config(ctx.obj)
    store = Store(":memory:")
    try:
        pipeline = config.build_pipeline(store)
        constraints = config.basic_constraints()
        avatar = ChildAvatar(avatar_id=pipeline.ids.new("avatar"),
                             nickname=nickname)
        if framework_file:
            framework = parse_structural(
                Path(framework_file).read_bytes(), "framework")
        else:
            framework = pipeline.generate_framework(
                theme, StoryMode.REALISTIC_EVERYDAY, constraints, avatar)
        episode = pipeline.generate_episode(
            framework, None, food, avatar, constraints)
        click.echo(canonical_serialize(episode).decode("utf-8"))
    finally:
        store.close()


if __name__ == "__main__":
    main()
