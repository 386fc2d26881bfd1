"""HTTP surface: status mapping, async jobs, the whole loop, idempotency."""

from __future__ import annotations

import json
import time

import pytest
from fastapi.testclient import TestClient

from storybites.api import create_app
from storybites.config import AppConfig
from storybites.domain import canonical_serialize

from .conftest import episode_from, linear_pages, standard_episode


@pytest.fixture
def client():
    config = AppConfig(store_path=":memory:", seed=7)
    app = create_app(config)
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


def wait_for_job(client, job_id: str, timeout: float = 30.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["status"] in ("succeeded", "failed"):
            return job
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} did not finish: {job}")


def make_avatar(client, nickname="小宝") -> dict:
    resp = client.post("/avatars", json={
        "nickname": nickname, "gender": "girl", "clothing": "黄色雨衣",
        "accessories": ["红背包"]})
    assert resp.status_code == 201, resp.text
    return resp.json()


def make_framework(client, child_id: str) -> str:
    resp = client.post("/frameworks", json={
        "child_id": child_id, "theme": "菜园里的新朋友",
        "mode": "journey_discovery_framework"})
    assert resp.status_code == 202, resp.text
    job = wait_for_job(client, resp.json()["job_id"])
    assert job["status"] == "succeeded", job
    return job["result"]["framework_id"]


def test_health_reports_mock_mode(client):
    body = client.get("/health").json()
    assert body["status"] == "ok" and body["provider"] == "mock"


def test_avatar_empty_nickname_422(client):
    resp = client.post("/avatars", json={"nickname": "   "})
    assert resp.status_code == 422
    assert resp.json()["code"] == "InvariantViolation"


def test_unknown_avatar_404(client):
    resp = client.get("/avatars/ghost")
    assert resp.status_code == 404
    assert resp.json()["code"] == "ChildNotFound"


def test_post_meal_in_food_selected_409(client):
    child = make_avatar(client)["avatar_id"]
    session = client.post("/sessions", json={
        "child_id": child, "food": "西兰花"}).json()
    resp = client.post(f"/sessions/{session['session_id']}/post-meal", json={
        "target_food": "西兰花", "baseline_try": 2, "try_level": 5,
        "intake": 3, "resistance": 2, "emotion": 5, "parent_pressure": 2,
        "helpfulness": 5, "self_rating": 8})
    assert resp.status_code == 409
    assert resp.json()["code"] == "IllegalTransition"


def test_second_session_conflict(client):
    child = make_avatar(client)["avatar_id"]
    assert client.post("/sessions", json={
        "child_id": child, "food": "西兰花"}).status_code == 201
    resp = client.post("/sessions", json={"child_id": child, "food": "豆腐"})
    assert resp.status_code == 409
    assert resp.json()["code"] == "SessionAlreadyActive"


def test_full_loop_over_http(client):
    child = make_avatar(client)["avatar_id"]
    make_framework(client, child)
    session = client.post("/sessions", json={
        "child_id": child, "food": "西兰花"}).json()
    sid = session["session_id"]

    gen = client.post(f"/sessions/{sid}/generate", json={})
    assert gen.status_code == 202
    job = wait_for_job(client, gen.json()["job_id"])
    assert job["status"] == "succeeded", job

    episode = client.get(f"/sessions/{sid}/episode")
    assert episode.status_code == 200
    body = episode.json()
    assert body["session_state"] == "ReviewPending"
    assert len(body["episode"]["pages"]) == 12
    assert len(body["page_images"]) == 12
    assert len(body["page_audio"]) == 12

    # One page image must be fetchable as a binary asset.
    asset_id = next(iter(body["page_images"].values()))
    asset = client.get(f"/assets/{asset_id}")
    assert asset.status_code == 200 and len(asset.content) > 0

    review = client.post(f"/sessions/{sid}/review", json={"action": "approve"})
    assert review.status_code == 200
    assert review.json()["state"] == "StoryReady"

    tap_page = next(p for p in body["episode"]["pages"]
                    if p["interaction"] and p["interaction"]["type"] == "tap")
    event = client.post(f"/sessions/{sid}/events", json={
        "page_id": tap_page["page_id"],
        "event_key": tap_page["interaction"]["event_key"], "kind": "tap"})
    assert event.status_code == 201

    finished = client.post(f"/sessions/{sid}/reading-finished")
    assert finished.json()["state"] == "ReadDone"

    meal = client.post(f"/sessions/{sid}/post-meal", json={
        "target_food": "西兰花", "baseline_try": 2, "try_level": 6,
        "intake": 4, "resistance": 2, "emotion": 6, "parent_pressure": 2,
        "helpfulness": 6, "self_rating": 8,
        "self_description": "尝了一小口"})
    assert meal.status_code == 202, meal.text
    assert meal.json()["session"]["state"] == "PostMealRecorded"
    ending_job = wait_for_job(client, meal.json()["job_id"])
    assert ending_job["status"] == "succeeded", ending_job

    feedback = client.get(f"/sessions/{sid}/feedback").json()
    assert feedback["feedback"]["basic_type"] == "praise"
    assert feedback["avatar_state"] == "happy"

    ending = client.get(f"/sessions/{sid}/ending")
    assert ending.status_code == 200
    ending_body = ending.json()
    assert len(ending_body["episode"]["pages"]) == 4
    assert ending_body["session_state"] == "Revisited"

    library = client.get(f"/children/{child}/library").json()
    assert library["sessions"][0]["state"] == "Revisited"


def test_regenerate_review_cycles(client):
    child = make_avatar(client)["avatar_id"]
    make_framework(client, child)
    sid = client.post("/sessions", json={
        "child_id": child, "food": "冬瓜"}).json()["session_id"]
    job = wait_for_job(client, client.post(
        f"/sessions/{sid}/generate", json={}).json()["job_id"])
    first_episode = job["result"]["episode_id"]
    redo = client.post(f"/sessions/{sid}/review",
                       json={"action": "regenerate", "note": "更温柔一些"})
    assert redo.status_code == 200
    job2 = wait_for_job(client, redo.json()["job_id"])
    assert job2["status"] == "succeeded"
    assert job2["result"]["episode_id"] != first_episode
    session = client.get(f"/sessions/{sid}").json()
    assert session["regeneration_count"] == 1
    assert session["state"] == "ReviewPending"


def test_feedback_and_ending_404_before_ready(client):
    child = make_avatar(client)["avatar_id"]
    sid = client.post("/sessions", json={
        "child_id": child, "food": "豆腐"}).json()["session_id"]
    assert client.get(f"/sessions/{sid}/feedback").status_code == 404
    assert client.get(f"/sessions/{sid}/ending").status_code == 404


def test_idempotency_key_replays_response(client):
    child = make_avatar(client)["avatar_id"]
    headers = {"Idempotency-Key": "create-once"}
    first = client.post("/sessions", json={"child_id": child, "food": "青椒"},
                        headers=headers)
    assert first.status_code == 201
    replay = client.post("/sessions", json={"child_id": child, "food": "青椒"},
                         headers=headers)
    assert replay.status_code == 201
    assert replay.json() == first.json()
    assert replay.headers.get("X-Idempotent-Replay") == "true"
    # Without the header the duplicate is a real conflict.
    assert client.post("/sessions", json={
        "child_id": child, "food": "青椒"}).status_code == 409


def test_validate_endpoint_matches_validator(client):
    good = json.loads(canonical_serialize(standard_episode()))
    resp = client.post("/validate/episode", json=good)
    assert resp.status_code == 200 and resp.json()["ok"] is True

    pages = linear_pages(11)
    bad = json.loads(canonical_serialize(episode_from(pages)))
    resp = client.post("/validate/episode", json=bad)
    assert resp.status_code == 422
    codes = {v["code"] for v in resp.json()["violations"]}
    assert "PageCountMismatch" in codes


def test_auth_token_enforced():
    config = AppConfig(store_path=":memory:", seed=1, auth_token="family-secret")
    app = create_app(config)
    with TestClient(app, raise_server_exceptions=False) as client:
        assert client.get("/health").status_code == 200
        assert client.get("/avatars/x").status_code == 401
        ok = client.post("/avatars", json={"nickname": "小宝"},
                         headers={"Authorization": "Bearer family-secret"})
        assert ok.status_code == 201
