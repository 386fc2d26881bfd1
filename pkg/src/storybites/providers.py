"""Generation providers: the real HTTP client, the deterministic mock, and a
recording wrapper used to prove provider isolation in tests.

``complete`` must return a payload that parses for the requested schema tag or
raise ProviderError — free prose is never passed through. The mock provider is
a template filler seeded from a hash of (stage, payload, seed), so identical
inputs always produce byte-identical outputs with zero network activity.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from abc import ABC, abstractmethod
from random import Random
from typing import Callable, Optional

from .domain import StoryMode
from .errors import ConfigError, ProviderError
from .hanchars import count_han_chars

AssetSink = Callable[[bytes, str], str]


class GenerationProvider(ABC):
    """Everything the pipeline needs from a model backend."""

    name = "provider"

    @abstractmethod
    def complete(self, system_prompt: str, user_payload: bytes,
                 output_schema_tag: str) -> bytes:
        """Structured completion; returns serialized JSON for the tag."""

    @abstractmethod
    def generate_image(self, prompt: str,
                       reference_asset: Optional[str] = None) -> str:
        """Returns the asset id of the generated image."""

    @abstractmethod
    def synthesize_speech(self, text: str) -> str:
        """Returns the asset id of the synthesized audio."""

    @abstractmethod
    def transcribe(self, audio_asset: str) -> str:
        """Returns the transcription of a stored audio asset."""


class RecordingProvider(GenerationProvider):
    """Delegating wrapper that logs every provider call.

    Tests use it to assert call counts and that no call bypassed the
    configured (offline) backend.
    """

    name = "recording"

    def __init__(self, inner: GenerationProvider):
        self.inner = inner
        self.calls: list[tuple[str, str]] = []

    def complete(self, system_prompt: str, user_payload: bytes,
                 output_schema_tag: str) -> bytes:
        self.calls.append(("complete", output_schema_tag))
        return self.inner.complete(system_prompt, user_payload, output_schema_tag)

    def generate_image(self, prompt: str,
                       reference_asset: Optional[str] = None) -> str:
        self.calls.append(("generate_image", prompt[:40]))
        return self.inner.generate_image(prompt, reference_asset)

    def synthesize_speech(self, text: str) -> str:
        self.calls.append(("synthesize_speech", text[:40]))
        return self.inner.synthesize_speech(text)

    def transcribe(self, audio_asset: str) -> str:
        self.calls.append(("transcribe", audio_asset))
        return self.inner.transcribe(audio_asset)


# --- deterministic offline mock --------------------------------------------------------


def _stable_rng(*parts: bytes | str | int) -> Random:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, int):
            part = str(part)
        if isinstance(part, str):
            part = part.encode("utf-8")
        h.update(part)
        h.update(b"\x1f")
    return Random(int.from_bytes(h.digest()[:8], "big"))


# Short Han-only clauses used to pad page text into the length band.
_FILLER_CLAUSES = (
    "风轻轻吹过来",
    "颜色亮亮的真好看",
    "大家都凑近看了看",
    "小鼻子闻到一点香味",
    "阳光把它照得暖暖的",
    "旁边传来轻轻的笑声",
    "它安安静静躺在那里",
    "好像藏着一个小秘密",
    "摸上去有点凉凉的",
    "一步一步慢慢走近",
    "耳朵听见咕嘟咕嘟的声音",
    "小手轻轻碰了一下",
    "空气里飘着淡淡的香气",
    "远处的云慢慢飘过",
    "心里痒痒的想看个清楚",
)

_SINGLE_FILLERS = "呀呢啦哇哟嘛"

_SCENES = (
    "厨房的小桌子旁",
    "菜园的篱笆边",
    "大树下的草地上",
    "热闹的市场里",
    "教室的窗台边",
    "小路的转弯处",
)

_FEEDBACK_OPENINGS = (
    "今天的餐桌亮了一下",
    "勇敢的影子闪了一下",
    "有个新发现冒出来了",
    "餐盘边出现了新鲜事",
    "一次轻轻的尝试发生了",
    "今晚的故事有了新一页",
    "不慌不忙的一步迈出去了",
    "饭桌上多了一点点勇气",
    "悄悄的进步发芽了",
    "一个小小的瞬间闪光了",
    "慢慢来的感觉刚刚好",
    "又往前挪了一小步",
    "好奇心今天探出了头",
    "温温的汤气里有新故事",
    "筷子尖上停了一下下",
    "耐心开出了一朵小花",
    "眼睛先做了一次旅行",
    "鼻子先打了一个招呼",
    "餐桌上的风很温柔",
    "一点点靠近也算数",
    "试一试的种子落地了",
    "味道的地图翻开了一页",
    "嘴巴旁边起了小涟漪",
    "那一口停在了半路上",
    "桌边的时光慢慢走",
    "碗里的颜色在眨眼",
    "轻轻的一下就是开始",
    "新的一页翻得很轻",
    "汤勺里装着小故事",
    "下一次的门已经开了缝",
    "饭香里藏着小惊喜",
    "慢慢的尝试最结实",
)

_PRAISE_BODIES = (
    "{nick}愿意和{food}靠得这么近，这一步真棒",
    "{nick}让{food}上了自己的小勺子，很了不起",
    "{nick}把{food}放进嘴里试了试，特别勇敢",
    "{nick}主动看了看{food}，还碰了碰它",
)

_PRAISE_TAILS = (
    "这样的勇气会一点点长大。",
    "每试一次，就更熟悉一点。",
    "小小的进步也闪闪发光。",
)

_ENCOURAGE_BODIES = (
    "{nick}今天先和{food}打了个照面",
    "{nick}和{food}坐在了同一张桌子旁",
    "{nick}看了一眼{food}，这也算认识啦",
    "{nick}离{food}近了一点点",
)

_ENCOURAGE_TAILS = (
    "下一次再慢慢来就好。",
    "不着急，明天还有机会。",
    "慢慢来，它会等着的。",
)


def _mode_kit(mode: StoryMode, theme: str, rng: Random) -> dict:
    theme_bit = theme.strip()[:4] or "新发现"
    if mode is StoryMode.REALISTIC_EVERYDAY:
        return {
            "rules": ("这个世界没有魔法，物品不会说话。",
                      "事情靠观察和动手一点点解决。"),
            "object": "冰箱门上的贴纸小本子",
            "phrase": f"先看一看{theme_bit}，再试一试",
            "ritual": "吃饭前把小桌布铺平，数到三",
            "hook": "把今天的发现画进贴纸小本子",
            "trigger": "日常的一个小变化被注意到了",
        }
    if mode is StoryMode.LIGHT_FANTASY_FAMILIAR:
        return {
            "rules": ("有些物品会轻声说几句话，但不会替人解决问题。",
                      "没有能解决一切的魔法。"),
            "object": "口袋里会打呼噜的小布偶",
            "phrase": f"咕噜咕噜，{theme_bit}醒来啦",
            "ritual": "轻轻拍拍口袋，小布偶睁开眼睛",
            "hook": "小布偶说一句悄悄话作为告别",
            "trigger": "一位小客人带来一个小误会或小邀请",
        }
    if mode is StoryMode.HYBRID_EXPOSITORY_NARRATIVE:
        return {
            "rules": ("先提问，再观察，再用简单的话说一说。",
                      "观察和比较是这里最重要的本领。"),
            "object": "一叠为什么卡片",
            "phrase": f"为什么呀，{theme_bit}看一看就知道",
            "ritual": "抽一张为什么卡片大声读出来",
            "hook": "把答案画在卡片背面",
            "trigger": "一个新的为什么冒了出来",
        }
    return {
        "rules": ("每一站都要自己走到、自己看到。",
                  "出发前收拾小背包，回来后在地图上做记号。"),
        "object": "盖满印章的路线地图册",
        "phrase": f"下一站，去看{theme_bit}",
        "ritual": "背上小背包，喊出发口令",
        "hook": "回到出发点，在地图册上盖一个新印章",
        "trigger": "地图上有一站亮了起来",
    }


class MockProvider(GenerationProvider):
    """Offline template filler that always emits schema-valid content.

    Determinism contract: identical (payload, tag, seed) yields identical
    bytes. The payload hash drives every random choice, so retries with an
    appended violation report naturally vary the output.
    """

    name = "mock"

    def __init__(self, seed: int = 0, asset_sink: Optional[AssetSink] = None):
        self.seed = seed
        self._asset_sink = asset_sink

    # -- helpers -------------------------------------------------------------

    def _sink(self, data: bytes, media_type: str) -> str:
        if self._asset_sink is not None:
            return self._asset_sink(data, media_type)
        return "asset-" + hashlib.sha256(data).hexdigest()[:16]

    def _page_text(self, rng: Random, lo: int, hi: int,
                   lead: str, forbidden: str = "我") -> str:
        """Compose page text whose Han count lands inside [lo, hi]."""
        target = (lo + hi) // 2
        parts = [lead]
        clauses = list(_FILLER_CLAUSES)
        rng.shuffle(clauses)
        i = 0
        while count_han_chars("".join(parts)) < max(lo, target - 4) and i < len(clauses):
            clause = clauses[i]
            i += 1
            if count_han_chars("".join(parts)) + count_han_chars(clause) > hi - 1:
                continue
            parts.append(clause + ("。" if rng.random() < 0.5 else "，"))
        text = "".join(parts)
        fillers = _SINGLE_FILLERS
        j = 0
        while count_han_chars(text) < lo:
            text += fillers[j % len(fillers)]
            j += 1
        if text.endswith("，"):
            text = text[:-1] + "。"
        elif not text.endswith(("。", "！", "？")):
            text += "。"
        return text.replace(forbidden, "小")

    # -- stages ---------------------------------------------------------------

    def complete(self, system_prompt: str, user_payload: bytes,
                 output_schema_tag: str) -> bytes:
        try:
            payload = json.loads(user_payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProviderError(f"mock provider needs a JSON payload: {exc}") from exc
        rng = _stable_rng(self.seed, output_schema_tag, user_payload)
        task = payload.get("task", output_schema_tag)
        if task == "story_framework":
            body = self._framework(payload, rng)
        elif task == "summarize":
            body = self._recap(payload, rng)
        elif task == "episode":
            body = self._episode(payload, rng)
        elif task == "ending":
            body = self._ending(payload, rng)
        elif task == "feedback":
            body = self._feedback(payload, rng)
        else:
            raise ProviderError(f"mock provider has no template for task {task!r}")
        return json.dumps(body, ensure_ascii=False, sort_keys=True).encode("utf-8")

    def _framework(self, payload: dict, rng: Random) -> dict:
        mode = StoryMode(payload["story_mode"])
        theme = payload.get("theme", "")
        nickname = payload.get("avatar", {}).get("nickname", "unspecified")
        kit = _mode_kit(mode, theme, rng)
        locations = ["家里的厨房", "幼儿园的教室", "小区的菜园",
                     "公园的大草地", "热闹的菜市场", "山坡上的果园"]
        rng.shuffle(locations)
        helpers = [
            {"name": "图图阿姨", "role": "熟悉每一种蔬菜的向导，总是先示范再邀请"},
            {"name": "小松鼠多多", "role": "爱收集新鲜事的小伙伴，负责发现线索"},
        ]
        return {
            "framework_id": payload.get("framework_id", "fw-mock"),
            "story_mode": mode.value,
            "world_setting": {
                "concept": f"围绕{theme or '新鲜食物'}展开的温暖小世界",
                "core_locations": locations[:4 + rng.randrange(2)],
            },
            "world_rules": list(kit["rules"]) + ["任何时候都不勉强，不着急。"],
            "recurring_elements": {
                "recurring_object": kit["object"],
                "recurring_phrase": kit["phrase"],
                "opening_ritual": kit["ritual"],
                "closing_hook_style": kit["hook"],
                "episode_trigger_style": kit["trigger"],
            },
            "helper_roles": helpers[: 1 + rng.randrange(2)],
            "child_role": f"{nickname}是这个世界唯一的主角，"
                          f"每一集都由{nickname}亲自去发现新鲜事。",
        }

    def _recap(self, payload: dict, rng: Random) -> dict:
        blocks = payload.get("previous_blocks", [])
        framework = payload.get("story_framework") or {}
        last_food = blocks[-1]["target_food"] if blocks else "新的食物"
        recurring = (framework.get("recurring_elements") or {})
        anchor_obj = recurring.get("recurring_object", "熟悉的小物件")
        phrase = recurring.get("recurring_phrase", "")
        recap = (f"上一次，大家在熟悉的地方遇见了{last_food}，"
                 f"靠着{anchor_obj}找到了小线索，故事停在一个温柔的地方。")
        goals = (
            f"继续留意{last_food}藏起来的小秘密",
            f"把{last_food}和另一种味道放在一起比一比",
            f"沿着上次的线索，再去看看{last_food}",
        )
        elements = [last_food, anchor_obj]
        if phrase:
            elements.append(phrase)
        return {
            "recap_cn": recap,
            "micro_goal": goals[rng.randrange(len(goals))],
            "key_story_elements": elements,
            "continuity_hooks": {
                "carry_over_anchors": [anchor_obj, last_food],
                "next_episode_seed": f"也许下一次，{last_food}会在新的地方眨眨眼",
            },
        }

    def _pages(self, rng: Random, *, count: int, lo: int, hi: int,
               food: str, nickname: str, start_no: int, id_prefix: str,
               micro_budget: int, with_choice: bool, with_voice: bool,
               key_prefix: str) -> list[dict]:
        """Page list with a legal interaction layout and in-band text."""
        scenes = list(_SCENES)
        rng.shuffle(scenes)
        micro_types = ["tap", "drag", "mimic"]
        interactive: dict[int, str] = {}
        micro_count = min(micro_budget, max(0, count - 4), 3)
        candidates = [i for i in range(1, count - 1)]
        rng.shuffle(candidates)
        choice_idx = None
        if with_choice and count >= 8:
            choice_idx = candidates.pop(0)
            # keep two pages after the choice free to host the branch lanes
            while choice_idx >= count - 4 and candidates:
                candidates.append(choice_idx)
                choice_idx = candidates.pop(0)
            candidates = [i for i in candidates
                          if abs(i - choice_idx) > 2]
        for n in range(micro_count):
            if not candidates:
                break
            interactive[candidates.pop(0)] = micro_types[n % 3]
        if with_voice and candidates:
            interactive[candidates.pop(0)] = "record_voice"

        def page_id(index: int) -> str:
            return f"{id_prefix}{start_no + index:02d}"

        pages: list[dict] = []
        for index in range(count):
            pid = page_id(index)
            no = start_no + index
            scene = scenes[index % len(scenes)]
            lead = f"{nickname}在{scene}发现了{food}的新样子。"
            if index == 0:
                lead = f"这一天，{nickname}带着好奇来到{scene}，{food}正等在那里。"
            if index == count - 1:
                lead = f"{nickname}把关于{food}的发现记在心里，约好下次再见。"
            text = self._page_text(rng, lo, hi, lead)
            interaction = None
            branch_choices: list[dict] = []
            next_id = page_id(index + 1) if index < count - 1 else None
            if index == choice_idx:
                merge = page_id(index + 3) if index + 3 < count else page_id(count - 1)
                left, right = page_id(index + 1), page_id(index + 2)
                interaction = {
                    "type": "choice",
                    "instruction": f"帮{nickname}选一条小路吧",
                    "event_key": f"{key_prefix}choose_path_{no:02d}",
                    "ext": {"encouragement": "两条路都很有趣"},
                }
                branch_choices = [
                    {"choice_id": "left", "label_cn": "走左边的小路",
                     "next_page_id": left},
                    {"choice_id": "right", "label_cn": "走右边的小路",
                     "next_page_id": right},
                ]
                next_id = merge
            elif choice_idx is not None and index == choice_idx + 1:
                next_id = page_id(choice_idx + 3) if choice_idx + 3 < count \
                    else page_id(count - 1)
            elif index in interactive:
                itype = interactive[index]
                verbs = {"tap": "点一点", "drag": "拖一拖", "mimic": "学一学",
                         "record_voice": "说一说"}
                interaction = {
                    "type": itype,
                    "instruction": f"{verbs[itype]}画面里的{food}",
                    "event_key": f"{key_prefix}{itype}_page_{no:02d}",
                    "ext": {"encouragement": "轻轻试一下就好"},
                }
            pages.append({
                "page_no": no,
                "page_id": pid,
                "page_text_cn": text,
                "next_page_id": next_id,
                "interaction": interaction,
                "branch_choices": branch_choices,
            })
        return pages

    def _canon_and_packages(self, pages: list[dict], food: str,
                            world: str) -> tuple[dict, list[dict]]:
        canon = {
            "global_visual_prompt_prefix_en":
                "soft watercolor children's picture book, warm pastel palette, "
                "gentle rounded shapes",
            "character_lock_prompt_en":
                "the same child protagonist on every page, consistent outfit "
                "and proportions, friendly expression",
            "world_lock_prompt_en":
                f"recurring cozy world of {world}, consistent props and lighting",
            "negative_prompt_en":
                "no text, no scary imagery, no photorealism, no extra children",
        }
        packages = [
            {
                "page_no": p["page_no"],
                "page_id": p["page_id"],
                "image_prompt_suffix_en":
                    f"scene for page {p['page_no']}: the child with {food}, "
                    f"storybook moment, inviting composition",
            }
            for p in pages
        ]
        return canon, packages

    def _episode(self, payload: dict, rng: Random) -> dict:
        constraints = payload.get("basic_constraints", {})
        count = constraints.get("episode_page_count", 12)
        lo = constraints.get("han_chars_per_page_min", 60)
        hi = constraints.get("han_chars_per_page_max", 80)
        micro = constraints.get("micro_interactions_max_per_episode", 4)
        food = (payload.get("run_config", {}).get("effective_inputs", {})
                .get("food_override_hint")) or payload.get("target_food", "新食物")
        nickname = (payload.get("avatar_state", {}).get("child_avatar", {})
                    .get("nickname", "小主角"))
        world = (payload.get("framework", {}).get("world_setting", {})
                 .get("concept", "a gentle everyday neighborhood"))
        pages = self._pages(
            rng, count=count, lo=lo, hi=hi, food=food, nickname=nickname,
            start_no=1, id_prefix="page_", micro_budget=min(micro, 3),
            with_choice=True, with_voice=True, key_prefix="")
        canon, packages = self._canon_and_packages(pages, food, world)
        return {"pages": pages, "visual_canon": canon,
                "page_image_prompt_packages": packages}

    def _ending(self, payload: dict, rng: Random) -> dict:
        constraints = payload.get("basic_constraints", {})
        count = constraints.get("ending_page_count", 4)
        lo = constraints.get("han_chars_per_page_min", 60)
        hi = constraints.get("han_chars_per_page_max", 80)
        food = payload.get("food_name", "新食物")
        nickname = payload.get("nickname", "小主角")
        variant = payload.get("variant", "warm")
        main_pages = payload.get("main_episode", {}).get("pages", [])
        start_no = (main_pages[-1]["page_no"] + 1) if main_pages else 1
        tone_leads = {
            "positive": f"{nickname}真的试了试{food}，小小的一步亮闪闪。",
            "gentle": f"这一次{nickname}还没准备好，{food}一点也不着急。",
            "warm": f"{nickname}又和{food}熟悉了一点，像老朋友慢慢靠近。",
        }
        pages = self._pages(
            rng, count=count, lo=lo, hi=hi, food=food, nickname=nickname,
            start_no=start_no, id_prefix="page_", micro_budget=1,
            with_choice=False, with_voice=False, key_prefix="ending_")
        pages[0]["page_text_cn"] = self._page_text(
            rng, lo, hi, tone_leads.get(variant, tone_leads["warm"]))
        world = payload.get("world_concept", "the same cozy world")
        canon, packages = self._canon_and_packages(pages, food, world)
        return {"pages": pages, "visual_canon": canon,
                "page_image_prompt_packages": packages}

    def _feedback(self, payload: dict, rng: Random) -> dict:
        nickname = payload.get("nickname", "小朋友")
        food = payload.get("picky_food", "新食物")
        basic_type = payload.get("basic_type", "encourage")
        recents = payload.get("recent_phrases", [])
        used_prefixes = {p[:8] for p in recents}
        openings = list(_FEEDBACK_OPENINGS)
        start = rng.randrange(len(openings))
        opening = next(
            (openings[(start + i) % len(openings)]
             for i in range(len(openings))
             if openings[(start + i) % len(openings)][:8] not in used_prefixes),
            openings[start],
        )
        if basic_type == "praise":
            body = _PRAISE_BODIES[rng.randrange(len(_PRAISE_BODIES))]
            tail = _PRAISE_TAILS[rng.randrange(len(_PRAISE_TAILS))]
        else:
            body = _ENCOURAGE_BODIES[rng.randrange(len(_ENCOURAGE_BODIES))]
            tail = _ENCOURAGE_TAILS[rng.randrange(len(_ENCOURAGE_TAILS))]
        body = body.format(nick=nickname, food=food)
        text = f"{opening}。{body}。{tail}"
        if count_han_chars(text) > 50:
            text = f"{opening}。{body}。"
        return {"text_cn": text}

    # -- media ------------------------------------------------------------------

    def generate_image(self, prompt: str,
                       reference_asset: Optional[str] = None) -> str:
        digest = hashlib.sha256(
            f"img|{self.seed}|{prompt}|{reference_asset or ''}".encode("utf-8")
        ).digest()
        data = b"MOCKIMG1" + digest
        return self._sink(data, "image/x-mock")

    def synthesize_speech(self, text: str) -> str:
        rng = _stable_rng(self.seed, "tts", text)
        n_samples = 1600
        samples = bytes(128 + rng.randrange(-4, 5) for _ in range(n_samples))
        header = b"RIFF" + struct.pack("<I", 36 + n_samples) + b"WAVEfmt " + \
            struct.pack("<IHHIIHH", 16, 1, 1, 8000, 8000, 1, 8) + \
            b"data" + struct.pack("<I", n_samples)
        return self._sink(header + samples, "audio/wav")

    def transcribe(self, audio_asset: str) -> str:
        return f"录音内容占位（{audio_asset[:8]}）"


# --- real HTTP backend -----------------------------------------------------------------


class HttpProvider(GenerationProvider):
    """Chat-completions style HTTP backend.

    Endpoint, per-stage model names, and the credential environment variable
    come from provider config; the credential itself never lives in config.
    """

    name = "real"

    def __init__(self, endpoint: str, api_key_env: str,
                 models: dict[str, str], timeout: float = 60.0,
                 asset_sink: Optional[AssetSink] = None):
        key = os.environ.get(api_key_env, "")
        if not key:
            raise ConfigError(
                f"real provider needs credential in ${api_key_env}")
        self._endpoint = endpoint.rstrip("/")
        self._key = key
        self._models = models
        self._timeout = timeout
        self._asset_sink = asset_sink

    def _post(self, path: str, body: dict) -> dict:
        import httpx

        try:
            resp = httpx.post(
                f"{self._endpoint}{path}", json=body, timeout=self._timeout,
                headers={"Authorization": f"Bearer {self._key}"})
            resp.raise_for_status()
            return resp.json()
        except Exception as exc:
            raise ProviderError(f"provider call failed: {exc}") from exc

    def complete(self, system_prompt: str, user_payload: bytes,
                 output_schema_tag: str) -> bytes:
        body = {
            "model": self._models.get(output_schema_tag,
                                      self._models.get("default", "")),
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_payload.decode("utf-8")},
            ],
        }
        data = self._post("/chat/completions", body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from exc
        return content.encode("utf-8")

    def generate_image(self, prompt: str,
                       reference_asset: Optional[str] = None) -> str:
        data = self._post("/images/generations",
                          {"model": self._models.get("image", ""),
                           "prompt": prompt})
        try:
            import base64

            raw = base64.b64decode(data["data"][0]["b64_json"])
        except Exception as exc:
            raise ProviderError(f"malformed image response: {exc}") from exc
        if self._asset_sink is None:
            raise ProviderError("no asset sink configured for images")
        return self._asset_sink(raw, "image/png")

    def synthesize_speech(self, text: str) -> str:
        raise ProviderError("speech synthesis not configured for this backend")

    def transcribe(self, audio_asset: str) -> str:
        raise ProviderError("transcription not configured for this backend")
