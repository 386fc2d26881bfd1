"""Runtime configuration: one JSON file covers the store, the provider, and
the service. Credentials come only from the environment, never the file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .domain import BasicConstraints, IdGenerator
from .errors import ConfigError
from .pipeline import GenerationPipeline, PipelineConfig
from .providers import GenerationProvider, HttpProvider, MockProvider
from .store import Store


@dataclass
class ProviderSettings:
    mode: str = "mock"
    endpoint: str = ""
    api_key_env: str = "STORYBITES_API_KEY"
    models: dict = field(default_factory=dict)
    timeout: float = 60.0
    max_retries: int = 2


@dataclass
class AppConfig:
    store_path: str = "storybites.db"
    asset_dir: Optional[str] = None
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    seed: Optional[int] = None
    prompt_dir: Optional[str] = None
    auth_token: Optional[str] = None
    job_workers: int = 2
    recent_phrase_limit: int = 5
    constraints: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "AppConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "AppConfig":
        provider = ProviderSettings(**data.pop("provider", {}))
        known = {f for f in cls.__dataclass_fields__ if f != "provider"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(provider=provider, **data)

    def basic_constraints(self) -> BasicConstraints:
        return BasicConstraints(**self.constraints)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            max_retries=self.provider.max_retries,
            seed=self.seed or 0,
            prompt_dir=Path(self.prompt_dir) if self.prompt_dir else None,
            recent_phrase_limit=self.recent_phrase_limit,
        )

    def open_store(self) -> Store:
        return Store(self.store_path, self.asset_dir)

    def build_provider(self, store: Store) -> GenerationProvider:
        if self.provider.mode == "mock":
            return MockProvider(seed=self.seed or 0, asset_sink=store.put_asset)
        if self.provider.mode == "real":
            if not self.provider.endpoint:
                raise ConfigError("real provider needs an endpoint URL")
            return HttpProvider(
                endpoint=self.provider.endpoint,
                api_key_env=self.provider.api_key_env,
                models=self.provider.models,
                timeout=self.provider.timeout,
                asset_sink=store.put_asset)
        raise ConfigError(f"unknown provider mode {self.provider.mode!r}")

    def build_pipeline(self, store: Store,
                       provider: GenerationProvider | None = None,
                       ids: IdGenerator | None = None) -> GenerationPipeline:
        provider = provider or self.build_provider(store)
        ids = ids or IdGenerator(self.seed)
        return GenerationPipeline(provider, self.pipeline_config(), ids)
