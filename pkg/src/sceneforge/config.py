"""Service configuration: file values, environment overrides (SCENEFORGE_*)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlparse

from .errors import PreconditionError

ENV_PREFIX = "SCENEFORGE_"


@dataclass
class ServiceConfig:
    data_dir: Path = Path("./sceneforge-data")
    chat_endpoint: str | None = None
    embed_endpoint: str | None = None
    judge_endpoint: str | None = None
    policy_endpoint: str | None = None
    default_seed: int = 0
    concurrency: int = 2
    host: str = "127.0.0.1"
    port: int = 8700
    provider_timeout_s: float = 30.0

    def validate(self) -> None:
        if self.concurrency < 1:
            raise PreconditionError("concurrency must be >= 1")
        for name in ("chat_endpoint", "embed_endpoint", "judge_endpoint", "policy_endpoint"):
            value = getattr(self, name)
            if value is None:
                continue
            parsed = urlparse(value)
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise PreconditionError(f"{name} is not a well-formed URL: {value!r}")

    @staticmethod
    def load(path: str | Path | None = None, env: dict | None = None) -> "ServiceConfig":
        values: dict = {}
        if path is not None:
            values.update(json.loads(Path(path).read_text(encoding="utf-8")))
        env = dict(os.environ if env is None else env)

        def override(key: str, cast):
            env_key = ENV_PREFIX + key.upper()
            if env_key in env:
                values[key] = cast(env[env_key])

        override("data_dir", str)
        override("chat_endpoint", str)
        override("embed_endpoint", str)
        override("judge_endpoint", str)
        override("policy_endpoint", str)
        override("default_seed", int)
        override("concurrency", int)
        override("host", str)
        override("port", int)
        override("provider_timeout_s", float)

        config = ServiceConfig(
            data_dir=Path(values.get("data_dir", "./sceneforge-data")),
            chat_endpoint=values.get("chat_endpoint"),
            embed_endpoint=values.get("embed_endpoint"),
            judge_endpoint=values.get("judge_endpoint"),
            policy_endpoint=values.get("policy_endpoint"),
            default_seed=int(values.get("default_seed", 0)),
            concurrency=int(values.get("concurrency", 2)),
            host=values.get("host", "127.0.0.1"),
            port=int(values.get("port", 8700)),
            provider_timeout_s=float(values.get("provider_timeout_s", 30.0)),
        )
        config.validate()
        return config
