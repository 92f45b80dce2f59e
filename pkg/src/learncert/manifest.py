"""Run manifests and flat config files.

A manifest lives next to the artifacts it lists (``manifest.json``) and
records each artifact's kind, relative path and content hash, so any reported
number can be traced to the exact bytes that produced it.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from learncert import __version__

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MANIFEST_NAME = "manifest.json"


class ConfigError(ValueError):
    pass


def file_hash(path) -> str:
    return hashlib.blake2b(Path(path).read_bytes(), digest_size=16).hexdigest()


def config_digest(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.blake2b(text.encode(), digest_size=16).hexdigest()


@dataclass
class Artifact:
    kind: str
    path: str
    hash: str


@dataclass
class RunManifest:
    run_id: str
    config_digest: str
    master_seed: int
    tool_version: str = __version__
    artifacts: list[Artifact] = field(default_factory=list)
    configs: dict = field(default_factory=dict)

    @classmethod
    def create(cls, config: dict, master_seed: int) -> "RunManifest":
        digest = config_digest(config)
        return cls(run_id=f"run-{digest[:12]}-{master_seed}", config_digest=digest, master_seed=master_seed)

    def add(self, root, kind: str, path) -> Artifact:
        rel = Path(os.path.relpath(Path(path).resolve(), Path(root).resolve())).as_posix()
        art = Artifact(kind, rel, file_hash(path))
        self.artifacts = [a for a in self.artifacts if a.path != rel] + [art]
        return art

    def record_config(self, stage: str, config: dict) -> None:
        self.configs[stage] = config
        self.config_digest = config_digest(self.configs)

    def find(self, kind: str) -> list[Artifact]:
        return [a for a in self.artifacts if a.kind == kind]

    def verify(self, root) -> list[str]:
        """Paths whose current content no longer matches the recorded hash."""
        bad = []
        for a in self.artifacts:
            p = Path(root) / a.path
            if not p.exists() or file_hash(p) != a.hash:
                bad.append(a.path)
        return bad

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def save(self, root) -> Path:
        path = Path(root) / MANIFEST_NAME
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, root) -> "RunManifest":
        d = json.loads((Path(root) / MANIFEST_NAME).read_text())
        d["artifacts"] = [Artifact(**a) for a in d.get("artifacts", [])]
        return cls(**d)

    @classmethod
    def load_or_create(cls, root, config: dict, master_seed: int) -> "RunManifest":
        if (Path(root) / MANIFEST_NAME).exists():
            return cls.load(root)
        return cls.create(config, master_seed)


def load_config(path) -> dict:
    """Read a flat TOML key/value file; nested tables are rejected."""
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    nested = [k for k, v in cfg.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: config must be flat, found tables {nested}")
    return cfg


def pick(cfg: dict, allowed: dict, where: str) -> dict:
    """Keep keys from ``allowed`` (name -> type), rejecting unknown ones."""
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}; allowed {sorted(allowed)}")
    out = {}
    for key, typ in allowed.items():
        if key in cfg:
            value = cfg[key]
            if typ is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, typ) or isinstance(value, bool) and typ is not bool:
                raise ConfigError(f"{where}: {key} must be {typ.__name__}, got {value!r}")
            out[key] = value
    return out
