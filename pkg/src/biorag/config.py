"""Declarative engine configuration (YAML or JSON) with environment overrides.

Precedence, lowest to highest: built-in defaults, the config file, environment
variables.  Relative paths in the file resolve against the file's directory.

Example::

    max_iterations: 15
    evidence_budget: 8000
    max_results: {entity: 10, web: 10, local: 4}
    ablation: {disable_retriever: [], disable_mesh_filter: false,
               disable_rewrite: false, disable_self_eval: false}
    backend: {kind: scripted, script: script.json}     # or kind: remote, endpoint, model
    embedder: {name: ref256, dimension: 256}
    index: corpus.idx
    mesh:
      vocabulary: mesh.tsv
      predictor: {kind: scripted, path: mesh_predictions.jsonl}
      hierarchy_expansion: false
    retrievers:
      mode: replay                                      # replay | record | live
      cassette: cassette.jsonl
      rate_limit: 3
      search: {provider: wikimedia}
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import yaml

from .orchestrator import AblationFlags, SessionConfig
from .retrievers import DEFAULT_MAX_RESULTS, ENTITY_DATABASES, RetrieverId

ENV_OVERRIDES = {
    "BIORAG_LLM_ENDPOINT": ("backend", "endpoint"),
    "BIORAG_EMBED_ENDPOINT": ("embedder", "endpoint"),
    "BIORAG_MESH_ENDPOINT": ("mesh", "predictor", "endpoint"),
    "BIORAG_NCBI_API_KEY": ("retrievers", "ncbi_api_key"),
    "BIORAG_SEARCH_API_KEY": ("retrievers", "search", "api_key"),
    "BIORAG_SEARCH_PROVIDER": ("retrievers", "search", "provider"),
}

DEFAULTS: dict = {
    "max_iterations": 15,
    "evidence_budget": 8000,
    "max_results": {},
    "ablation": {},
    "backend": {"kind": "remote"},
    "embedder": {"name": "ref256", "dimension": 256},
    "index": None,
    "mesh": {"vocabulary": None, "predictor": {"kind": "lexical-baseline"}, "hierarchy_expansion": False},
    "retrievers": {"mode": "live", "cassette": None, "rate_limit": 3.0, "search": {}},
}

def _merge(base: dict, extra: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _get(tree: dict, path: tuple[str, ...]):
    for key in path:
        if not isinstance(tree, dict):
            return None
        tree = tree.get(key)
    return tree


def _set(tree: dict, path: tuple[str, ...], value) -> None:
    for key in path[:-1]:
        tree = tree.setdefault(key, {})
    tree[path[-1]] = value


def parse_max_results(raw: Mapping | None) -> dict[RetrieverId, int]:
    out = dict(DEFAULT_MAX_RESULTS)
    for key, value in (raw or {}).items():
        value = int(value)
        if value < 1:
            raise ValueError(f"max_results.{key} must be positive")
        if key == "entity":
            out.update({rid: value for rid in ENTITY_DATABASES})
        elif key == "web":
            out[RetrieverId.WEB_SEARCH] = value
        elif key == "local":
            out[RetrieverId.PUBMED_LOCAL] = value
        else:
            out[RetrieverId.parse(key)] = value
    return out


@dataclass
class Config:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    def section(self, *path: str):
        return _get(self.raw, path)

    def path(self, *keys: str) -> Optional[Path]:
        value = _get(self.raw, keys)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def session(self) -> SessionConfig:
        return SessionConfig(
            max_iterations=int(self.raw["max_iterations"]),
            evidence_budget=int(self.raw["evidence_budget"]),
            max_results=parse_max_results(self.raw.get("max_results")),
            ablation=AblationFlags.from_dict(self.raw.get("ablation")),
            hierarchy_expansion=bool(_get(self.raw, ("mesh", "hierarchy_expansion"))),
        )


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping | None = None,
) -> Config:
    env = os.environ if env is None else env
    if path is None:
        path = env.get("BIORAG_CONFIG")
    raw = copy.deepcopy(DEFAULTS)
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: configuration must be a mapping")
        raw = _merge(raw, loaded)
        base_dir = path.resolve().parent
    if overrides:
        raw = _merge(raw, overrides)
    for var, keys in ENV_OVERRIDES.items():
        if env.get(var):
            _set(raw, keys, env[var])
    return Config(raw=raw, base_dir=base_dir)
