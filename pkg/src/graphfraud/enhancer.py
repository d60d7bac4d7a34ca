"""Prompt construction, embedding providers, and the on-disk embedding cache.

Each node type and each relation of a dataset gets one prompt; the prompt's
embedding vector seeds the corresponding enhancer path in the model. Vectors
are cached keyed by (provider id, sha256 of the rendered prompt) so training
never needs network access, and the number of provider calls per dataset is
bounded by the number of types plus the number of relations.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import CacheIntegrityError, ProviderError, ValidationError

logger = logging.getLogger(__name__)

TYPE_INSTRUCTION = (
    "Summarize the defining characteristics of this node type and how entities "
    "of this type typically behave, in exactly three short factual sentences."
)
RELATION_INSTRUCTION = (
    "Summarize what connects two nodes under this relation and why such a "
    "connection matters for spotting coordinated abuse, in exactly three short "
    "factual sentences."
)

DEFAULT_RAW_DIM = 1536

API_KEY_ENV = "GRAPHFRAUD_API_KEY"

CACHE_FIELDS = ("provider_id", "prompt_sha256", "dim", "vector")


@dataclass(frozen=True)
class Prompt:
    """Rendered description-plus-instruction text for one type or relation."""

    kind: str  # "type-level" or "relation-level"
    subject_name: str
    description: str
    instruction: str

    @property
    def rendered(self) -> str:
        return "{" + self.description + "; " + self.instruction + "}"

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.rendered.encode("utf-8")).hexdigest()


def build_type_prompt(type_name: str, description: str = "", dataset_name: str = "") -> Prompt:
    """Prompt for one node type; an empty description falls back to a template."""
    if not type_name:
        raise ValidationError("type_name must be non-empty")
    if not description:
        where = f" in the {dataset_name} graph" if dataset_name else " in a multi-relation interaction graph"
        description = f"Introduction to the node type '{type_name}'{where}"
    return Prompt(
        kind="type-level",
        subject_name=type_name,
        description=description,
        instruction=TYPE_INSTRUCTION,
    )


def build_relation_prompt(
    relation_name: str, description: str = "", dataset_name: str = ""
) -> Prompt:
    """Prompt for one relation; an empty description falls back to a template."""
    if not relation_name:
        raise ValidationError("relation_name must be non-empty")
    if not description:
        where = f" in the {dataset_name} graph" if dataset_name else " in a multi-relation interaction graph"
        description = f"Introduction to the relation '{relation_name}'{where}"
    return Prompt(
        kind="relation-level",
        subject_name=relation_name,
        description=description,
        instruction=RELATION_INSTRUCTION,
    )


def build_prompts(meta: dict) -> tuple[list[Prompt], list[Prompt]]:
    """One type prompt per node type name and one relation prompt per relation
    name, using any descriptions the dataset meta carries."""
    dataset = str(meta.get("name", ""))
    type_desc = meta.get("type_descriptions", {}) or {}
    rel_desc = meta.get("relation_descriptions", {}) or {}
    type_prompts = [
        build_type_prompt(name, type_desc.get(name, ""), dataset)
        for name in meta["node_type_names"]
    ]
    relation_prompts = [
        build_relation_prompt(name, rel_desc.get(name, ""), dataset)
        for name in meta["relation_names"]
    ]
    return type_prompts, relation_prompts


def pseudo_embed(text: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic stand-in embedding: hash-seeded standard normals, L2-normalized."""
    if dim < 1:
        raise ValidationError(f"embedding dim must be >= 1, got {dim}")
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    entropy = np.random.SeedSequence([int(seed), int.from_bytes(digest[:16], "big")])
    vec = np.random.default_rng(entropy).standard_normal(dim)
    return vec / np.linalg.norm(vec)


@dataclass
class EmbeddingRecord:
    """One cached vector: keyed by prompt digest and provider id."""

    prompt_sha256: str
    provider_id: str
    dim: int
    vector: np.ndarray
    summary: str | None = None
    created_at: str = ""

    def to_json_line(self) -> str:
        payload = {
            "provider_id": self.provider_id,
            "prompt_sha256": self.prompt_sha256,
            "dim": int(self.dim),
            "vector": [float(v) for v in self.vector],
        }
        if self.summary is not None:
            payload["summary"] = self.summary
        if self.created_at:
            payload["created_at"] = self.created_at
        return json.dumps(payload)

    @classmethod
    def from_json_line(cls, line: str, lineno: int, path) -> "EmbeddingRecord":
        try:
            payload = json.loads(line)
            for key in CACHE_FIELDS:
                if key not in payload:
                    raise KeyError(key)
            vector = np.asarray(payload["vector"], dtype=np.float64)
            record = cls(
                prompt_sha256=str(payload["prompt_sha256"]),
                provider_id=str(payload["provider_id"]),
                dim=int(payload["dim"]),
                vector=vector,
                summary=payload.get("summary"),
                created_at=str(payload.get("created_at", "")),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CacheIntegrityError(f"{path}: corrupt cache record at line {lineno}: {exc}") from exc
        if record.vector.shape[0] != record.dim:
            raise CacheIntegrityError(
                f"{path}: line {lineno} declares dim {record.dim} but stores "
                f"{record.vector.shape[0]} values"
            )
        if not np.all(np.isfinite(record.vector)):
            raise CacheIntegrityError(f"{path}: line {lineno} contains non-finite values")
        return record


class EmbeddingCache:
    """Append-only newline-delimited JSON store of embedding records."""

    def __init__(self, path) -> None:
        self.path = Path(path)
        self._records: dict[tuple[str, str], EmbeddingRecord] = {}
        # reentrant so fetch_embedding can hold it across its miss path
        self._lock = threading.RLock()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                record = EmbeddingRecord.from_json_line(line, lineno, self.path)
                self._records[(record.provider_id, record.prompt_sha256)] = record

    def __len__(self) -> int:
        return len(self._records)

    def get(self, provider_id: str, digest: str) -> EmbeddingRecord | None:
        return self._records.get((provider_id, digest))

    def append(self, record: EmbeddingRecord) -> None:
        with self._lock:
            self._records[(record.provider_id, record.prompt_sha256)] = record
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(record.to_json_line())
                f.write("\n")

    def provider_ids(self) -> list[str]:
        return sorted({pid for pid, _ in self._records})

    def single_provider_id(self) -> str:
        ids = self.provider_ids()
        if len(ids) != 1:
            raise ValidationError(
                f"cache {self.path} holds records from {len(ids)} providers {ids}; "
                "select one explicitly"
            )
        return ids[0]


class PseudoEmbeddingProvider:
    """Offline stand-in for the summarize-then-embed stack; fully deterministic."""

    summarize_then_embed = False

    def __init__(self, dim: int = DEFAULT_RAW_DIM, seed: int = 0) -> None:
        if dim < 1:
            raise ValidationError(f"provider dim must be >= 1, got {dim}")
        self.dim = dim
        self.seed = int(seed)
        self.provider_id = f"pseudo-d{dim}-s{seed}"
        self.calls = 0

    def embed(self, prompt: Prompt):
        self.calls += 1
        return pseudo_embed(prompt.rendered, self.dim, self.seed), None


class CacheOnlyProvider:
    """Replays an existing provider's cached vectors; any miss is an error."""

    summarize_then_embed = False

    def __init__(self, provider_id: str, dim: int | None = None) -> None:
        self.provider_id = provider_id
        self.dim = dim
        self.calls = 0

    def embed(self, prompt: Prompt):
        raise ProviderError(
            f"cache-only provider '{self.provider_id}' cannot embed digest {prompt.sha256}; "
            "run prepare-embeddings with a live provider first"
        )


class RemoteEmbeddingProvider:
    """Client for an embeddings-over-HTTP endpoint.

    POSTs ``{"model": ..., "input": text}`` and expects ``{"embedding": [...]}``
    back. When ``summary_url`` is configured the prompt is first sent there as
    ``{"model": summary_model, "input": rendered}`` and the returned
    ``{"summary": ...}`` text is embedded instead of the raw prompt. The API
    key is read from the environment, never from code or config files.
    """

    def __init__(
        self,
        url: str,
        model: str = "text-embedding",
        *,
        dim: int | None = None,
        summary_url: str | None = None,
        summary_model: str = "summarizer",
        api_key_env: str = API_KEY_ENV,
        timeout: float = 30.0,
    ) -> None:
        if not url:
            raise ValidationError("remote provider requires an endpoint URL")
        self.url = url
        self.model = model
        self.dim = dim
        self.summary_url = summary_url
        self.summary_model = summary_model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.provider_id = f"remote-{model}"
        self.calls = 0

    @property
    def summarize_then_embed(self) -> bool:
        return self.summary_url is not None

    def _post(self, url: str, payload: dict) -> dict:
        body = json.dumps(payload).encode("utf-8")
        request = urllib.request.Request(url, data=body, method="POST")
        request.add_header("Content-Type", "application/json")
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            request.add_header("Authorization", f"Bearer {api_key}")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                return json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise ProviderError(f"request to {url} failed: {exc}") from exc

    def embed(self, prompt: Prompt):
        self.calls += 1
        text = prompt.rendered
        summary = None
        if self.summary_url:
            reply = self._post(
                self.summary_url, {"model": self.summary_model, "input": text}
            )
            if "summary" not in reply:
                raise ProviderError(f"summary endpoint returned no 'summary' field: {reply}")
            summary = str(reply["summary"])
            text = summary
        reply = self._post(self.url, {"model": self.model, "input": text})
        if "embedding" not in reply:
            raise ProviderError(f"embedding endpoint returned no 'embedding' field: {reply}")
        vector = np.asarray(reply["embedding"], dtype=np.float64)
        if vector.ndim != 1 or vector.size == 0:
            raise ProviderError("embedding endpoint returned a malformed vector")
        return vector, summary


def _checked_cache_hit(record: EmbeddingRecord, provider, digest: str) -> EmbeddingRecord:
    expected = getattr(provider, "dim", None)
    if expected is not None and record.dim != expected:
        raise CacheIntegrityError(
            f"cached dim {record.dim} for digest {digest} does not match "
            f"provider '{provider.provider_id}' dim {expected}"
        )
    return record


def fetch_embedding(prompt: Prompt, provider, cache: EmbeddingCache) -> EmbeddingRecord:
    """Cache-first lookup; on a miss the provider is called once and the
    record is persisted before returning.

    The miss path runs under the cache lock, so concurrent callers asking for
    the same digest trigger at most one provider call.
    """
    digest = prompt.sha256
    cached = cache.get(provider.provider_id, digest)
    if cached is not None:
        return _checked_cache_hit(cached, provider, digest)

    with cache._lock:
        cached = cache.get(provider.provider_id, digest)
        if cached is not None:
            return _checked_cache_hit(cached, provider, digest)

        logger.info(
            "cache miss for %s '%s' (digest %s); calling provider '%s'",
            prompt.kind, prompt.subject_name, digest, provider.provider_id,
        )
        try:
            vector, summary = provider.embed(prompt)
        except Exception as exc:
            raise ProviderError(
                f"provider '{provider.provider_id}' failed for digest {digest}: {exc}"
            ) from exc

        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        expected = getattr(provider, "dim", None)
        if expected is not None and vector.shape[0] != expected:
            raise CacheIntegrityError(
                f"provider '{provider.provider_id}' returned dim {vector.shape[0]} "
                f"for digest {digest}, expected {expected}"
            )
        record = EmbeddingRecord(
            prompt_sha256=digest,
            provider_id=provider.provider_id,
            dim=vector.shape[0],
            vector=vector,
            summary=summary,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        cache.append(record)
        return record


@dataclass(frozen=True)
class EmbeddingSet:
    """Raw provider vectors for every node type and relation, in meta order."""

    type_vectors: np.ndarray      # [num_types x raw_dim]
    relation_vectors: np.ndarray  # [num_relations x raw_dim]
    provider_id: str = ""

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.type_vectors, dtype=np.float64))
        r = np.atleast_2d(np.asarray(self.relation_vectors, dtype=np.float64))
        object.__setattr__(self, "type_vectors", t)
        object.__setattr__(self, "relation_vectors", r)
        if t.shape[1] != r.shape[1]:
            raise ValidationError(
                f"type and relation vectors disagree on raw dim: {t.shape[1]} vs {r.shape[1]}"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise ValidationError("embedding vectors must be finite")

    @property
    def raw_dim(self) -> int:
        return self.type_vectors.shape[1]


def collect_embeddings(
    type_prompts: list[Prompt],
    relation_prompts: list[Prompt],
    provider,
    cache: EmbeddingCache,
) -> EmbeddingSet:
    """Fetch (cache-first) every prompt's vector and stack them in order."""
    type_vecs = [fetch_embedding(p, provider, cache).vector for p in type_prompts]
    rel_vecs = [fetch_embedding(p, provider, cache).vector for p in relation_prompts]
    return EmbeddingSet(
        type_vectors=np.vstack(type_vecs),
        relation_vectors=np.vstack(rel_vecs),
        provider_id=provider.provider_id,
    )
