"""G-way response collection from an OpenAI-compatible chat-completions
endpoint, with bounded concurrency, retry with backoff, and an append-only
on-disk cache keyed by the full request identity.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import httpx

from .core import Sample, SamplingParams, TaskKind, VerifiedResponseSet, reward_of
from .verifiers import verify_classification, verify_grounding

log = logging.getLogger(__name__)

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class AuthError(RuntimeError):
    """Endpoint rejected our credentials; the whole batch aborts."""


class SampleFetchError(RuntimeError):
    """One sample's responses could not be obtained after retries."""


@dataclass(frozen=True, slots=True)
class EndpointConfig:
    base_url: str
    api_key: str | None = None
    max_in_flight: int = 8
    request_timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    # Whether the server honors the n= parameter; when off, each of the g
    # completions is fetched by its own request with seed incremented per draw.
    supports_n: bool = True

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be > 0")


def cache_key(sample: Sample, params: SamplingParams) -> str:
    """Digest of everything that determines the responses.  Any change to the
    model, prompt, image, sampling knobs, g, or seed yields a new key."""
    payload = json.dumps(
        [
            params.model_id,
            sample.id,
            sample.prompt,
            sample.image_ref,
            params.temperature,
            params.top_p,
            params.g,
            params.seed,
        ],
        ensure_ascii=False,
        sort_keys=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL cache.  Reads are lock-free off an in-memory index;
    appends are serialized.  A truncated final line (crash mid-append) is
    skipped on load."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, list[str]] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        obj = json.loads(line)
                        self._entries[obj["key"]] = list(obj["responses"])
                    except (json.JSONDecodeError, KeyError):
                        log.warning("skipping unreadable cache line %s:%d", self.path, lineno)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> list[str] | None:
        return self._entries.get(key)

    def put(self, key: str, sample_id: str, params: SamplingParams, responses: Sequence[str]) -> None:
        record = {
            "key": key,
            "sample_id": sample_id,
            "model": params.model_id,
            "params": {
                "temperature": params.temperature,
                "top_p": params.top_p,
                "g": params.g,
                "seed": params.seed,
            },
            "responses": list(responses),
        }
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
            self._entries[key] = list(responses)


@dataclass(slots=True)
class ResponseSet:
    """What came back for one sample: g texts, or an error string."""

    sample_id: str
    responses: list[str] = field(default_factory=list)
    error: str | None = None
    from_cache: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None


def _image_content(image_ref: str) -> dict:
    if image_ref.startswith(("http://", "https://", "data:")):
        url = image_ref
    elif Path(image_ref).is_file():
        mime = mimetypes.guess_type(image_ref)[0] or "application/octet-stream"
        data = base64.b64encode(Path(image_ref).read_bytes()).decode("ascii")
        url = f"data:{mime};base64,{data}"
    else:
        url = image_ref
    return {"type": "image_url", "image_url": {"url": url}}


def build_messages(sample: Sample) -> list[dict]:
    if sample.image_ref is None:
        return [{"role": "user", "content": sample.prompt}]
    return [
        {
            "role": "user",
            "content": [
                _image_content(sample.image_ref),
                {"type": "text", "text": sample.prompt},
            ],
        }
    ]


class ChatCompletionsClient:
    """Thin POST /v1/chat/completions wrapper with retry and backoff."""

    def __init__(self, config: EndpointConfig):
        self.config = config
        headers = {}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.request_timeout,
        )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ChatCompletionsClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def complete(self, sample: Sample, params: SamplingParams, n: int, seed: int | None) -> list[str]:
        body: dict = {
            "model": params.model_id,
            "messages": build_messages(sample),
            "temperature": params.temperature,
            "top_p": params.top_p,
            "n": n,
        }
        if seed is not None:
            body["seed"] = seed
        last_error = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                delay = self.config.backoff_base * (2 ** (attempt - 1))
                time.sleep(delay * (1 + random.random()))
            try:
                resp = self._client.post("/chat/completions", json=body)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise SampleFetchError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            choices = resp.json().get("choices", [])
            texts = [c["message"]["content"] for c in choices]
            if len(texts) != n:
                raise SampleFetchError(f"asked for {n} completions, got {len(texts)}")
            return texts
        raise SampleFetchError(f"gave up after {self.config.max_retries + 1} attempts: {last_error}")

    def fetch_group(self, sample: Sample, params: SamplingParams) -> list[str]:
        """All g completions for one sample: a single n=g request when the
        server supports it, else g requests with per-draw seeds."""
        if self.config.supports_n:
            return self.complete(sample, params, n=params.g, seed=params.seed)
        texts: list[str] = []
        for k in range(params.g):
            seed = None if params.seed is None else params.seed + k
            texts.extend(self.complete(sample, params, n=1, seed=seed))
        return texts


def collect_responses(
    samples: Sequence[Sample],
    params: SamplingParams,
    endpoint: EndpointConfig,
    cache: ResponseCache,
) -> list[ResponseSet]:
    """Obtain g responses per sample, concurrently, in input order.

    Cached samples never touch the network.  A sample that keeps failing
    after retries yields an error record without sinking the batch; an auth
    failure aborts everything.
    """
    results: list[ResponseSet | None] = [None] * len(samples)
    to_fetch: list[tuple[int, Sample, str]] = []
    for i, sample in enumerate(samples):
        key = cache_key(sample, params)
        cached = cache.get(key)
        if cached is not None:
            results[i] = ResponseSet(sample.id, responses=cached, from_cache=True)
        else:
            to_fetch.append((i, sample, key))

    if to_fetch:
        abort = threading.Event()

        def fetch(item: tuple[int, Sample, str]) -> None:
            i, sample, key = item
            if abort.is_set():
                results[i] = ResponseSet(sample.id, error="aborted")
                return
            try:
                texts = client.fetch_group(sample, params)
            except AuthError:
                abort.set()
                raise
            except (SampleFetchError, httpx.HTTPError) as exc:
                results[i] = ResponseSet(sample.id, error=str(exc))
                return
            cache.put(key, sample.id, params, texts)
            results[i] = ResponseSet(sample.id, responses=texts)

        with ChatCompletionsClient(endpoint) as client:
            with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
                futures = [pool.submit(fetch, item) for item in to_fetch]
                for fut in futures:
                    fut.result()  # re-raises AuthError

    return [r for r in results if r is not None]


def verify_response(sample: Sample, response: str) -> bool:
    """Dispatch to the verifier matching the sample's task kind."""
    if sample.task_kind is TaskKind.CLASSIFICATION:
        return verify_classification(response, sample.gold.label)
    if sample.task_kind is TaskKind.GROUNDING:
        return verify_grounding(response, sample.gold.box)
    if sample.task_kind is TaskKind.GENERIC:
        # Generic answers use the same normalized exact match as labels.
        return verify_classification(response, sample.gold.answer)
    raise ValueError(f"unknown task kind: {sample.task_kind!r}")


def verify_batch(
    response_sets: Sequence[ResponseSet],
    samples: Sequence[Sample],
    params: SamplingParams,
) -> list[VerifiedResponseSet]:
    """Score every response against its sample's gold answer and attach the
    difficulty label.  Errored response sets are not scoreable and raise."""
    by_id = {s.id: s for s in samples}
    out: list[VerifiedResponseSet] = []
    for rs in response_sets:
        if not rs.ok:
            raise ValueError(f"sample {rs.sample_id!r} has no responses to verify: {rs.error}")
        sample = by_id.get(rs.sample_id)
        if sample is None:
            raise ValueError(f"response set for unknown sample id {rs.sample_id!r}")
        rewards = [reward_of(verify_response(sample, text)) for text in rs.responses]
        out.append(VerifiedResponseSet.from_rewards(sample.id, rs.responses, rewards, params))
    return out
