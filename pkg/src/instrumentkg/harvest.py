"""Clients for instrument/artefact sources, offline-first.

Four source families are supported: DataCite-style (instruments and
datasets), AWI-style (instruments), PANGAEA-style (datasets and dataset
content) and Unpaywall-style (full-text resolution). Every operation runs
through one swappable transport; in Offline mode that transport only
reads fixture files, never the network, and pins retrieval timestamps so
two runs over the same fixtures are bit-identical.

Fixture layout under a fixtures root (all JSON unless noted):
  datacite/instruments.json          awi/instruments.json
  datacite/datasets/<instrument-key>.json
  pangaea/datasets/<instrument-key>.json
  pangaea/content/<doi-key>.tab      (tab-separated dataset content)
  links/articles_by_dataset.json     links/citations.json
  unpaywall/<doi-key>.json           articles/<doi-key>.txt (plain text)
where <key> lowercases and replaces every character outside [a-z0-9._-]
with "_". Paged fixture files are {"items": [...], "next": "<path>"}; a
bare JSON array is a single page.
"""
from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, TypeVar

from concurrent.futures import ThreadPoolExecutor

from .model import (
    ArticleRecord,
    DatasetRecord,
    Doi,
    InstrumentRecord,
    MalformedDoi,
    Repository,
    fixture_key,
    normalize_doi,
)

T = TypeVar("T")

EPOCH = datetime.fromtimestamp(0, tz=timezone.utc)


class SourceName(Enum):
    DATACITE = "DataCite"
    AWI = "AWI"
    PANGAEA = "PANGAEA"
    UNPAYWALL = "Unpaywall"


class Mode(Enum):
    LIVE = "live"
    OFFLINE = "offline"


class SourceUnavailable(RuntimeError):
    def __init__(self, source: "SourceName", detail: str):
        super().__init__(f"{source.value}: {detail}")
        self.source = source


class FixtureMissing(FileNotFoundError):
    pass


class MalformedPayload(ValueError):
    pass


class FulltextUnavailable(RuntimeError):
    """No open-access full text; the article is skipped, not a failure."""


class _Transient(RuntimeError):
    """Internal marker for retryable transport failures."""


@dataclass(frozen=True)
class SourceDescriptor:
    name: SourceName
    base_url: str = ""
    mode: Mode = Mode.OFFLINE
    fixtures_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.mode is Mode.OFFLINE and self.fixtures_dir is None:
            raise ValueError(f"{self.name.value}: offline mode requires fixtures_dir")
        if self.mode is Mode.LIVE and not self.base_url:
            raise ValueError(f"{self.name.value}: live mode requires base_url")

    @property
    def host(self) -> str:
        if self.mode is Mode.OFFLINE:
            return f"fixtures:{self.fixtures_dir}"
        return self.base_url.split("://", 1)[-1].split("/", 1)[0]


@dataclass(frozen=True)
class FetchPolicy:
    max_concurrency: int = 4
    rate_limit_per_host: float = 5.0
    retries: int = 3
    backoff_base_ms: int = 500

    def __post_init__(self) -> None:
        if self.max_concurrency <= 0:
            raise ValueError("max_concurrency must be positive")
        if self.rate_limit_per_host <= 0:
            raise ValueError("rate_limit_per_host must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")
        if self.backoff_base_ms <= 0:
            raise ValueError("backoff_base_ms must be positive")


@dataclass(frozen=True)
class RawRecord:
    source: SourceName
    payload: dict
    retrieved_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source.value,
            "payload": self.payload,
            "retrieved_at": self.retrieved_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RawRecord":
        return cls(
            source=SourceName(data["source"]),
            payload=data["payload"],
            retrieved_at=datetime.fromisoformat(data["retrieved_at"]),
        )


class FixtureTransport:
    """Reads fixture files; raises FixtureMissing/MalformedPayload only."""

    def get_json(self, source: SourceDescriptor, resource: str) -> Any:
        path = Path(source.fixtures_dir) / resource
        if not path.exists():
            raise FixtureMissing(str(path))
        try:
            return json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedPayload(f"{path}: {exc}") from exc

    def get_text(self, source: SourceDescriptor, resource: str) -> str:
        path = Path(source.fixtures_dir) / resource
        if not path.exists():
            raise FixtureMissing(str(path))
        return path.read_text("utf-8")

    def exists(self, source: SourceDescriptor, resource: str) -> bool:
        return (Path(source.fixtures_dir) / resource).exists()


class LiveTransport:
    """Plain HTTP transport; 5xx and socket errors are retryable."""

    def __init__(self, timeout_s: float = 30.0):
        self.timeout_s = timeout_s

    def _fetch(self, source: SourceDescriptor, resource: str) -> bytes:
        url = source.base_url.rstrip("/") + "/" + resource.lstrip("/")
        try:
            with urllib.request.urlopen(url, timeout=self.timeout_s) as response:
                return response.read()
        except urllib.error.HTTPError as exc:
            if exc.code >= 500:
                raise _Transient(f"HTTP {exc.code} from {url}") from exc
            raise SourceUnavailable(source.name, f"HTTP {exc.code} from {url}") from exc
        except urllib.error.URLError as exc:
            raise _Transient(f"{url}: {exc.reason}") from exc

    def get_json(self, source: SourceDescriptor, resource: str) -> Any:
        raw = self._fetch(source, resource)
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedPayload(f"{source.name.value} {resource}: {exc}") from exc

    def get_text(self, source: SourceDescriptor, resource: str) -> str:
        return self._fetch(source, resource).decode("utf-8")

    def exists(self, source: SourceDescriptor, resource: str) -> bool:
        try:
            self._fetch(source, resource)
            return True
        except (SourceUnavailable, _Transient):
            return False


class _TokenBucket:
    """Simple thread-safe rate limiter (tokens/second, burst = 1 second)."""

    def __init__(self, rate: float):
        self.rate = rate
        self.capacity = max(rate, 1.0)
        self.tokens = self.capacity
        self.updated = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                needed = (1.0 - self.tokens) / self.rate
            time.sleep(needed)


def default_transport(source: SourceDescriptor):
    return FixtureTransport() if source.mode is Mode.OFFLINE else LiveTransport()


class HarvestClient:
    """Shared, internally concurrent client over all configured sources."""

    def __init__(
        self,
        policy: Optional[FetchPolicy] = None,
        transport_factory: Callable[[SourceDescriptor], Any] = default_transport,
    ):
        self.policy = policy or FetchPolicy()
        self._transport_factory = transport_factory
        self._transports: dict[SourceName, Any] = {}
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._buckets: dict[str, _TokenBucket] = {}
        self._lock = threading.Lock()

    def _transport(self, source: SourceDescriptor):
        with self._lock:
            if source.name not in self._transports:
                self._transports[source.name] = self._transport_factory(source)
            return self._transports[source.name]

    def _limits(self, source: SourceDescriptor) -> tuple[threading.Semaphore, _TokenBucket]:
        with self._lock:
            host = source.host
            if host not in self._semaphores:
                self._semaphores[host] = threading.Semaphore(self.policy.max_concurrency)
                self._buckets[host] = _TokenBucket(self.policy.rate_limit_per_host)
            return self._semaphores[host], self._buckets[host]

    def _call(self, source: SourceDescriptor, method: str, resource: str) -> Any:
        transport = self._transport(source)
        semaphore, bucket = self._limits(source)
        last_error: Optional[Exception] = None
        for attempt in range(self.policy.retries + 1):
            bucket.acquire()
            with semaphore:
                try:
                    return getattr(transport, method)(source, resource)
                except _Transient as exc:
                    last_error = exc
            if attempt < self.policy.retries:
                time.sleep(self.policy.backoff_base_ms / 1000.0 * (2 ** attempt))
        raise SourceUnavailable(source.name, f"gave up after {self.policy.retries} retries: {last_error}")

    def _timestamp(self, source: SourceDescriptor) -> datetime:
        # Offline runs are pinned to the epoch so record sets are
        # bit-reproducible.
        return EPOCH if source.mode is Mode.OFFLINE else datetime.now(timezone.utc)

    def _paged_items(self, source: SourceDescriptor, resource: str) -> list[dict]:
        """Follow "next" page links to exhaustion."""
        items: list[dict] = []
        seen: set[str] = set()
        current: Optional[str] = resource
        while current:
            if current in seen:
                raise MalformedPayload(f"pagination loop at {current}")
            seen.add(current)
            payload = self._call(source, "get_json", current)
            if isinstance(payload, list):
                items.extend(payload)
                break
            if not isinstance(payload, dict) or "items" not in payload:
                raise MalformedPayload(f"{current}: expected a list or an 'items' page")
            page = payload["items"]
            if not isinstance(page, list):
                raise MalformedPayload(f"{current}: 'items' is not a list")
            items.extend(page)
            current = payload.get("next") or None
        return items

    def _parallel(self, items: Sequence, fn: Callable[[Any], T]) -> list[T]:
        if not items:
            return []
        if len(items) == 1:
            return [fn(items[0])]
        workers = min(32, max(8, self.policy.max_concurrency * 2))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    # --- operations --------------------------------------------------------

    def harvest_instruments(self, source: SourceDescriptor) -> list[RawRecord]:
        """One RawRecord per instrument object, pagination exhausted."""
        if source.name not in (SourceName.DATACITE, SourceName.AWI):
            raise ValueError(f"{source.name.value} does not serve instruments")
        resource = f"{source.name.value.lower()}/instruments.json"
        retrieved = self._timestamp(source)
        items = self._paged_items(source, resource)
        for item in items:
            if not isinstance(item, dict):
                raise MalformedPayload(f"{resource}: instrument entry is not an object")
        return [RawRecord(source=source.name, payload=item, retrieved_at=retrieved) for item in items]

    def fetch_datasets_for_instrument(
        self, instrument: InstrumentRecord, source: SourceDescriptor
    ) -> list[DatasetRecord]:
        """Datasets produced by one instrument; missing per-instrument
        fixture files mean "no linked datasets"."""
        resource = f"{source.name.value.lower()}/datasets/{fixture_key(instrument.pid)}.json"
        try:
            items = self._paged_items(source, resource)
        except FixtureMissing:
            return []
        repository = (
            Repository.PANGAEA if source.name is SourceName.PANGAEA
            else Repository.DATACITE if source.name is SourceName.DATACITE
            else Repository.OTHER
        )
        records = []
        for item in items:
            if "doi" not in item:
                raise MalformedPayload(f"{resource}: dataset entry without a doi")
            records.append(
                DatasetRecord(
                    doi=normalize_doi(str(item["doi"])),
                    title=str(item.get("title", "")),
                    produced_by=(instrument.pid,),
                    repository=repository,
                    content_uri=str(item.get("content", "")),
                )
            )
        return records

    def fetch_datasets_for_instruments(
        self, instruments: Sequence[InstrumentRecord], source: SourceDescriptor
    ) -> list[DatasetRecord]:
        """Concurrent fan-out of fetch_datasets_for_instrument."""
        batches = self._parallel(
            list(instruments), lambda inst: self.fetch_datasets_for_instrument(inst, source)
        )
        return [record for batch in batches for record in batch]

    def fetch_articles_for_dataset(
        self, dataset: DatasetRecord, source: SourceDescriptor
    ) -> list[ArticleRecord]:
        """Articles describing one dataset via the metadata link map."""
        try:
            link_map = self._call(source, "get_json", "links/articles_by_dataset.json")
        except FixtureMissing:
            return []
        if not isinstance(link_map, dict):
            raise MalformedPayload("articles_by_dataset.json: expected an object")
        entries = None
        for key, value in link_map.items():
            try:
                if normalize_doi(key).value == dataset.doi.value:
                    entries = value
                    break
            except MalformedDoi:
                continue
        if not entries:
            return []
        records = []
        for item in entries:
            if not isinstance(item, dict) or "doi" not in item:
                raise MalformedPayload("articles_by_dataset.json: article entry without a doi")
            records.append(
                ArticleRecord(
                    doi=normalize_doi(str(item["doi"])),
                    title=str(item.get("title", "")),
                    abstract=str(item.get("abstract", "")),
                    linked_dataset_dois=(dataset.doi.value,),
                    cites_instrument_paper=False,
                )
            )
        return records

    def fetch_citing_articles(
        self, instrument_paper: ArticleRecord, source: SourceDescriptor
    ) -> list[ArticleRecord]:
        """Articles citing an instrument-describing paper (flagged, self
        citations dropped)."""
        try:
            citation_map = self._call(source, "get_json", "links/citations.json")
        except FixtureMissing:
            return []
        if not isinstance(citation_map, dict):
            raise MalformedPayload("citations.json: expected an object")
        entries = None
        for key, value in citation_map.items():
            try:
                if normalize_doi(key).value == instrument_paper.doi.value:
                    entries = value
                    break
            except MalformedDoi:
                continue
        if not entries:
            return []
        records = []
        for item in entries:
            if not isinstance(item, dict) or "doi" not in item:
                raise MalformedPayload("citations.json: citation entry without a doi")
            doi = normalize_doi(str(item["doi"]))
            if doi.value == instrument_paper.doi.value:
                continue
            records.append(
                ArticleRecord(
                    doi=doi,
                    title=str(item.get("title", "")),
                    abstract=str(item.get("abstract", "")),
                    linked_dataset_dois=(),
                    cites_instrument_paper=True,
                )
            )
        return records

    def resolve_fulltext(self, article: ArticleRecord, source: SourceDescriptor) -> str:
        """Locator of the plain-text full text, or FulltextUnavailable."""
        key = fixture_key(article.doi.value)
        try:
            response = self._call(source, "get_json", f"unpaywall/{key}.json")
        except FixtureMissing:
            raise FulltextUnavailable(f"no open-access record for {article.doi}") from None
        if not isinstance(response, dict):
            raise MalformedPayload(f"unpaywall/{key}.json: expected an object")
        if not response.get("pdf"):
            raise FulltextUnavailable(f"no open-access location for {article.doi}")
        if source.mode is Mode.OFFLINE:
            resource = f"articles/{key}.txt"
            path = Path(source.fixtures_dir) / resource
            if not path.exists():
                raise FulltextUnavailable(f"full text fixture missing for {article.doi}")
            return str(path)
        return str(response["pdf"])

    def fetch_text(self, source: SourceDescriptor, resource: str) -> str:
        return self._call(source, "get_text", resource)


# Spec-shaped convenience wrappers over a one-shot client.

def harvest_instruments(
    source: SourceDescriptor, policy: Optional[FetchPolicy] = None
) -> list[RawRecord]:
    return HarvestClient(policy).harvest_instruments(source)


def fetch_datasets_for_instrument(
    instrument: InstrumentRecord,
    source: SourceDescriptor,
    policy: Optional[FetchPolicy] = None,
) -> list[DatasetRecord]:
    return HarvestClient(policy).fetch_datasets_for_instrument(instrument, source)


def fetch_articles_for_dataset(
    dataset: DatasetRecord,
    source: SourceDescriptor,
    policy: Optional[FetchPolicy] = None,
) -> list[ArticleRecord]:
    return HarvestClient(policy).fetch_articles_for_dataset(dataset, source)


def fetch_citing_articles(
    instrument_paper: ArticleRecord,
    source: SourceDescriptor,
    policy: Optional[FetchPolicy] = None,
) -> list[ArticleRecord]:
    return HarvestClient(policy).fetch_citing_articles(instrument_paper, source)


def resolve_fulltext(
    article: ArticleRecord,
    source: SourceDescriptor,
    policy: Optional[FetchPolicy] = None,
) -> str:
    return HarvestClient(policy).resolve_fulltext(article, source)
