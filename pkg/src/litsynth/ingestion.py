"""Paper retrieval: API clients, deduplication, and the local document cache.

Two live sources are supported (arXiv Atom feed, Semantic Scholar graph API)
plus a ``local_file`` source that treats a directory of documents as a corpus
so the whole pipeline can run offline. Retrieval results are cached under a
corpus directory with a line-delimited manifest, and re-running ingestion
against a populated cache performs no network IO.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import shutil
import time
import urllib.error
import urllib.parse
import urllib.request
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Iterable

log = logging.getLogger(__name__)

SOURCES = ("arxiv", "semantic_scholar", "local_file")
STATUSES = ("retrieved", "parsed", "parse_failed", "filtered_out", "extracted")

# forward-only progression; filtered_out may follow retrieved directly because
# metadata screening happens before any parse attempt
_STATUS_RANK = {"retrieved": 0, "parsed": 1, "parse_failed": 1, "filtered_out": 2, "extracted": 2}

MANIFEST_NAME = "manifest.jsonl"


class IngestionError(Exception):
    """Source-level retrieval failure; carries any partial results."""

    def __init__(self, message: str, partial: list["PaperRecord"] | None = None):
        super().__init__(message)
        self.partial = partial or []


@dataclass
class PaperRecord:
    canonical_id: str
    title: str = ""
    authors: list[str] = field(default_factory=list)
    year: int = 0
    venue: str | None = None
    source: str = "local_file"
    pdf_path: str | None = None
    raw_text: str | None = None
    status: str = "retrieved"
    abstract: str | None = None
    url: str | None = None
    flags: list[str] = field(default_factory=list)

    def advance_status(self, new_status: str) -> None:
        """Move status forward; backward transitions are a programming error."""
        if _STATUS_RANK[new_status] < _STATUS_RANK[self.status]:
            raise ValueError(f"status cannot go back: {self.status} -> {new_status}")
        self.status = new_status

    def populated_field_count(self) -> int:
        return sum(
            1
            for v in (self.title, self.authors, self.year, self.venue, self.pdf_path,
                      self.abstract, self.url)
            if v
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PaperRecord":
        return cls(**data)


def normalized_title_hash(title: str) -> str:
    norm = re.sub(r"[^a-z0-9]+", "", title.lower())
    return "title:" + hashlib.sha1(norm.encode("utf-8")).hexdigest()[:16]


def make_canonical_id(doi: str | None, source_id: str | None, title: str) -> str:
    """Identity precedence: DOI, then source id, then normalized-title hash."""
    if doi:
        return "doi:" + doi.lower()
    if source_id:
        return source_id
    return normalized_title_hash(title)


def safe_filename(canonical_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", canonical_id)


# --------------------------------------------------------------------------
# Transport: injectable so tests replay recorded responses
# --------------------------------------------------------------------------

Transport = Callable[[str], bytes]


def urllib_transport(url: str, timeout: float = 30.0) -> bytes:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


class RateLimiter:
    """Token-bucket style pacing: at most one request per ``interval`` seconds."""

    def __init__(self, interval: float = 3.0, clock=time.monotonic, sleep=time.sleep):
        self.interval = interval
        self._clock = clock
        self._sleep = sleep
        self._last: float | None = None

    def wait(self) -> None:
        now = self._clock()
        if self._last is not None:
            remaining = self.interval - (now - self._last)
            if remaining > 0:
                self._sleep(remaining)
        self._last = self._clock()


def fetch_with_retries(
    url: str,
    transport: Transport,
    limiter: RateLimiter | None = None,
    attempts: int = 3,
    backoff: float = 1.0,
    sleep=time.sleep,
) -> bytes:
    last_error: Exception | None = None
    for i in range(attempts):
        if limiter is not None:
            limiter.wait()
        try:
            return transport(url)
        except Exception as exc:  # noqa: BLE001 - network layer, retry anything
            last_error = exc
            if i < attempts - 1:
                sleep(backoff * (2**i))
    raise IngestionError(f"fetch failed after {attempts} attempts: {url} ({last_error})")


# --------------------------------------------------------------------------
# arXiv
# --------------------------------------------------------------------------

ARXIV_API = "http://export.arxiv.org/api/query"
_ATOM = "{http://www.w3.org/2005/Atom}"
_ARXIV_NS = "{http://arxiv.org/schemas/atom}"


def _parse_arxiv_entry(entry: ET.Element) -> PaperRecord:
    title_el = entry.find(_ATOM + "title")
    if title_el is None or not (title_el.text or "").strip():
        raise ValueError("entry without title")
    title = re.sub(r"\s+", " ", title_el.text.strip())
    id_el = entry.find(_ATOM + "id")
    if id_el is None or not id_el.text:
        raise ValueError("entry without id")
    arxiv_id = id_el.text.rsplit("/", 1)[-1]
    published = entry.findtext(_ATOM + "published", default="")
    if not re.match(r"\d{4}-", published):
        raise ValueError(f"bad published date: {published!r}")
    year = int(published[:4])
    authors = [
        a.findtext(_ATOM + "name", default="").strip()
        for a in entry.findall(_ATOM + "author")
    ]
    doi = entry.findtext(_ARXIV_NS + "doi")
    abstract = re.sub(r"\s+", " ", entry.findtext(_ATOM + "summary", default="").strip())
    pdf_url = None
    for link in entry.findall(_ATOM + "link"):
        if link.get("title") == "pdf" or link.get("type") == "application/pdf":
            pdf_url = link.get("href")
    return PaperRecord(
        canonical_id=make_canonical_id(doi, "arxiv:" + arxiv_id, title),
        title=title,
        authors=[a for a in authors if a],
        year=year,
        venue="arXiv",
        source="arxiv",
        abstract=abstract or None,
        url=pdf_url or (id_el.text if id_el is not None else None),
    )


def search_arxiv(
    query: str,
    years: tuple[int, int],
    transport: Transport = urllib_transport,
    limiter: RateLimiter | None = None,
    max_results: int = 100,
    page_size: int = 50,
) -> list[PaperRecord]:
    records: list[PaperRecord] = []
    start = 0
    while start < max_results:
        params = urllib.parse.urlencode(
            {
                "search_query": f"all:{query}",
                "start": start,
                "max_results": min(page_size, max_results - start),
            }
        )
        payload = fetch_with_retries(f"{ARXIV_API}?{params}", transport, limiter)
        root = ET.fromstring(payload)
        entries = root.findall(_ATOM + "entry")
        if not entries:
            break
        for entry in entries:
            try:
                records.append(_parse_arxiv_entry(entry))
            except (ValueError, AttributeError) as exc:
                log.warning("skipping malformed arxiv entry: %s", exc)
        start += len(entries)
        if len(entries) < page_size:
            break
    return [r for r in records if years[0] <= r.year <= years[1]]


# --------------------------------------------------------------------------
# Semantic Scholar
# --------------------------------------------------------------------------

S2_API = "https://api.semanticscholar.org/graph/v1/paper/search"
_S2_FIELDS = "title,authors,year,venue,externalIds,abstract,openAccessPdf"


def _parse_s2_entry(item: dict) -> PaperRecord:
    title = (item.get("title") or "").strip()
    if not title:
        raise ValueError("entry without title")
    year = item.get("year")
    if not isinstance(year, int):
        raise ValueError(f"bad year: {year!r}")
    external = item.get("externalIds") or {}
    doi = external.get("DOI")
    source_id = item.get("paperId")
    pdf = (item.get("openAccessPdf") or {}).get("url")
    return PaperRecord(
        canonical_id=make_canonical_id(doi, f"s2:{source_id}" if source_id else None, title),
        title=title,
        authors=[a.get("name", "") for a in item.get("authors") or [] if a.get("name")],
        year=year,
        venue=item.get("venue") or None,
        source="semantic_scholar",
        abstract=item.get("abstract") or None,
        url=pdf,
    )


def search_semantic_scholar(
    query: str,
    years: tuple[int, int],
    transport: Transport = urllib_transport,
    limiter: RateLimiter | None = None,
    max_results: int = 100,
    page_size: int = 50,
) -> list[PaperRecord]:
    records: list[PaperRecord] = []
    offset = 0
    while offset < max_results:
        params = urllib.parse.urlencode(
            {
                "query": query,
                "offset": offset,
                "limit": min(page_size, max_results - offset),
                "fields": _S2_FIELDS,
                "year": f"{years[0]}-{years[1]}",
            }
        )
        payload = fetch_with_retries(f"{S2_API}?{params}", transport, limiter)
        body = json.loads(payload.decode("utf-8"))
        items = body.get("data") or []
        if not items:
            break
        for item in items:
            try:
                records.append(_parse_s2_entry(item))
            except (ValueError, AttributeError, TypeError) as exc:
                log.warning("skipping malformed semantic_scholar entry: %s", exc)
        offset += len(items)
        if body.get("next") is None and len(items) < page_size:
            break
    return [r for r in records if years[0] <= r.year <= years[1]]


# --------------------------------------------------------------------------
# local_file source
# --------------------------------------------------------------------------

def scan_local_directory(directory: Path) -> list[PaperRecord]:
    """A directory of .txt/.pdf documents, optionally with its own manifest.

    With a manifest present the metadata comes from it; otherwise records are
    synthesized from filenames (id = stem, title = stem).
    """
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if manifest.exists():
        records = read_manifest(manifest)
        for rec in records:
            if rec.pdf_path and not Path(rec.pdf_path).is_absolute():
                rec.pdf_path = str(directory / rec.pdf_path)
        return records
    records = []
    for path in sorted(directory.glob("*")):
        if path.suffix.lower() not in (".txt", ".pdf") or path.name.startswith("."):
            continue
        records.append(
            PaperRecord(
                canonical_id=path.stem,
                title=path.stem,
                source="local_file",
                pdf_path=str(path),
            )
        )
    return records


def search_api(
    query: str,
    years: tuple[int, int],
    source: str,
    transport: Transport = urllib_transport,
    limiter: RateLimiter | None = None,
    max_results: int = 100,
    local_dir: Path | None = None,
) -> list[PaperRecord]:
    """Retrieve candidate papers from one source; records come back ``retrieved``."""
    if not query and source != "local_file":
        raise ValueError("query must be non-empty")
    if source == "arxiv":
        return search_arxiv(query, years, transport, limiter, max_results)
    if source == "semantic_scholar":
        return search_semantic_scholar(query, years, transport, limiter, max_results)
    if source == "local_file":
        if local_dir is None:
            raise ValueError("local_file source requires a directory")
        return scan_local_directory(local_dir)
    raise ValueError(f"unknown source: {source}")


# --------------------------------------------------------------------------
# Dedup and caching
# --------------------------------------------------------------------------

def deduplicate(records: Iterable[PaperRecord]) -> list[PaperRecord]:
    """At most one record per canonical id; the better-populated one wins.

    Records without DOI whose normalized titles collide are merged under the
    title hash. Output is sorted by canonical_id, making downstream behavior
    independent of arrival order.
    """
    by_id: dict[str, PaperRecord] = {}
    title_alias: dict[str, str] = {}
    for rec in records:
        key = rec.canonical_id
        if not key.startswith("doi:") and rec.title:
            alias = normalized_title_hash(rec.title)
            key = title_alias.setdefault(alias, key)
        current = by_id.get(key)
        if current is None or rec.populated_field_count() > current.populated_field_count():
            by_id[key] = rec
    return sorted(by_id.values(), key=lambda r: r.canonical_id)


def fetch_document(
    record: PaperRecord,
    cache_dir: Path,
    transport: Transport = urllib_transport,
    limiter: RateLimiter | None = None,
) -> PaperRecord:
    """Ensure the record's document exists in the cache; idempotent.

    Download failures leave status unchanged; the record is flagged for
    manual review and the pipeline continues without it.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".txt" if (record.pdf_path or record.url or "").endswith(".txt") else ".pdf"
    if record.pdf_path and Path(record.pdf_path).suffix:
        suffix = Path(record.pdf_path).suffix
    target = cache_dir / (safe_filename(record.canonical_id) + suffix)
    if target.exists():
        record.pdf_path = str(target)
        return record
    if record.pdf_path and Path(record.pdf_path).exists():
        shutil.copyfile(record.pdf_path, target)
        record.pdf_path = str(target)
        return record
    if not record.url:
        record.flags.append("no-document-url")
        log.warning("record %s has no document source; flagged", record.canonical_id)
        return record
    try:
        payload = fetch_with_retries(record.url, transport, limiter)
    except IngestionError as exc:
        record.flags.append("download-failed")
        log.warning("download failed for %s: %s; flagged for manual review", record.canonical_id, exc)
        return record
    target.write_bytes(payload)
    record.pdf_path = str(target)
    return record


def write_manifest(records: list[PaperRecord], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in sorted(records, key=lambda r: r.canonical_id):
        entry = rec.to_dict()
        lines.append(json.dumps(entry, sort_keys=True, ensure_ascii=False))
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_manifest(path: Path) -> list[PaperRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(PaperRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: corrupt manifest line ({exc})") from exc
    return records
