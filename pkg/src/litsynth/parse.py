"""Document-to-text conversion and the worker pool running per-record tasks.

``pdf_to_text`` never aborts a run: unreadable or exotic inputs produce a
flagged empty result instead of an exception, and the caller marks the record
``parse_failed``. ``parallel_map`` fans records out to worker processes (text
conversion plus extraction is CPU-bound) and re-sorts the collected outputs by
canonical id so results are independent of scheduling.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TypeVar

from .ingestion import PaperRecord
from .textproc import normalize_text

log = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass
class ParseResult:
    canonical_id: str
    text: str = ""
    page_count: int = 0
    extraction_warnings: list[str] = field(default_factory=list)
    duration: float = 0.0


def _read_text_file(path: Path) -> tuple[str, int]:
    data = path.read_bytes()
    text = data.decode("utf-8", errors="replace")
    pages = max(1, text.count("\f") + 1)
    return text, pages


def _read_pdf_file(path: Path) -> tuple[str, int]:
    try:
        from pypdf import PdfReader
    except ImportError as exc:
        raise RuntimeError("pdf backend unavailable (install litsynth[pdf])") from exc
    reader = PdfReader(str(path))
    pieces = [page.extract_text() or "" for page in reader.pages]
    return "\n".join(pieces), len(reader.pages)


def pdf_to_text(document: str | Path, canonical_id: str = "") -> ParseResult:
    """Best-effort text extraction; flags trouble instead of raising.

    Plain-text documents pass through unchanged apart from normalization;
    .pdf files go through the optional pypdf backend.
    """
    path = Path(document)
    started = time.perf_counter()
    result = ParseResult(canonical_id=canonical_id or path.stem)
    if not path.exists():
        result.extraction_warnings.append("unparseable")
        return result
    try:
        if path.suffix.lower() == ".pdf":
            raw, pages = _read_pdf_file(path)
        else:
            raw, pages = _read_text_file(path)
    except Exception as exc:  # noqa: BLE001 - any backend failure flags the doc
        log.warning("parse failed for %s: %s", path, exc)
        result.extraction_warnings.append("unparseable")
        result.duration = time.perf_counter() - started
        return result
    text = normalize_text(raw)
    result.text = text
    result.page_count = pages
    if not text.strip():
        result.text = ""
        result.extraction_warnings.append("unparseable")
    result.duration = time.perf_counter() - started
    return result


# --------------------------------------------------------------------------
# Worker pool
# --------------------------------------------------------------------------

_WORKER_TASK: Callable | None = None


def _pool_init(task: Callable, initializer: Callable | None, initargs: tuple) -> None:
    global _WORKER_TASK
    if initializer is not None:
        initializer(*initargs)
    _WORKER_TASK = task


def _pool_run(payload: tuple[str, PaperRecord]) -> tuple[str, bool, object]:
    canonical_id, record = payload
    try:
        return canonical_id, True, _WORKER_TASK(record)
    except Exception as exc:  # noqa: BLE001 - isolate per-record failures
        return canonical_id, False, f"{type(exc).__name__}: {exc}"


def parallel_map(
    records: Sequence[PaperRecord],
    worker_count: int,
    task: Callable[[PaperRecord], T],
    initializer: Callable | None = None,
    initargs: tuple = (),
    chunksize: int = 4,
) -> tuple[list[tuple[str, T]], list[tuple[str, str]]]:
    """Run ``task`` once per record; outputs sorted by canonical id.

    Returns (outputs, failures); one record's exception never poisons the
    rest, and len(outputs) + len(failures) == len(records). With one worker
    everything runs inline in this process, which is also the deterministic
    reference ordering for any N.
    """
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    payloads = [(rec.canonical_id, rec) for rec in records]
    results: list[tuple[str, bool, object]] = []
    if worker_count == 1 or len(records) <= 1:
        _pool_init(task, initializer, initargs)
        for payload in payloads:
            results.append(_pool_run(payload))
    else:
        with ProcessPoolExecutor(
            max_workers=worker_count,
            initializer=_pool_init,
            initargs=(task, initializer, initargs),
        ) as pool:
            results = list(pool.map(_pool_run, payloads, chunksize=chunksize))
    outputs = sorted(((cid, out) for cid, ok, out in results if ok), key=lambda x: x[0])
    failures = sorted(((cid, err) for cid, ok, err in results if not ok), key=lambda x: x[0])
    return outputs, failures  # type: ignore[return-value]
