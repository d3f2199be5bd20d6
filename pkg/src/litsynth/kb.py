"""Append-only knowledge base of per-paper fact bundles.

Storage is a single line-delimited UTF-8 file (versioned header line, then
one JSON record per line, sorted by canonical id) plus an in-memory index.
Aggregate tables are derived lazily from the entries and are never
authoritative; the persisted form is canonical so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .extract import FactBundle
from .ingestion import PaperRecord
from .relevance import RelevanceDecision

FORMAT_NAME = "litsynth-kb"
FORMAT_VERSION = 1

COMPARATORS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


class ConflictError(Exception):
    pass


@dataclass
class KBEntry:
    record: PaperRecord
    facts: FactBundle
    decision: RelevanceDecision | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.record.canonical_id,
            "record": self.record.to_dict(),
            "facts": self.facts.to_dict(),
            "decision": self.decision.to_dict() if self.decision else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KBEntry":
        decision = d.get("decision")
        return cls(
            record=PaperRecord.from_dict(d["record"]),
            facts=FactBundle.from_dict(d["facts"]),
            decision=RelevanceDecision(**decision) if decision else None,
        )


@dataclass
class Query:
    kind: str  # facts_by_name | papers_by_metric_threshold | value_histogram | free_lookup
    name: str | None = None
    metric: str | None = None
    comparator: str = "<"
    threshold: float = 0.0
    dataset: str | None = None
    term: str | None = None


def _first_differing_span(a: FactBundle, b: FactBundle) -> tuple[list, list]:
    a_items = {(f.name, str(f.value)): f.span for f in a.hyperparams}
    b_items = {(f.name, str(f.value)): f.span for f in b.hyperparams}
    only_a = sorted(set(a_items) - set(b_items))
    only_b = sorted(set(b_items) - set(a_items))
    span_a = list(a_items[only_a[0]]) if only_a else []
    span_b = list(b_items[only_b[0]]) if only_b else []
    return span_a, span_b


class KnowledgeBase:
    """Entries keyed by canonical id; concurrent appends are serialized."""

    def __init__(self) -> None:
        self._entries: dict[str, KBEntry] = {}
        self._lock = threading.Lock()
        self._aggregates: dict | None = None

    def __len__(self) -> int:
        return len(self._entries)

    def ids(self) -> list[str]:
        return sorted(self._entries)

    def get(self, canonical_id: str) -> KBEntry | None:
        return self._entries.get(canonical_id)

    def entries(self) -> list[KBEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def append(
        self,
        record: PaperRecord,
        facts: FactBundle,
        decision: RelevanceDecision | None = None,
        overwrite: bool = False,
    ) -> None:
        """Store one paper's bundle; identical re-appends are no-ops.

        A different bundle for an existing id raises ConflictError unless
        ``overwrite`` is set.
        """
        entry = KBEntry(record=record, facts=facts, decision=decision)
        with self._lock:
            existing = self._entries.get(record.canonical_id)
            if existing is not None and not overwrite:
                if existing.to_dict() == entry.to_dict():
                    return
                span_old, span_new = _first_differing_span(existing.facts, facts)
                raise ConflictError(
                    f"conflicting content for {record.canonical_id}: "
                    f"existing span {span_old}, new span {span_new} "
                    "(use overwrite to replace)"
                )
            self._entries[record.canonical_id] = entry
            self._aggregates = None

    # -- aggregation -------------------------------------------------------

    def aggregate(self) -> dict:
        """Derived tables: results by (paper, metric, dataset) and value histograms."""
        if self._aggregates is not None:
            return self._aggregates
        results_table = []
        histograms: dict[str, dict] = {}
        for entry in self.entries():
            arch = next(
                (str(f.value) for f in entry.facts.hyperparams if f.name == "architecture"),
                "",
            )
            for fact in entry.facts.results:
                results_table.append(
                    {
                        "paper": entry.record.canonical_id,
                        "model": arch,
                        "dataset": fact.dataset or "",
                        "metric": fact.metric,
                        "split": fact.split or "",
                        "value": fact.value,
                    }
                )
            for fact in entry.facts.hyperparams:
                bins = histograms.setdefault(fact.name, {})
                key = fact.value if isinstance(fact.value, str) else float(fact.value)
                bins[key] = bins.get(key, 0) + 1
        results_table.sort(key=lambda r: (r["paper"], r["metric"], r["dataset"], r["value"]))
        hist_sorted = {
            name: sorted(bins.items(), key=lambda kv: (str(type(kv[0])), kv[0]))
            for name, bins in sorted(histograms.items())
        }
        self._aggregates = {"results": results_table, "histograms": hist_sorted}
        return self._aggregates

    # -- queries -----------------------------------------------------------

    def query(self, q: Query) -> list[dict]:
        """Deterministic, sorted result rows; unknown names give empty results."""
        agg = self.aggregate()
        if q.kind == "facts_by_name":
            rows = []
            for entry in self.entries():
                for fact in entry.facts.hyperparams:
                    if fact.name == q.name:
                        rows.append(
                            {
                                "paper": entry.record.canonical_id,
                                "name": fact.name,
                                "value": fact.value,
                                "unit": fact.unit,
                            }
                        )
            return rows
        if q.kind == "papers_by_metric_threshold":
            cmp = COMPARATORS[q.comparator]
            rows = [
                row
                for row in agg["results"]
                if row["metric"] == q.metric
                and (q.dataset is None or row["dataset"] == q.dataset)
                and cmp(row["value"], q.threshold)
            ]
            return rows
        if q.kind == "value_histogram":
            return [
                {"name": q.name, "value": value, "count": count}
                for value, count in agg["histograms"].get(q.name, [])
            ]
        if q.kind == "free_lookup":
            term = (q.term or "").lower()
            rows = []
            for entry in self.entries():
                if term in entry.record.canonical_id.lower() or term in entry.record.title.lower():
                    rows.append(
                        {
                            "paper": entry.record.canonical_id,
                            "title": entry.record.title,
                            "status": entry.record.status,
                            "facts": len(entry.facts.hyperparams) + len(entry.facts.results),
                        }
                    )
            return rows
        raise ValueError(f"unknown query kind: {q.kind}")

    # -- persistence -------------------------------------------------------

    def persist(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"format": FORMAT_NAME, "version": FORMAT_VERSION}, sort_keys=True)]
        for entry in self.entries():
            lines.append(json.dumps(entry.to_dict(), sort_keys=True, ensure_ascii=False))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        kb = cls()
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            return kb
        lines = text.splitlines()
        try:
            header = json.loads(lines[0])
            if header.get("format") != FORMAT_NAME:
                raise ValueError("bad header")
        except (json.JSONDecodeError, ValueError) as exc:
            raise ValueError(f"{path}:1: not a knowledge base file ({exc})") from exc
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            try:
                entry = KBEntry.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: corrupt record ({exc})") from exc
            kb._entries[entry.record.canonical_id] = entry
        return kb
