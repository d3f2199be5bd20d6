"""Rule-based extraction of metadata, hyperparameters, results and citations.

Hyperparameter patterns live in a declarative rule file (see
``data/rules/hyperparams.rules``) so new phrasings can be added without
touching code. All extractors are pure functions over normalized text and
attach exact character spans, so every emitted fact can be traced back to
the sentence it came from.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .textproc import NUM_PATTERN, WORD_NUMBERS, find_numbers, parse_number, sentence_spans

log = logging.getLogger(__name__)

CANONICAL_HYPERPARAMS = frozenset(
    [
        "learning_rate", "num_layers", "hidden_size", "embed_size", "dropout",
        "optimizer", "batch_size", "seq_length", "grad_clip", "epochs",
        "steps", "vocab_size", "param_count", "architecture",
    ]
)

CANONICAL_METRICS = frozenset(["perplexity", "accuracy", "f1", "bleu"])


@dataclass
class HyperparamFact:
    name: str
    value: float | str
    span: tuple[int, int]
    surface: str
    unit: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "unit": self.unit,
            "span": list(self.span),
            "surface": self.surface,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperparamFact":
        return cls(name=d["name"], value=d["value"], unit=d.get("unit"),
                   span=tuple(d["span"]), surface=d["surface"])


@dataclass
class ResultFact:
    metric: str
    value: float
    span: tuple[int, int]
    surface: str
    dataset: str | None = None
    split: str | None = None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "dataset": self.dataset,
            "split": self.split,
            "span": list(self.span),
            "surface": self.surface,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultFact":
        return cls(metric=d["metric"], value=d["value"], dataset=d.get("dataset"),
                   split=d.get("split"), span=tuple(d["span"]), surface=d["surface"])


@dataclass
class CitationLink:
    marker: str
    statement_span: tuple[int, int]
    resolved_key: str | None = None

    def to_dict(self) -> dict:
        return {
            "marker": self.marker,
            "resolved_key": self.resolved_key,
            "statement_span": list(self.statement_span),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CitationLink":
        return cls(marker=d["marker"], resolved_key=d.get("resolved_key"),
                   statement_span=tuple(d["statement_span"]))


@dataclass
class Metadata:
    title: str = ""
    authors: list[str] = field(default_factory=list)
    year: int = 0
    venue: str | None = None
    abstract: str | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "authors": self.authors,
            "year": self.year,
            "venue": self.venue,
            "abstract": self.abstract,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Metadata":
        return cls(**d)


@dataclass
class FactBundle:
    metadata: Metadata = field(default_factory=Metadata)
    hyperparams: list[HyperparamFact] = field(default_factory=list)
    results: list[ResultFact] = field(default_factory=list)
    citations: list[CitationLink] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata.to_dict(),
            "hyperparams": [f.to_dict() for f in self.hyperparams],
            "results": [f.to_dict() for f in self.results],
            "citations": [c.to_dict() for c in self.citations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FactBundle":
        return cls(
            metadata=Metadata.from_dict(d["metadata"]),
            hyperparams=[HyperparamFact.from_dict(x) for x in d["hyperparams"]],
            results=[ResultFact.from_dict(x) for x in d["results"]],
            citations=[CitationLink.from_dict(x) for x in d["citations"]],
        )


# --------------------------------------------------------------------------
# Rule file
# --------------------------------------------------------------------------

_WORDNUM_PATTERN = r"(?:%s|\d+)" % "|".join(sorted(WORD_NUMBERS, key=len, reverse=True))
_ARCH_PATTERN = r"(?:bi)?(?:LSTM|GRU|RNN|Transformer(?:-XL)?|ConvNet|CNN|MLP)"
_NUMLIST_PATTERN = rf"{NUM_PATTERN}(?:\s*,\s*{NUM_PATTERN})*(?:,?\s*and\s+{NUM_PATTERN})?"

_MACROS = {
    "{NUM}": NUM_PATTERN,
    "{NUMLIST}": _NUMLIST_PATTERN,
    "{WORDNUM}": _WORDNUM_PATTERN,
    "{ARCH}": _ARCH_PATTERN,
}

VALUE_TYPES = ("number", "number_list", "word_number", "string")


@dataclass
class Rule:
    name: str
    value_type: str
    unit_mode: str  # "auto" applies the parsed unit, "none" discards it
    window: str
    pattern: re.Pattern


def parse_rule_line(line: str, lineno: int = 0) -> Rule | None:
    line = line.strip()
    if not line or line.startswith("#"):
        return None
    parts = [p.strip() for p in line.split("|", 4)]
    if len(parts) != 5:
        raise ValueError(f"rule line {lineno}: expected 5 '|'-separated fields, got {len(parts)}")
    name, value_type, unit_mode, window, pattern = parts
    if value_type not in VALUE_TYPES:
        raise ValueError(f"rule line {lineno}: unknown value type {value_type!r}")
    if window != "sentence":
        raise ValueError(f"rule line {lineno}: unsupported window {window!r}")
    for macro, expansion in _MACROS.items():
        pattern = pattern.replace(macro, expansion)
    try:
        compiled = re.compile(pattern, re.IGNORECASE)
    except re.error as exc:
        raise ValueError(f"rule line {lineno}: bad pattern ({exc})") from exc
    if "value" not in compiled.groupindex:
        raise ValueError(f"rule line {lineno}: pattern lacks a (?P<value>...) group")
    return Rule(name=name, value_type=value_type, unit_mode=unit_mode,
                window=window, pattern=compiled)


def load_rules(path: str | Path) -> list[Rule]:
    rules = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        rule = parse_rule_line(line, lineno)
        if rule is not None:
            rules.append(rule)
    if not rules:
        raise ValueError(f"no rules in {path}")
    return rules


def default_rules_path() -> Path:
    return Path(str(resources.files("litsynth").joinpath("data/rules/hyperparams.rules")))


_DEFAULT_RULES: list[Rule] | None = None


def default_rules() -> list[Rule]:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = load_rules(default_rules_path())
    return _DEFAULT_RULES


# --------------------------------------------------------------------------
# Hyperparameters
# --------------------------------------------------------------------------

def _dedupe_facts(facts: list[HyperparamFact]) -> list[HyperparamFact]:
    """Same (name, value) facts with overlapping spans collapse to one."""
    facts = sorted(facts, key=lambda f: (f.name, str(f.value), f.span))
    kept: list[HyperparamFact] = []
    last_end: dict[tuple[str, str], int] = {}
    for fact in facts:
        key = (fact.name, str(fact.value))
        if key in last_end and fact.span[0] < last_end[key]:
            last_end[key] = max(last_end[key], fact.span[1])
            continue
        last_end[key] = fact.span[1]
        kept.append(fact)
    kept.sort(key=lambda f: (f.span, f.name))
    return kept


def extract_hyperparams(text: str, rules: list[Rule] | None = None) -> list[HyperparamFact]:
    if rules is None:
        rules = default_rules()
    facts: list[HyperparamFact] = []
    for start, end in sentence_spans(text):
        sentence = text[start:end]
        for rule in rules:
            for match in rule.pattern.finditer(sentence):
                facts.extend(_facts_from_match(rule, match, text, start))
    return _dedupe_facts(facts)


def _facts_from_match(rule: Rule, match: re.Match, text: str, offset: int) -> list[HyperparamFact]:
    raw = match.group("value")
    span = (offset + match.start(), offset + match.end())
    surface = text[span[0]:span[1]]
    if rule.value_type == "string":
        return [HyperparamFact(name=rule.name, value=raw, span=span, surface=surface)]
    if rule.value_type == "word_number":
        word = raw.strip().lower()
        if word in WORD_NUMBERS:
            value: float | int = WORD_NUMBERS[word]
        else:
            try:
                value = int(raw)
            except ValueError:
                parsed, _ = parse_number(raw)
                value = parsed
        return [HyperparamFact(name=rule.name, value=float(value), span=span, surface=surface)]
    if rule.value_type == "number":
        try:
            value, unit = parse_number(raw)
        except ValueError:
            return []
        if rule.unit_mode == "none":
            unit = None
        return [HyperparamFact(name=rule.name, value=value, unit=unit, span=span, surface=surface)]
    # number_list: one fact per number, each with the number's own span so
    # repeated values ("1150, 1150") stay distinct
    base = offset + match.start("value")
    out = []
    for n_start, n_end, value, unit in find_numbers(raw):
        if rule.unit_mode == "none":
            unit = None
        n_span = (base + n_start, base + n_end)
        out.append(
            HyperparamFact(name=rule.name, value=value, unit=unit, span=n_span,
                           surface=text[n_span[0]:n_span[1]])
        )
    return out


# --------------------------------------------------------------------------
# Results
# --------------------------------------------------------------------------

_METRIC_PATTERNS = [
    ("perplexity", re.compile(r"\bperplexit(?:y|ies)\b", re.IGNORECASE)),
    ("accuracy", re.compile(r"\baccurac(?:y|ies)\b", re.IGNORECASE)),
    ("f1", re.compile(r"\bF1(?:[\s-]score)?\b", re.IGNORECASE)),
    ("bleu", re.compile(r"\bBLEU(?:[\s-]score)?\b", re.IGNORECASE)),
]

_NUMERIC_MARKER_RE = re.compile(r"\[(\d+(?:\s*,\s*\d+)*)\]")

_SPLIT_PATTERNS = [
    ("test", re.compile(r"\btest\b", re.IGNORECASE)),
    ("valid", re.compile(r"\bvalid(?:ation)?\b", re.IGNORECASE)),
    ("train", re.compile(r"\btrain(?:ing)?\b", re.IGNORECASE)),
]

FORWARD_WINDOW = 80   # chars after a metric word where a value may appear
BACKWARD_GAP = 20     # max gap for a value immediately before the metric word

DEFAULT_DATASETS = ["WikiText-2", "WikiText-103", "Penn Treebank", "Lakh MIDI"]


def load_gazetteer(path: str | Path) -> list[str]:
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            names.append(line)
    return names


def default_gazetteer_path() -> Path:
    return Path(str(resources.files("litsynth").joinpath("data/gazetteer/datasets.txt")))


_DEFAULT_GAZETTEER: list[str] | None = None


def default_gazetteer() -> list[str]:
    global _DEFAULT_GAZETTEER
    if _DEFAULT_GAZETTEER is None:
        _DEFAULT_GAZETTEER = load_gazetteer(default_gazetteer_path())
    return _DEFAULT_GAZETTEER


def _dataset_in(sentence: str, gazetteer: list[str]) -> str | None:
    best: tuple[int, str] | None = None
    for name in gazetteer:
        pattern = re.compile(r"\b" + re.escape(name) + r"\b", re.IGNORECASE)
        if pattern.search(sentence):
            if best is None or len(name) > best[0]:
                best = (len(name), name)
    return best[1] if best else None


def extract_results(text: str, gazetteer: list[str] | None = None) -> list[ResultFact]:
    """Numbers in the same sentence as a metric word become result facts.

    A value is searched first after the metric mention (within
    ``FORWARD_WINDOW`` chars), then immediately before it; numbers inside
    bracketed citation markers never count.
    """
    if gazetteer is None:
        gazetteer = default_gazetteer()
    facts: list[ResultFact] = []
    for start, end in sentence_spans(text):
        sentence = text[start:end]
        marker_spans = [(m.start(), m.end()) for m in _NUMERIC_MARKER_RE.finditer(sentence)]
        numbers = [
            (n_start, n_end, value, unit)
            for n_start, n_end, value, unit in find_numbers(sentence)
            if not any(ms <= n_start < me for ms, me in marker_spans)
        ]
        if not numbers:
            continue
        dataset = _dataset_in(sentence, gazetteer)
        split = next((name for name, pat in _SPLIT_PATTERNS if pat.search(sentence)), None)
        for metric, pattern in _METRIC_PATTERNS:
            for m in pattern.finditer(sentence):
                chosen = None
                after = [n for n in numbers if n[0] >= m.end() and n[0] - m.end() <= FORWARD_WINDOW]
                if after:
                    chosen = min(after, key=lambda n: n[0])
                else:
                    before = [n for n in numbers if n[1] <= m.start() and m.start() - n[1] <= BACKWARD_GAP]
                    if before:
                        chosen = max(before, key=lambda n: n[1])
                if chosen is None:
                    continue
                n_start, n_end, value, unit = chosen
                if unit == "%":
                    pass  # already normalized to [0, 1]
                lo = start + min(m.start(), n_start)
                hi = start + max(m.end(), n_end)
                facts.append(
                    ResultFact(metric=metric, value=value, dataset=dataset, split=split,
                               span=(lo, hi), surface=text[lo:hi])
                )
    # collapse exact duplicates (same metric/value/span)
    seen: set[tuple] = set()
    unique = []
    for f in facts:
        key = (f.metric, f.value, f.span)
        if key in seen:
            continue
        seen.add(key)
        unique.append(f)
    unique.sort(key=lambda f: f.span)
    return unique


# --------------------------------------------------------------------------
# Citations
# --------------------------------------------------------------------------

_AUTHOR_STOP = frozenset(
    "In On The A An By At Since From During After Before Table Figure Section "
    "Until Over Under For With As Of Our We See Between Using About".split()
)

_AUTHOR_YEAR_RE = re.compile(
    r"(?P<authors>[A-Z][A-Za-z'-]+"
    r"(?:\s+(?:and|&)\s+[A-Z][A-Za-z'-]+)?"
    r"(?:\s+et\s+al\.?)?)"
    r"(?:,\s*|\s*\(\s*|\s+)"
    r"(?P<year>(?:19|20)\d{2}[a-z]?)\)?"
)

_TEX_CITE_RE = re.compile(r"\\cite[pt]?\{(?P<keys>[^}]*)\}")

_REF_HEADING_RE = re.compile(r"^\s*(references|bibliography)\s*$", re.IGNORECASE | re.MULTILINE)
_REF_NUMBERED_RE = re.compile(r"^\s*(?:\[(\d+)\]|(\d+)\.)\s+(.*)$")
_SURNAME_RE = re.compile(r"([A-Z][A-Za-z'-]+)\s*,")
_YEAR_RE = re.compile(r"\b((?:19|20)\d{2})\b")
_KEY_RE = re.compile(r"^([a-z-]+?)((?:19|20)\d{2})")


@dataclass
class ReferenceEntry:
    number: int | None
    key: str
    raw: str


def parse_reference_list(text: str) -> list[ReferenceEntry]:
    """Entries of the References section, if one is detected."""
    heading = _REF_HEADING_RE.search(text)
    if heading is None:
        return []
    entries: list[ReferenceEntry] = []
    auto_number = 0
    for line in text[heading.end():].splitlines():
        line = line.rstrip()
        if not line.strip():
            continue
        m = _REF_NUMBERED_RE.match(line)
        if m:
            number = int(m.group(1) or m.group(2))
            body = m.group(3)
        else:
            auto_number += 1
            number = auto_number
            body = line.strip()
        surname_m = _SURNAME_RE.search(body)
        year_m = _YEAR_RE.search(body)
        if surname_m and year_m:
            key = surname_m.group(1).lower() + year_m.group(1)
        else:
            key = f"ref{number}"
        entries.append(ReferenceEntry(number=number, key=key, raw=body))
    return entries


def extract_citations(text: str) -> list[CitationLink]:
    """Bracketed numeric markers, author-year mentions and TeX cite keys.

    Markers resolve against the detected reference list; an unresolvable
    marker keeps its link with ``resolved_key`` absent.
    """
    references = parse_reference_list(text)
    by_number = {e.number: e for e in references}
    by_key = {e.key: e for e in references}
    ref_start = None
    heading = _REF_HEADING_RE.search(text)
    if heading is not None:
        ref_start = heading.start()

    spans = sentence_spans(text)
    links: list[CitationLink] = []

    def statement_for(pos: int) -> tuple[int, int]:
        for s, e in spans:
            if s <= pos < e:
                return (s, e)
        return (pos, pos)

    def in_body(pos: int) -> bool:
        return ref_start is None or pos < ref_start

    for m in _NUMERIC_MARKER_RE.finditer(text):
        if not in_body(m.start()):
            continue
        stmt = statement_for(m.start())
        for num_text in m.group(1).split(","):
            number = int(num_text.strip())
            entry = by_number.get(number)
            links.append(
                CitationLink(marker=m.group(0), statement_span=stmt,
                             resolved_key=entry.key if entry else None)
            )

    for m in _TEX_CITE_RE.finditer(text):
        if not in_body(m.start()):
            continue
        stmt = statement_for(m.start())
        for key in m.group("keys").split(","):
            key = key.strip()
            if not key:
                continue
            resolved = None
            km = _KEY_RE.match(key)
            if km:
                short = km.group(1).rstrip("-") + km.group(2)
                if short in by_key:
                    resolved = short
            if resolved is None and key in by_key:
                resolved = key
            links.append(CitationLink(marker=m.group(0), statement_span=stmt, resolved_key=resolved))

    tex_spans = [(m.start(), m.end()) for m in _TEX_CITE_RE.finditer(text)]
    for m in _AUTHOR_YEAR_RE.finditer(text):
        if not in_body(m.start()):
            continue
        if any(s <= m.start() < e for s, e in tex_spans):
            continue
        first_word = m.group("authors").split()[0]
        if first_word in _AUTHOR_STOP:
            continue
        key = first_word.lower() + m.group("year")[:4]
        entry = by_key.get(key)
        links.append(
            CitationLink(marker=m.group(0), statement_span=statement_for(m.start()),
                         resolved_key=entry.key if entry else None)
        )

    # dedupe identical (marker, key, statement) triples
    seen: set[tuple] = set()
    unique = []
    for link in sorted(links, key=lambda l: (l.statement_span, l.marker, str(l.resolved_key))):
        key = (link.marker, link.resolved_key, link.statement_span)
        if key in seen:
            continue
        seen.add(key)
        unique.append(link)
    return unique


# --------------------------------------------------------------------------
# Metadata
# --------------------------------------------------------------------------

_NAME_LIST_RE = re.compile(
    r"^[A-Z][\w.'-]*(?:\s+[A-Z][\w.'-]*)*"
    r"(?:\s*(?:,|and|&)\s*[A-Z][\w.'-]*(?:\s+[A-Z][\w.'-]*)*)*$"
)
_HEADING_NUM_RE = re.compile(r"^\d+\.?\s+\S")


def extract_metadata(text: str, api_record=None) -> Metadata:
    """Header heuristics; API-provided metadata always wins where present."""
    meta = Metadata()
    lines = text.splitlines()
    nonempty = [(i, ln.strip()) for i, ln in enumerate(lines) if ln.strip()]
    header = nonempty[:10]

    for _, line in header:
        if len(line) <= 150 and not line[0].islower() and not line.lower().startswith("abstract"):
            meta.title = line
            break
    if meta.title:
        title_pos = next(i for i, ln in header if ln == meta.title)
        for i, line in header:
            if i <= title_pos or line == meta.title:
                continue
            if _NAME_LIST_RE.match(line) and not _HEADING_NUM_RE.match(line):
                meta.authors = [
                    a.strip() for a in re.split(r",|\band\b|&", line) if a.strip()
                ]
                break

    header_text = "\n".join(ln for _, ln in header)
    year_m = _YEAR_RE.search(header_text)
    if year_m:
        meta.year = int(year_m.group(1))

    abstract_idx = None
    for pos, (i, line) in enumerate(nonempty):
        if line.lower() == "abstract":
            abstract_idx = i
            break
    if abstract_idx is not None:
        collected: list[str] = []
        for line in lines[abstract_idx + 1:]:
            stripped = line.strip()
            if not stripped and collected:
                break
            if _HEADING_NUM_RE.match(stripped) or stripped.lower() in ("introduction",):
                break
            if stripped:
                collected.append(stripped)
        if collected:
            meta.abstract = " ".join(collected)

    if api_record is not None:
        if getattr(api_record, "title", ""):
            meta.title = api_record.title
        if getattr(api_record, "authors", None):
            meta.authors = list(api_record.authors)
        if getattr(api_record, "year", 0):
            meta.year = api_record.year
        if getattr(api_record, "venue", None):
            meta.venue = api_record.venue
        if getattr(api_record, "abstract", None):
            meta.abstract = api_record.abstract

    if not meta.title:
        meta.warnings.append("missing-title")
    if not meta.authors:
        meta.warnings.append("missing-authors")
    if not meta.year:
        meta.warnings.append("missing-year")
    return meta
