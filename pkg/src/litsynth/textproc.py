"""Shared text utilities: normalization, sentence splitting, tokens, numbers.

Everything downstream (keyword matching, rule extraction, TF-IDF) operates on
normalized text, so the normalizer is the single place where PDF-extraction
artifacts (ligatures, end-of-line hyphenation, exotic dashes) get repaired.
"""

from __future__ import annotations

import re

LIGATURES = {
    "ﬀ": "ff",
    "ﬁ": "fi",
    "ﬂ": "fl",
    "ﬃ": "ffi",
    "ﬄ": "ffl",
    "æ": "ae",
    "œ": "oe",
}

# en dash, em dash, minus sign, TeX-style double hyphen
_DASH_RE = re.compile(r"[‐‑‒–—−]|--")
_EOL_HYPHEN_RE = re.compile(r"(?<=[A-Za-z])-[ \t]*\n[ \t]*(?=[a-z])")
_CONTROL_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f]")


def normalize_text(raw: str) -> str:
    """Repair extraction artifacts; keeps newlines, strips other control chars."""
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    for lig, ascii_form in LIGATURES.items():
        text = text.replace(lig, ascii_form)
    text = _DASH_RE.sub("-", text)
    # join words hyphenated across a line break: "recur-\nrent" -> "recurrent"
    text = _EOL_HYPHEN_RE.sub("", text)
    text = _CONTROL_RE.sub("", text)
    return text


_INTRAWORD_HYPHEN_RE = re.compile(r"(?<=[A-Za-z])-(?=[A-Za-z])")


def collapse_intraword_hyphens(text: str) -> str:
    """"Auto-Regressive" -> "AutoRegressive"; used for keyword matching only."""
    return _INTRAWORD_HYPHEN_RE.sub("", text)


# --------------------------------------------------------------------------
# Sentence splitting
# --------------------------------------------------------------------------

# Tokens whose trailing period does not end a sentence.
ABBREVIATIONS = frozenset(
    [
        "al", "e.g", "i.e", "cf", "vs", "etc", "fig", "figs", "eq", "eqs",
        "sec", "secs", "tab", "no", "dr", "mr", "ms", "prof", "resp",
        "approx", "ca", "ch", "pp", "vol",
    ]
)

_BOUNDARY_RE = re.compile(r"[.!?](?=\s)")
_PARA_RE = re.compile(r"\n\s*\n")


def _is_abbreviation(text: str, period_idx: int) -> bool:
    j = period_idx
    start = j
    while start > 0 and (text[start - 1].isalnum() or text[start - 1] == "."):
        start -= 1
    token = text[start:j].lower().rstrip(".")
    if not token:
        return False
    if token in ABBREVIATIONS:
        return True
    # single capital letter: initials like "S." in author names
    if len(token) == 1 and text[start].isupper():
        return True
    return False


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Spans of sentences in ``text``.

    A boundary is a terminator followed by whitespace and an uppercase letter
    or digit, excluding known abbreviations. Paragraph breaks (blank lines)
    always split. Spans are trimmed of surrounding whitespace.
    """
    cut_points = {0, len(text)}
    for match in _PARA_RE.finditer(text):
        cut_points.add(match.start())
        cut_points.add(match.end())
    for match in _BOUNDARY_RE.finditer(text):
        idx = match.start()
        if _is_abbreviation(text, idx):
            continue
        # find the first non-space char after the terminator
        k = idx + 1
        while k < len(text) and text[k] in " \t\n":
            k += 1
        if k >= len(text):
            continue
        if text[k].isupper() or text[k].isdigit():
            cut_points.add(idx + 1)
    points = sorted(cut_points)
    spans: list[tuple[int, int]] = []
    for a, b in zip(points, points[1:]):
        start, end = a, b
        while start < end and text[start] in " \t\n":
            start += 1
        while end > start and text[end - 1] in " \t\n":
            end -= 1
        if start < end:
            spans.append((start, end))
    return spans


# --------------------------------------------------------------------------
# Tokenization
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DEFAULT_STOPWORDS = frozenset(
    """a an and are as at be but by for from has have if in into is it its of
    on or our such that the their these this to was we were which with""".split()
)


def tokenize(text: str, stopwords: frozenset[str] | None = DEFAULT_STOPWORDS) -> list[str]:
    """Lowercase alphanumeric tokens with a stop-word list applied."""
    tokens = _TOKEN_RE.findall(text.lower())
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


# --------------------------------------------------------------------------
# Number parsing
# --------------------------------------------------------------------------

# A numeric mention as it appears in running text. The lookbehind rejects
# digits glued to words or hyphens ("WikiText-103", "GPT-3", "F1").
_MANTISSA = r"(?:\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+\.\d+|\.\d+|\d+)"
_EXP = r"(?:[eE]-?\d+|\s?[x×]\s?10\s?\^?\s?\{?-?\d+\}?)"
_SUFFIX = r"(?:%|\s%|[KkMmBb]\b|\s(?:thousand|million|billion)\b)"

# group-free form, safe to embed inside larger rule patterns
NUM_PATTERN = rf"(?<![\w.\-]){_MANTISSA}{_EXP}?{_SUFFIX}?(?!\w)"

NUMBER_RE = re.compile(
    rf"(?<![\w.\-])(?P<mantissa>{_MANTISSA})(?P<exp>{_EXP})?(?P<suffix>{_SUFFIX})?(?!\w)"
)

_WORD_MAGNITUDES = {"thousand": 1e3, "million": 1e6, "billion": 1e9, "k": 1e3, "m": 1e6, "b": 1e9}
_SUFFIX_UNIT = {"k": "K", "m": "M", "b": "B"}

WORD_NUMBERS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
    "sixteen": 16, "twenty": 20, "thirty": 30, "fifty": 50, "hundred": 100,
}


def parse_number(surface: str) -> tuple[float, str | None]:
    """Parse one numeric mention into (normalized value, unit).

    Percentages land in [0, 1] with unit "%"; magnitude suffixes expand
    ("360M" -> 360_000_000 with unit "M"). Raises ValueError on no match.
    """
    match = NUMBER_RE.search(surface)
    if match is None:
        word = surface.strip().lower()
        if word in WORD_NUMBERS:
            return float(WORD_NUMBERS[word]), None
        raise ValueError(f"not a number: {surface!r}")
    value = float(match.group("mantissa").replace(",", ""))
    exp = match.group("exp")
    if exp:
        if exp[0] in "eE":
            value *= 10.0 ** int(exp[1:])
        else:
            digits = re.search(r"-?\d+$", exp.replace("}", ""))
            value *= 10.0 ** int(digits.group(0))
    unit: str | None = None
    suffix = match.group("suffix")
    if suffix:
        token = suffix.strip().lower()
        if token == "%":
            value /= 100.0
            unit = "%"
        else:
            value *= _WORD_MAGNITUDES[token[0] if len(token) == 1 else token]
            unit = _SUFFIX_UNIT.get(token[0], token.upper()) if len(token) == 1 else token
    return value, unit


def render_value(value: float, unit: str | None) -> float:
    """Invert unit normalization back to the surface-form number (0.4, "%" -> 40)."""
    if unit is None:
        return value
    if unit == "%":
        return value * 100.0
    token = unit.lower()
    if token in _WORD_MAGNITUDES:
        return value / _WORD_MAGNITUDES[token]
    return value


def find_numbers(text: str) -> list[tuple[int, int, float, str | None]]:
    """All numeric mentions in text as (start, end, value, unit)."""
    out = []
    for match in NUMBER_RE.finditer(text):
        try:
            value, unit = parse_number(match.group(0))
        except ValueError:  # pragma: no cover - regex guarantees parse
            continue
        out.append((match.start(), match.end(), value, unit))
    return out
