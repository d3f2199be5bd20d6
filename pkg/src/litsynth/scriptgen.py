"""Training-script artifact generation from extracted hyperparameters.

Templates are data files (``data/templates/*.tmpl``): a small header declares
the slots (which extracted fact name feeds each one, whether it takes one
value or all of them, and an optional default), and the body is opaque
script text with ``{{slot}}`` placeholders. Rendering never leaves a
placeholder behind: bound slots get their value verbatim, default-carrying
slots fall back to the default, and lines depending on an unresolved slot
are turned into TODO comments for human review. Generated scripts are inert
artifacts; nothing here executes them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .extract import FactBundle, HyperparamFact

GUIDELINE_NOTE = (
    "no extracted value; take it from the source paper's experimental setup, "
    "fix the random seed, and record the hardware used"
)

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")
_SETUP_HEADING_RE = re.compile(
    r"^\s*\d*\.?\s*(experimental setup|experiments?|training(?: details| setup)?|"
    r"implementation details?|method(?:s|ology)?)\s*$",
    re.IGNORECASE | re.MULTILINE,
)


@dataclass
class Slot:
    name: str
    source: str | None = None  # extracted fact name feeding this slot
    multi: bool = False
    default: str | None = None


@dataclass
class ScriptTemplate:
    template_id: str
    slots: dict[str, Slot]
    body: str

    @property
    def required_slots(self) -> list[str]:
        return [s.name for s in self.slots.values() if s.source is not None]


@dataclass
class ReproductionPlan:
    paper_id: str
    template_id: str
    bindings: dict[str, object]
    unresolved: list[str]
    notes: list[str] = field(default_factory=list)


class TemplateError(Exception):
    pass


def parse_template(text: str, template_id: str = "") -> ScriptTemplate:
    if "---" not in text:
        raise TemplateError("template missing '---' separator")
    header, body = text.split("---", 1)
    slots: dict[str, Slot] = {}
    for line in header.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("id:"):
            template_id = line.split(":", 1)[1].strip()
            continue
        if not line.startswith("slot:"):
            raise TemplateError(f"unexpected template header line: {line!r}")
        parts = line.split(":", 1)[1].split()
        slot = Slot(name=parts[0])
        for attr in parts[1:]:
            if attr == "multi":
                slot.multi = True
            elif attr.startswith("from="):
                slot.source = attr[5:]
            elif attr.startswith("default="):
                slot.default = attr[8:]
            else:
                raise TemplateError(f"unknown slot attribute {attr!r}")
        slots[slot.name] = slot
    if not template_id:
        raise TemplateError("template has no id")
    body = body.lstrip("\n")
    for m in _PLACEHOLDER_RE.finditer(body):
        if m.group(1) not in slots:
            raise TemplateError(f"placeholder {{{{{m.group(1)}}}}} has no slot declaration")
    return ScriptTemplate(template_id=template_id, slots=slots, body=body)


def load_template(path: str | Path) -> ScriptTemplate:
    return parse_template(Path(path).read_text(encoding="utf-8"))


_REGISTRY: dict[str, ScriptTemplate] | None = None


def template_registry() -> dict[str, ScriptTemplate]:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = {}
        base = resources.files("litsynth").joinpath("data/templates")
        for entry in sorted(base.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".tmpl"):
                template = parse_template(entry.read_text(encoding="utf-8"))
                _REGISTRY[template.template_id] = template
    return _REGISTRY


def get_template(template_id: str) -> ScriptTemplate:
    registry = template_registry()
    if template_id not in registry:
        raise TemplateError(f"unregistered template: {template_id}")
    return registry[template_id]


# --------------------------------------------------------------------------
# Planning
# --------------------------------------------------------------------------

def _setup_region(text: str | None) -> tuple[int, int] | None:
    if not text:
        return None
    m = _SETUP_HEADING_RE.search(text)
    if m is None:
        return None
    following = _SETUP_HEADING_RE.search(text, m.end())
    return (m.end(), following.start() if following else len(text))


def _pick_fact(candidates: list[HyperparamFact], region: tuple[int, int] | None) -> HyperparamFact:
    if region is not None:
        inside = [f for f in candidates if region[0] <= f.span[0] < region[1]]
        if inside:
            return min(inside, key=lambda f: f.span)
    return min(candidates, key=lambda f: f.span)


def plan_reproduction(
    facts: FactBundle,
    template: ScriptTemplate,
    text: str | None = None,
    extra_bindings: dict[str, object] | None = None,
) -> ReproductionPlan:
    """Bind template slots to the best-matching extracted facts.

    Conflicting values for a single-valued slot resolve to the fact earliest
    in the experimental-setup region of ``text`` (earliest span overall when
    no such region is found), and the conflict is recorded in the notes.
    """
    region = _setup_region(text)
    by_name: dict[str, list[HyperparamFact]] = {}
    for fact in sorted(facts.hyperparams, key=lambda f: f.span):
        by_name.setdefault(fact.name, []).append(fact)

    bindings: dict[str, object] = {}
    unresolved: list[str] = []
    notes: list[str] = []
    for slot in template.slots.values():
        if extra_bindings and slot.name in extra_bindings:
            bindings[slot.name] = extra_bindings[slot.name]
            continue
        if slot.source is None:
            continue
        candidates = by_name.get(slot.source, [])
        if not candidates:
            unresolved.append(slot.name)
            continue
        if slot.multi:
            bindings[slot.name] = [f.value for f in candidates]
            continue
        values = {str(f.value) for f in candidates}
        chosen = _pick_fact(candidates, region)
        if len(values) > 1:
            notes.append(
                f"{slot.name}: conflicting values {sorted(values)}; "
                f"took {chosen.value!r} from span {list(chosen.span)}"
            )
        bindings[slot.name] = chosen.value
    return ReproductionPlan(
        paper_id="",
        template_id=template.template_id,
        bindings=bindings,
        unresolved=unresolved,
        notes=notes,
    )


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------

def format_value(value: object) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float) and value == int(value) and abs(value) < 1e15:
        return str(int(value))
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return str(value)


def render_script(plan: ReproductionPlan, template: ScriptTemplate | None = None) -> str:
    """Emit script text: bound values verbatim, unresolved slots as TODOs."""
    if template is None:
        template = get_template(plan.template_id)
    elif template.template_id != plan.template_id:
        raise TemplateError(
            f"plan targets {plan.template_id!r}, template is {template.template_id!r}"
        )

    resolved: dict[str, str] = {}
    for slot in template.slots.values():
        if slot.name in plan.bindings:
            resolved[slot.name] = format_value(plan.bindings[slot.name])
        elif slot.default is not None and slot.name not in plan.unresolved:
            resolved[slot.name] = slot.default

    lines_out: list[str] = []
    lines_out.append(f"# generated by litsynth from template {template.template_id}")
    if plan.paper_id:
        lines_out.append(f"# source paper: {plan.paper_id}")
    for note in plan.notes:
        lines_out.append(f"# note: {note}")
    for name in plan.unresolved:
        lines_out.append(f"# TODO ({name}): {GUIDELINE_NOTE}")
    lines_out.append("")

    for line in template.body.splitlines():
        names = _PLACEHOLDER_RE.findall(line)
        missing = [n for n in names if n not in resolved]
        if missing:
            stripped = _PLACEHOLDER_RE.sub(lambda m: f"<{m.group(1)}>", line).strip()
            lines_out.append(
                f"# TODO ({', '.join(sorted(set(missing)))}): {GUIDELINE_NOTE} -- {stripped}"
            )
            continue
        lines_out.append(_PLACEHOLDER_RE.sub(lambda m: resolved[m.group(1)], line))
    return "\n".join(lines_out) + "\n"


def residual_placeholders(script: str) -> list[str]:
    return _PLACEHOLDER_RE.findall(script)


# --------------------------------------------------------------------------
# Template selection and artifact emission
# --------------------------------------------------------------------------

_MUSIC_HINT_RE = re.compile(r"\b(music|midi|melody|chord|polyphonic|note events?)\b", re.IGNORECASE)


def choose_template_id(facts: FactBundle, record_text: str = "") -> str:
    hints = " ".join(
        [facts.metadata.title or "", facts.metadata.abstract or "", record_text[:2000]]
    )
    datasets = {f.dataset or "" for f in facts.results}
    if _MUSIC_HINT_RE.search(hints) or any("MIDI" in d for d in datasets):
        return "event-seq"
    arch = next((str(f.value) for f in facts.hyperparams if f.name == "architecture"), "")
    if "transformer" in arch.lower():
        return "transformer-lm"
    return "rnn-lm"


def write_script_artifacts(
    plans: list[tuple[str, ReproductionPlan]],
    out_dir: str | Path,
) -> list[Path]:
    """Write one script per (paper, plan) under <out_dir>/<paper>/<template>.py
    plus a manifest listing plans that still have unresolved slots."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    manifest_rows = []
    for paper_id, plan in sorted(plans, key=lambda x: (x[0], x[1].template_id)):
        plan.paper_id = paper_id
        script = render_script(plan)
        paper_dir = out_dir / re.sub(r"[^A-Za-z0-9._-]+", "_", paper_id)
        paper_dir.mkdir(parents=True, exist_ok=True)
        path = paper_dir / f"{plan.template_id}.py"
        path.write_text(script, encoding="utf-8")
        paths.append(path)
        manifest_rows.append(
            {
                "paper": paper_id,
                "template": plan.template_id,
                "script": str(path.relative_to(out_dir)),
                "unresolved": plan.unresolved,
                "notes": plan.notes,
            }
        )
    manifest = out_dir / "manifest.jsonl"
    manifest.write_text(
        "".join(json.dumps(row, sort_keys=True) + "\n" for row in manifest_rows),
        encoding="utf-8",
    )
    return paths
