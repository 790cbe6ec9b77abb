"""Structured log parsing and template mining.

Raw log lines are split into a message header (timestamp fields, level,
component) and a free-text content body.  Content bodies are grouped into
event templates with a fixed-depth parse tree: the first tree level keys
on token count, the next ``depth - 2`` levels key on leading tokens, and
each leaf holds candidate templates compared by token-wise similarity.
Parameter positions are abstracted to the wildcard token ``<*>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

WILDCARD = "<*>"

# Named header layouts, one per supported dataset family.  A format spec is
# a space-separated list of <Field> markers; everything outside the markers
# is matched literally.
FORMAT_PRESETS = {
    "hdfs": "<Date> <Time> <Pid> <Level> <Component>: <Content>",
    "bgl": "<Label> <Timestamp> <Date> <Node> <Time> <NodeRepeat> <Type> <Component> <Level> <Content>",
}

ID_PATTERN_PRESETS = {
    "hdfs": r"blk_-?\d+",
    "bgl": None,
}

_NUMERIC_RE = re.compile(r"^\d+$")


class HeaderMismatch(Exception):
    """Raised when a line does not match the header format spec."""


class IoError(Exception):
    """Raised when a log file cannot be read."""


@dataclass
class LogRecord:
    line_no: int
    timestamp_fields: dict[str, str]
    level: str
    component: str
    content: list[str]
    identifier: Optional[str] = None
    # Filled in by later pipeline stages; not part of the header layout.
    event_id: Optional[int] = None
    alert: Optional[int] = None


@dataclass
class Template:
    event_id: int
    tokens: list[str]

    def wildcard_count(self) -> int:
        return sum(1 for t in self.tokens if t == WILDCARD)


def compile_format(format_spec: str) -> re.Pattern:
    """Turn a ``<Field>`` header spec into a compiled regex.

    Field markers become named groups; literal text between markers is
    escaped; runs of whitespace match one-or-more whitespace characters.
    The Content field greedily captures the rest of the line.
    """
    parts = re.split(r"(<[^<>]+>)", format_spec)
    out = []
    for part in parts:
        if not part:
            continue
        if part.startswith("<") and part.endswith(">"):
            name = part[1:-1]
            if name == "Content":
                out.append(r"(?P<Content>.*)")
            else:
                out.append(rf"(?P<{name}>\S+)")
        else:
            stripped = part.strip()
            if not stripped:
                out.append(r"\s+")
                continue
            if part[0].isspace():
                out.append(r"\s+")
            out.append(re.sub(r"\s+", r"\\s+", re.escape(stripped)))
            if part[-1].isspace():
                out.append(r"\s+")
    return re.compile("^" + "".join(out) + "$")


def _spec_to_pattern(format_spec: str) -> re.Pattern:
    if isinstance(format_spec, re.Pattern):
        return format_spec
    spec = FORMAT_PRESETS.get(format_spec, format_spec)
    return compile_format(spec)


def parse_line(
    raw: str,
    format_spec: str | re.Pattern,
    line_no: int = 0,
    id_pattern: str | re.Pattern | None = None,
) -> LogRecord:
    """Split one raw line into header fields and tokenized content.

    Raises HeaderMismatch when the header does not match or the matched
    content is empty; callers count and skip such lines rather than
    dropping them silently.
    """
    pattern = _spec_to_pattern(format_spec)
    m = pattern.match(raw.rstrip("\n"))
    if m is None:
        raise HeaderMismatch(f"line {line_no} does not match header format")
    fields = m.groupdict()
    content = fields.pop("Content", "").split()
    if not content:
        raise HeaderMismatch(f"line {line_no} has an empty message body")
    level = fields.pop("Level", "")
    component = fields.pop("Component", "")
    identifier = None
    if id_pattern is not None:
        id_re = re.compile(id_pattern) if isinstance(id_pattern, str) else id_pattern
        for tok in content:
            got = id_re.search(tok)
            if got:
                identifier = got.group(0)
                break
    return LogRecord(
        line_no=line_no,
        timestamp_fields=fields,
        level=level,
        component=component,
        content=content,
        identifier=identifier,
    )


def _preprocess(content: Iterable[str]) -> list[str]:
    # Purely numeric tokens are parameters by convention; wildcard them
    # before tree descent so numbers never split tree paths.
    return [WILDCARD if _NUMERIC_RE.match(t) else t for t in content]


def _similarity(template_tokens: list[str], content: list[str]) -> float:
    # Fraction of equal positions; a wildcard counts as equal to anything.
    same = sum(
        1 for a, b in zip(template_tokens, content) if a == b or a == WILDCARD
    )
    return same / len(template_tokens)


class TemplateTable:
    """Fixed-depth prefix tree over mined templates.

    Construction is single-writer; once built, the table can be shared
    read-only across parallel workers (``match`` with ``create=False``
    does not mutate).
    """

    def __init__(self, similarity_threshold: float = 0.5, depth: int = 4):
        if not 0.0 < similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be in (0, 1]")
        if depth < 2:
            raise ValueError("depth must be >= 2")
        self.similarity_threshold = similarity_threshold
        self.depth = depth
        self.templates: list[Template] = []
        self._root: dict = {}

    def __len__(self) -> int:
        return len(self.templates)

    def _leaf_for(self, content: list[str], create: bool) -> Optional[list[Template]]:
        node = self._root
        keys = [len(content)] + content[: self.depth - 2]
        for key in keys[:-1]:
            child = node.get(key)
            if child is None:
                if not create:
                    return None
                child = {}
                node[key] = child
            node = child
        leaf = node.get(keys[-1])
        if leaf is None:
            if not create:
                return None
            leaf = []
            node[keys[-1]] = leaf
        return leaf

    def match(self, content: list[str], create: bool = True) -> Optional[int]:
        """Return the event id for a content token list.

        Finds the most similar leaf template (ties keep the earliest
        inserted); at or above the similarity threshold the template is
        merged -- mismatching positions become wildcards -- and its id is
        returned.  Otherwise, when ``create`` is set, a new template is
        minted with the next dense id.
        """
        if not content:
            raise ValueError("content must be non-empty")
        tokens = _preprocess(content)
        leaf = self._leaf_for(tokens, create)
        if leaf is not None:
            best, best_sim = None, -1.0
            for tmpl in leaf:
                sim = _similarity(tmpl.tokens, tokens)
                if sim > best_sim:
                    best, best_sim = tmpl, sim
            if best is not None and best_sim >= self.similarity_threshold:
                if create:
                    best.tokens = [
                        a if a == b else WILDCARD
                        for a, b in zip(best.tokens, tokens)
                    ]
                return best.event_id
        if not create:
            return None
        template = Template(event_id=len(self.templates), tokens=list(tokens))
        self.templates.append(template)
        leaf.append(template)
        return template.event_id

    def insert_template(self, tokens: list[str]) -> int:
        """Register a template verbatim (used when loading a saved table)."""
        template = Template(event_id=len(self.templates), tokens=list(tokens))
        self.templates.append(template)
        leaf = self._leaf_for(list(tokens), create=True)
        leaf.append(template)
        return template.event_id


def match_template(table: TemplateTable, content: list[str]) -> int:
    return table.match(content)


def parse_file(
    path,
    format_spec: str | re.Pattern,
    similarity_threshold: float = 0.5,
    depth: int = 4,
    id_pattern: str | re.Pattern | None = None,
) -> tuple[list[LogRecord], TemplateTable, int]:
    """Parse a log file into records plus a mined template table.

    Returns records in file order, the table, and the count of lines that
    failed header parsing.  Record ``event_id`` fields are filled in.
    """
    table = TemplateTable(similarity_threshold=similarity_threshold, depth=depth)
    records: list[LogRecord] = []
    skipped = 0
    if isinstance(id_pattern, str) and id_pattern in ID_PATTERN_PRESETS:
        id_pattern = ID_PATTERN_PRESETS[id_pattern]
    try:
        handle = open(path, "r", errors="replace")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    with handle:
        pattern = _spec_to_pattern(format_spec)
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                rec = parse_line(line, pattern, line_no=line_no, id_pattern=id_pattern)
            except HeaderMismatch:
                skipped += 1
                continue
            rec.event_id = table.match(rec.content)
            records.append(rec)
    return records, table, skipped


def save_table(table: TemplateTable, path) -> None:
    """Serialize as one ``<event_id>\\t<space-joined tokens>`` line each."""
    with open(path, "w") as fh:
        for tmpl in table.templates:
            fh.write(f"{tmpl.event_id}\t{' '.join(tmpl.tokens)}\n")


def load_table(
    path, similarity_threshold: float = 0.5, depth: int = 4
) -> TemplateTable:
    table = TemplateTable(similarity_threshold=similarity_threshold, depth=depth)
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            event_id, tokens = line.split("\t", 1)
            got = table.insert_template(tokens.split(" "))
            if got != int(event_id):
                raise ValueError(f"non-dense event id {event_id} in {path}")
    return table


def save_records(records: list[LogRecord], path) -> None:
    """Structured records as tab-separated text with a header row."""
    with open(path, "w") as fh:
        fh.write("line_no\tidentifier\talert\tevent_id\tlevel\tcomponent\tcontent\n")
        for rec in records:
            ident = rec.identifier if rec.identifier is not None else ""
            alert = "" if rec.alert is None else str(rec.alert)
            event = "" if rec.event_id is None else str(rec.event_id)
            fh.write(
                f"{rec.line_no}\t{ident}\t{alert}\t{event}\t{rec.level}\t"
                f"{rec.component}\t{' '.join(rec.content)}\n"
            )


def load_records(path) -> list[LogRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:4] != ["line_no", "identifier", "alert", "event_id"]:
            raise IoError(f"unrecognized structured record header in {path}")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            line_no, ident, alert, event, level, component, content = parts
            records.append(
                LogRecord(
                    line_no=int(line_no),
                    timestamp_fields={},
                    level=level,
                    component=component,
                    content=content.split(" "),
                    identifier=ident or None,
                    event_id=int(event) if event else None,
                    alert=int(alert) if alert else None,
                )
            )
    return records
