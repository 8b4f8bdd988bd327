"""Parser for Linux ftrace function_graph text output.

Turns raw trace text into per-CPU forests of nested call records with
durations and parent/child hierarchy.  The parser tolerates interleaved
CPUs, truncated dumps, comment lines and CPU-switch boundary markers.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

from .errors import MalformedLine, NestingError

OVERHEAD_MARKERS = "+!#*@$"

# duration thresholds (us) for the kernel's overhead annotation characters
_MARKER_THRESHOLDS = [
    (1_000_000.0, "$"),
    (100_000.0, "@"),
    (10_000.0, "*"),
    (1_000.0, "#"),
    (100.0, "!"),
    (10.0, "+"),
]


class BodyKind(Enum):
    LEAF = "leaf"
    ENTRY = "entry"
    EXIT = "exit"
    COMMENT = "comment"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class ParserOptions:
    strict: bool = False
    indent: int = 2  # spaces per nesting level, kernel default


@dataclass(frozen=True)
class RawLine:
    kind: BodyKind
    cpu: int = -1
    abstime: Optional[float] = None
    comm_pid: Optional[str] = None
    marker: Optional[str] = None
    duration_us: Optional[float] = None
    name: Optional[str] = None
    tail_name: Optional[str] = None
    depth: int = 0


@dataclass
class IoMeta:
    read_count: int = 0
    write_count: int = 0
    read_bytes: int = 0
    write_bytes: int = 0

    def __post_init__(self):
        for f in ("read_count", "write_count", "read_bytes", "write_bytes"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be >= 0")

    def as_dict(self):
        return {
            "read_count": self.read_count,
            "write_count": self.write_count,
            "read_bytes": self.read_bytes,
            "write_bytes": self.write_bytes,
        }


@dataclass
class CallRecord:
    name: str
    cpu: int
    depth: int
    duration_us: Optional[float] = None  # None = unknown (truncated entry)
    start_time: Optional[float] = None
    end_time: Optional[float] = None
    parent_name: Optional[str] = None
    children: list["CallRecord"] = field(default_factory=list)

    def walk(self) -> Iterator["CallRecord"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def containment_ok(self, slack_us: float = 1e-3) -> bool:
        """Parent duration covers the sum of known child durations."""
        if self.duration_us is None:
            return True
        child_durs = [c.duration_us for c in self.children]
        if any(d is None for d in child_durs):
            return True
        return self.duration_us >= sum(child_durs) - slack_us


@dataclass
class TraceSample:
    records: dict[int, list[CallRecord]] = field(default_factory=dict)
    io_meta: Optional[IoMeta] = None
    label: Optional[int] = None
    task_name: Optional[str] = None
    warnings: list[str] = field(default_factory=list)
    has_abstime: bool = False
    source: Optional[str] = None

    def iter_records(self) -> Iterator[CallRecord]:
        for cpu in sorted(self.records):
            for root in self.records[cpu]:
                yield from root.walk()

    def record_count(self) -> int:
        return sum(1 for _ in self.iter_records())

    def call_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for rec in self.iter_records():
            counts[rec.name] = counts.get(rec.name, 0) + 1
        return counts


# line layout:  [abstime |]  cpu)  [comm-pid |]  [marker] [duration us]  |  body
_ABSTIME_CPU_RE = re.compile(r"^\s*(\d+\.\d+)\s+\|\s*(\d+)\)(.*)$")
_CPU_RE = re.compile(r"^\s*(\d+)\)(.*)$")
_COMM_PID_RE = re.compile(r"^\s*(\S+-\d+)\s+\|(.*)$")
_DUR_BODY_RE = re.compile(
    r"^\s*(?:([%s])\s*)?(?:(\d+(?:\.\d+)?)\s+us\s*)?\|(.*)$" % re.escape(OVERHEAD_MARKERS)
)
_EXIT_RE = re.compile(r"^\}\s*(?:;)?\s*(?:/\*\s*(.*?)\s*\*/)?$")
_NAME_RE = re.compile(r"^(\S+)\(\)$")


def parse_line(line: str, options: ParserOptions = ParserOptions()) -> RawLine:
    """Classify one physical line of function_graph output.

    In strict mode malformed lines raise MalformedLine; otherwise they are
    returned as Comment-equivalent skips (the streaming parser records the
    warning).
    """
    try:
        return _parse_line_strict(line, options)
    except MalformedLine:
        if options.strict:
            raise
        return RawLine(kind=BodyKind.COMMENT)


def _parse_line_strict(line: str, options: ParserOptions) -> RawLine:
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return RawLine(kind=BodyKind.COMMENT)
    if set(stripped) <= {"-"} or "=>" in stripped:
        # CPU-switch separator emitted by the kernel between task migrations
        return RawLine(kind=BodyKind.BOUNDARY)

    abstime = None
    m = _ABSTIME_CPU_RE.match(line)
    if m:
        abstime = float(m.group(1))
        cpu, rest = int(m.group(2)), m.group(3)
    else:
        m = _CPU_RE.match(line)
        if not m:
            raise MalformedLine(f"no CPU column: {line!r}", column=0)
        cpu, rest = int(m.group(1)), m.group(2)

    comm_pid = None
    m = _COMM_PID_RE.match(rest)
    if m:
        comm_pid = m.group(1)
        rest = m.group(2)

    m = _DUR_BODY_RE.match(rest)
    if not m:
        raise MalformedLine(f"no duration/body separator: {line!r}",
                            column=len(line) - len(rest))
    marker, dur_text, body = m.group(1), m.group(2), m.group(3)
    duration_us = float(dur_text) if dur_text is not None else None

    # body starts with a fixed 2-space column gap, then indentation
    if not body.startswith("  "):
        raise MalformedLine(f"body column gap missing: {line!r}")
    body = body[2:]
    leading = len(body) - len(body.lstrip(" "))
    if leading % options.indent != 0:
        raise MalformedLine(f"odd indentation ({leading} spaces): {line!r}")
    depth = leading // options.indent
    content = body.strip()

    if content.startswith("/*"):
        return RawLine(kind=BodyKind.COMMENT, cpu=cpu, abstime=abstime)

    if content.startswith("}"):
        m = _EXIT_RE.match(content)
        if not m:
            raise MalformedLine(f"bad exit line: {line!r}")
        if duration_us is None:
            raise MalformedLine(f"exit line without duration: {line!r}")
        return RawLine(kind=BodyKind.EXIT, cpu=cpu, abstime=abstime,
                       comm_pid=comm_pid, marker=marker, duration_us=duration_us,
                       tail_name=m.group(1), depth=depth)

    if content.endswith("{"):
        name_part = content[:-1].rstrip()
        m = _NAME_RE.match(name_part)
        if not m:
            raise MalformedLine(f"bad entry line: {line!r}")
        if duration_us is not None:
            raise MalformedLine(f"entry line carries a duration: {line!r}")
        return RawLine(kind=BodyKind.ENTRY, cpu=cpu, abstime=abstime,
                       comm_pid=comm_pid, name=m.group(1), depth=depth)

    if content.endswith(";"):
        m = _NAME_RE.match(content[:-1].rstrip())
        if not m:
            raise MalformedLine(f"bad leaf line: {line!r}")
        if duration_us is None:
            raise MalformedLine(f"leaf line without duration: {line!r}")
        return RawLine(kind=BodyKind.LEAF, cpu=cpu, abstime=abstime,
                       comm_pid=comm_pid, marker=marker, duration_us=duration_us,
                       name=m.group(1), depth=depth)

    raise MalformedLine(f"unrecognized body: {line!r}")


def parse_trace(stream, options: ParserOptions = ParserOptions()) -> TraceSample:
    """Parse a complete or truncated function_graph dump.

    `stream` may be a string, an iterable of lines, or a file object.
    Nesting state is tracked per CPU.  Tolerant mode (the default) never
    aborts: anomalies are collected as warnings on the returned sample.
    """
    if isinstance(stream, str):
        lines: Iterable[str] = stream.splitlines()
    else:
        lines = stream

    roots: dict[int, list[CallRecord]] = {}
    stacks: dict[int, list[CallRecord]] = {}
    warnings: list[str] = []
    has_abstime = False

    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        try:
            rl = _parse_line_strict(line, options)
        except MalformedLine as exc:
            if options.strict:
                exc.lineno = lineno
                raise
            warnings.append(f"line {lineno}: malformed, skipped ({exc})")
            continue
        if rl.kind in (BodyKind.COMMENT, BodyKind.BOUNDARY):
            continue
        if rl.abstime is not None:
            has_abstime = True

        stack = stacks.setdefault(rl.cpu, [])
        cpu_roots = roots.setdefault(rl.cpu, [])

        if rl.kind in (BodyKind.LEAF, BodyKind.ENTRY):
            if rl.depth != len(stack):
                msg = (f"line {lineno}: depth {rl.depth} does not match "
                       f"nesting level {len(stack)} on cpu {rl.cpu}")
                if options.strict:
                    raise NestingError(msg)
                warnings.append(msg)
            parent = stack[-1] if stack else None
            rec = CallRecord(
                name=rl.name,
                cpu=rl.cpu,
                depth=len(stack),
                duration_us=rl.duration_us,
                start_time=rl.abstime,
                parent_name=parent.name if parent else None,
            )
            if rl.kind is BodyKind.LEAF and rl.abstime is not None:
                rec.end_time = rl.abstime + rl.duration_us * 1e-6
            (parent.children if parent else cpu_roots).append(rec)
            if rl.kind is BodyKind.ENTRY:
                stack.append(rec)
        else:  # EXIT
            if not stack:
                msg = f"line {lineno}: unmatched exit on cpu {rl.cpu}, dropped"
                if options.strict:
                    raise NestingError(msg)
                warnings.append(msg)
                continue
            rec = stack.pop()
            if rl.depth != len(stack):
                msg = (f"line {lineno}: exit depth {rl.depth} does not match "
                       f"entry depth {len(stack)} on cpu {rl.cpu}")
                if options.strict:
                    raise NestingError(msg)
                warnings.append(msg)
            if rl.tail_name and rl.tail_name != rec.name:
                msg = (f"line {lineno}: exit tail {rl.tail_name!r} does not "
                       f"match open entry {rec.name!r}")
                if options.strict:
                    raise NestingError(msg)
                warnings.append(msg)
            rec.duration_us = rl.duration_us
            if rl.abstime is not None:
                rec.end_time = rl.abstime
                if rec.start_time is None and rl.duration_us is not None:
                    rec.start_time = rl.abstime - rl.duration_us * 1e-6

    for cpu in sorted(stacks):
        for rec in stacks[cpu]:
            warnings.append(
                f"cpu {cpu}: entry {rec.name!r} unclosed at end of stream, "
                "duration unknown")

    return TraceSample(records=roots, warnings=warnings, has_abstime=has_abstime)


def filter_records(sample: TraceSample, keep: Callable[[str], bool]) -> TraceSample:
    """Drop records whose name fails the predicate.

    Children of a removed record are promoted to its parent, so an A->B->C
    chain with B removed yields A->C.
    """
    removed = 0

    def go(rec: CallRecord, parent_name: Optional[str], depth: int) -> list[CallRecord]:
        nonlocal removed
        if keep(rec.name):
            kids: list[CallRecord] = []
            for c in rec.children:
                kids.extend(go(c, rec.name, depth + 1))
            return [replace(rec, depth=depth, parent_name=parent_name, children=kids)]
        removed += 1
        out: list[CallRecord] = []
        for c in rec.children:
            out.extend(go(c, parent_name, depth))
        return out

    new_roots: dict[int, list[CallRecord]] = {}
    for cpu, cpu_roots in sample.records.items():
        forest: list[CallRecord] = []
        for root in cpu_roots:
            forest.extend(go(root, None, 0))
        new_roots[cpu] = forest

    warnings = list(sample.warnings)
    if removed:
        warnings.append(f"filter: removed {removed} records")
    return TraceSample(records=new_roots, io_meta=sample.io_meta,
                       label=sample.label, task_name=sample.task_name,
                       warnings=warnings, has_abstime=sample.has_abstime,
                       source=sample.source)


def overhead_marker(duration_us: float) -> Optional[str]:
    for threshold, marker in _MARKER_THRESHOLDS:
        if duration_us >= threshold:
            return marker
    return None


def _format_duration_column(duration_us: float) -> str:
    marker = overhead_marker(duration_us) or " "
    return f"{marker}{duration_us:>10.3f} us "


def format_forest(ordered_roots: list[CallRecord], abstime: bool = False) -> str:
    """Render call trees back to function_graph text (canonical layout)."""
    out: list[str] = []

    def prefix(cpu: int, t: Optional[float]) -> str:
        if abstime:
            return f"{(t if t is not None else 0.0):12.6f} |  {cpu}) "
        return f" {cpu}) "

    def emit(rec: CallRecord, depth: int) -> None:
        indent = "  " * depth
        if not rec.children:
            dur = rec.duration_us if rec.duration_us is not None else 0.0
            out.append(prefix(rec.cpu, rec.start_time)
                       + _format_duration_column(dur)
                       + f"|  {indent}{rec.name}();")
            return
        out.append(prefix(rec.cpu, rec.start_time)
                   + " " * len(_format_duration_column(0.0))
                   + f"|  {indent}{rec.name}() {{")
        for child in rec.children:
            emit(child, depth + 1)
        dur = rec.duration_us if rec.duration_us is not None else 0.0
        out.append(prefix(rec.cpu, rec.end_time)
                   + _format_duration_column(dur)
                   + f"|  {indent}}} /* {rec.name} */")

    for root in ordered_roots:
        emit(root, 0)
    return "\n".join(out) + ("\n" if out else "")


def format_trace(sample: TraceSample, abstime: Optional[bool] = None) -> str:
    """Pretty-print a parsed sample; parse(format(parse(x))) is stable."""
    if abstime is None:
        abstime = sample.has_abstime
    ordered = [r for cpu in sorted(sample.records) for r in sample.records[cpu]]
    return format_forest(ordered, abstime=abstime)


def sidecar_path(trace_path) -> Path:
    p = Path(trace_path)
    base = p.name[:-6] if p.name.endswith(".trace") else p.name
    return p.with_name(base + ".io.json")


def load_sample(trace_path, options: ParserOptions = ParserOptions()) -> TraceSample:
    """Parse one trace file plus its optional *.io.json sidecar."""
    p = Path(trace_path)
    with open(p, "r", encoding="utf-8", errors="surrogateescape") as fh:
        sample = parse_trace(fh, options)
    sample.source = str(p)
    sc = sidecar_path(p)
    if sc.exists():
        meta = json.loads(sc.read_text())
        sample.io_meta = IoMeta(
            read_count=int(meta.get("read_count", 0)),
            write_count=int(meta.get("write_count", 0)),
            read_bytes=int(meta.get("read_bytes", 0)),
            write_bytes=int(meta.get("write_bytes", 0)),
        )
        if "label" in meta:
            sample.label = int(meta["label"])
        if "task" in meta:
            sample.task_name = meta["task"]
    return sample


def load_corpus(corpus_dir, options: ParserOptions = ParserOptions()) -> list[TraceSample]:
    """Load every *.trace file under a directory (sorted, recursive)."""
    paths = sorted(Path(corpus_dir).rglob("*.trace"))
    return [load_sample(p, options) for p in paths]


TRACEFS_CANDIDATES = ("/sys/kernel/tracing", "/sys/kernel/debug/tracing")


def capture_live(seconds: float, tracefs: Optional[str] = None) -> str:
    """Capture a live function_graph trace from tracefs (root only).

    Disabled by default everywhere else in the toolkit; provided for
    completeness and excluded from the test suite.
    """
    if tracefs is None:
        for cand in TRACEFS_CANDIDATES:
            if os.path.isdir(cand):
                tracefs = cand
                break
    if tracefs is None:
        raise OSError("tracefs not available on this system")
    with open(os.path.join(tracefs, "current_tracer"), "w") as fh:
        fh.write("function_graph")
    with open(os.path.join(tracefs, "tracing_on"), "w") as fh:
        fh.write("1")
    try:
        time.sleep(seconds)
    finally:
        with open(os.path.join(tracefs, "tracing_on"), "w") as fh:
            fh.write("0")
    with open(os.path.join(tracefs, "trace"), "r") as fh:
        return fh.read()
