"""Feature extraction: samples -> fixed-width, group-tagged matrices.

Column layout (deterministic given the corpus):
  per function f (sorted):  count_<f> (system), total_dur_<f> (temporal)
  graph aggregates:         {betweenness,eigenvector,clustering,avg_nbr_deg}_{mean,max}
  temporal globals:         mean_call_duration, std_call_duration, mean_intercall_interval
  system globals:           read_count, write_count, read_bytes, write_bytes, total_calls
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import call_graph
from .errors import EmptyCorpus, WidthMismatch
from .trace_parser import TraceSample

GROUP_GRAPH = "graph"
GROUP_TEMPORAL = "temporal"
GROUP_SYSTEM = "system"

GRAPH_AGGREGATE_COLUMNS = [
    "betweenness_mean", "betweenness_max",
    "eigenvector_mean", "eigenvector_max",
    "clustering_mean", "clustering_max",
    "avg_nbr_deg_mean", "avg_nbr_deg_max",
]
TEMPORAL_GLOBAL_COLUMNS = [
    "mean_call_duration", "std_call_duration", "mean_intercall_interval",
]
SYSTEM_GLOBAL_COLUMNS = [
    "read_count", "write_count", "read_bytes", "write_bytes", "total_calls",
]


@dataclass(frozen=True)
class FeatureColumn:
    name: str
    group: str


@dataclass
class FeatureVocabulary:
    function_names: list[str]
    columns: list[FeatureColumn]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def group_indices(self, group: str) -> list[int]:
        return [i for i, c in enumerate(self.columns) if c.group == group]

    def to_json(self) -> str:
        return json.dumps({
            "functions": self.function_names,
            "columns": [{"name": c.name, "group": c.group} for c in self.columns],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FeatureVocabulary":
        data = json.loads(text)
        return cls(function_names=list(data["functions"]),
                   columns=[FeatureColumn(c["name"], c["group"])
                            for c in data["columns"]])


def infer_group(name: str) -> str:
    """Recover a column's ablation group from its name (CSV round-trips)."""
    if name.startswith("count_"):
        return GROUP_SYSTEM
    if name.startswith("total_dur_"):
        return GROUP_TEMPORAL
    if name in GRAPH_AGGREGATE_COLUMNS:
        return GROUP_GRAPH
    if name in TEMPORAL_GLOBAL_COLUMNS:
        return GROUP_TEMPORAL
    if name in SYSTEM_GLOBAL_COLUMNS:
        return GROUP_SYSTEM
    raise ValueError(f"cannot infer feature group for column {name!r}")


@dataclass(frozen=True)
class ScalingState:
    kind: str  # "minmax" | "zscore"
    a: np.ndarray  # min or mean per column
    b: np.ndarray  # max or std per column


@dataclass
class FeatureMatrix:
    vocab: FeatureVocabulary
    X: np.ndarray
    labels: Optional[np.ndarray] = None        # binary 0/1 per row
    tasks: Optional[list[str]] = None          # multi-label target names
    scaling: Optional[ScalingState] = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def subset_rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(
            vocab=self.vocab,
            X=self.X[idx],
            labels=self.labels[idx] if self.labels is not None else None,
            tasks=[self.tasks[i] for i in idx] if self.tasks is not None else None,
            scaling=self.scaling,
        )

    def subset_columns(self, names: list[str]) -> "FeatureMatrix":
        pos = {c.name: i for i, c in enumerate(self.vocab.columns)}
        idx = [pos[n] for n in names]
        vocab = FeatureVocabulary(
            function_names=self.vocab.function_names,
            columns=[self.vocab.columns[i] for i in idx])
        scaling = None
        if self.scaling is not None:
            scaling = ScalingState(self.scaling.kind,
                                   self.scaling.a[idx], self.scaling.b[idx])
        return FeatureMatrix(vocab=vocab, X=self.X[:, idx],
                             labels=self.labels, tasks=self.tasks,
                             scaling=scaling)


def build_vocabulary(corpus: list[TraceSample]) -> FeatureVocabulary:
    """Column universe from a training corpus; deterministic ordering."""
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    names: set[str] = set()
    for sample in corpus:
        names.update(rec.name for rec in sample.iter_records())
    functions = sorted(names)
    columns: list[FeatureColumn] = []
    for f in functions:
        columns.append(FeatureColumn(f"count_{f}", GROUP_SYSTEM))
        columns.append(FeatureColumn(f"total_dur_{f}", GROUP_TEMPORAL))
    columns += [FeatureColumn(n, GROUP_GRAPH) for n in GRAPH_AGGREGATE_COLUMNS]
    columns += [FeatureColumn(n, GROUP_TEMPORAL) for n in TEMPORAL_GLOBAL_COLUMNS]
    columns += [FeatureColumn(n, GROUP_SYSTEM) for n in SYSTEM_GLOBAL_COLUMNS]
    return FeatureVocabulary(function_names=functions, columns=columns)


def unseen_functions(sample: TraceSample, vocab: FeatureVocabulary) -> set[str]:
    known = set(vocab.function_names)
    return {rec.name for rec in sample.iter_records() if rec.name not in known}


def extract(sample: TraceSample, vocab: FeatureVocabulary) -> np.ndarray:
    """One feature row for a sample; unseen functions are ignored."""
    fpos = {f: i for i, f in enumerate(vocab.function_names)}
    nf = len(vocab.function_names)
    counts = np.zeros(nf)
    durs = np.zeros(nf)
    all_durs: list[float] = []
    starts: list[float] = []
    total_calls = 0
    for rec in sample.iter_records():
        total_calls += 1
        d = rec.duration_us or 0.0  # unknown durations count as 0
        all_durs.append(d)
        if rec.start_time is not None:
            starts.append(rec.start_time)
        i = fpos.get(rec.name)
        if i is not None:
            counts[i] += 1
            durs[i] += d

    graph = call_graph.build_graph(sample)
    if graph.nodes:
        agg = []
        for metric in (call_graph.betweenness, call_graph.eigenvector,
                       call_graph.clustering, call_graph.avg_neighbor_degree):
            vals = list(metric(graph).values())
            agg += [float(np.mean(vals)), float(np.max(vals))]
    else:
        agg = [0.0] * len(GRAPH_AGGREGATE_COLUMNS)

    if all_durs:
        mean_dur = float(np.mean(all_durs))
        std_dur = float(np.std(all_durs))
    else:
        mean_dur = std_dur = 0.0
    if len(starts) >= 2:
        s = np.sort(np.asarray(starts))
        intercall = float(np.mean(np.diff(s))) * 1e6  # us
    else:
        intercall = 0.0  # abstime absent: flagged by the caller

    io = sample.io_meta
    system = [
        float(io.read_count) if io else 0.0,
        float(io.write_count) if io else 0.0,
        float(io.read_bytes) if io else 0.0,
        float(io.write_bytes) if io else 0.0,
        float(total_calls),
    ]

    row = np.empty(len(vocab.columns))
    row[0:2 * nf:2] = counts
    row[1:2 * nf:2] = durs
    row[2 * nf:] = np.asarray(agg + [mean_dur, std_dur, intercall] + system)
    return row


def extract_matrix(samples: list[TraceSample],
                   vocab: FeatureVocabulary) -> FeatureMatrix:
    if not samples:
        raise EmptyCorpus("no samples to extract")
    X = np.vstack([extract(s, vocab) for s in samples])
    warnings: list[str] = []
    n_unseen = sum(len(unseen_functions(s, vocab)) for s in samples)
    if n_unseen:
        warnings.append(f"coverage: {n_unseen} unseen function names ignored")
    if not all(s.has_abstime for s in samples):
        warnings.append("abstime absent for some samples; "
                        "mean_intercall_interval is 0 there")
    labels = None
    if all(s.label is not None for s in samples):
        labels = np.array([s.label for s in samples], dtype=int)
    tasks = None
    if all(s.task_name is not None for s in samples):
        tasks = [s.task_name for s in samples]
    return FeatureMatrix(vocab=vocab, X=X, labels=labels, tasks=tasks,
                         warnings=warnings)


def minmax_fit_transform(m: FeatureMatrix) -> FeatureMatrix:
    """Map each column onto [0,1] using this matrix's extrema (fit on
    training rows only); constant columns map to 0."""
    lo = m.X.min(axis=0)
    hi = m.X.max(axis=0)
    state = ScalingState("minmax", lo, hi)
    return replace(minmax_apply(m, state), scaling=state)


def minmax_apply(m: FeatureMatrix, state: ScalingState) -> FeatureMatrix:
    span = state.b - state.a
    with np.errstate(invalid="ignore", divide="ignore"):
        X = (m.X - state.a) / span
    X[:, span == 0] = 0.0
    X = np.clip(X, 0.0, 1.0)
    return FeatureMatrix(vocab=m.vocab, X=X, labels=m.labels, tasks=m.tasks,
                         scaling=state, warnings=list(m.warnings))


def zscore_fit_transform(m: FeatureMatrix) -> FeatureMatrix:
    mean = m.X.mean(axis=0)
    std = m.X.std(axis=0)
    state = ScalingState("zscore", mean, std)
    return replace(zscore_apply(m, state), scaling=state)


def zscore_apply(m: FeatureMatrix, state: ScalingState) -> FeatureMatrix:
    with np.errstate(invalid="ignore", divide="ignore"):
        X = (m.X - state.a) / state.b
    X[:, state.b == 0] = 0.0
    return FeatureMatrix(vocab=m.vocab, X=X, labels=m.labels, tasks=m.tasks,
                         scaling=state, warnings=list(m.warnings))


def _fmt_cell(x: float) -> str:
    return f"{x:.9g}"


def write_csv(m: FeatureMatrix, path) -> None:
    path = Path(path)
    header = m.vocab.column_names + ["label", "task"]
    lines = [",".join(header)]
    for i in range(m.n_rows):
        cells = [_fmt_cell(v) for v in m.X[i]]
        cells.append(str(int(m.labels[i])) if m.labels is not None else "")
        cells.append(m.tasks[i] if m.tasks is not None else "")
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path, vocab: Optional[FeatureVocabulary] = None) -> FeatureMatrix:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    if header[-2:] != ["label", "task"]:
        raise ValueError("feature CSV must end with label,task columns")
    names = header[:-2]
    if vocab is None:
        functions = sorted({n[len("count_"):] for n in names
                            if n.startswith("count_")})
        vocab = FeatureVocabulary(
            function_names=functions,
            columns=[FeatureColumn(n, infer_group(n)) for n in names])
    elif vocab.column_names != names:
        raise WidthMismatch("CSV columns do not match the given vocabulary")
    rows, labels, tasks = [], [], []
    for line in lines[1:]:
        cells = line.split(",")
        rows.append([float(c) for c in cells[:-2]])
        labels.append(cells[-2])
        tasks.append(cells[-1])
    X = np.asarray(rows, dtype=float)
    lab = np.array([int(v) for v in labels], dtype=int) if all(labels) else None
    tk = list(tasks) if all(tasks) else None
    return FeatureMatrix(vocab=vocab, X=X, labels=lab, tasks=tk)
