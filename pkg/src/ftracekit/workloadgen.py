"""Deterministic synthetic generator of labeled function_graph traces.

Emulates encryption-heavy versus plain-I/O workloads (and several named
tasks) at desk scale.  Every trace comes with an I/O sidecar and exact
bookkeeping of emitted calls, which the parser and extractor tests use as
an oracle.  No real cryptography is performed; names are flavor only.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .trace_parser import CallRecord, IoMeta, TraceSample, format_forest

CRYPTO_FUNCTIONS = [
    "aes_encrypt_block", "aes_key_expand", "sha256_transform",
    "chacha_block_xor", "crypto_shash_update", "blkcipher_walk_next",
    "key_schedule_round", "xts_tweak_mul", "scatterwalk_map",
    "entropy_pool_mix",
]

IO_FUNCTIONS = [
    "vfs_read", "vfs_write", "rw_verify_area", "generic_file_read_iter",
    "ext4_file_write_iter", "copy_page_to_iter", "filemap_get_pages",
    "mark_page_accessed", "fsnotify", "do_sys_openat2",
]

# names echo real kernel symbols seen in function_graph dumps
MM_SCHED_FUNCTIONS = [
    "kmem_cache_alloc", "free_unref_page_list", "unlink_anon_vmas",
    "task_active_pid_ns", "mutex_unlock", "_raw_spin_lock",
    "schedule_timeout", "update_load_avg", "x2apic_send_IPI",
    "mm_put_huge_zero_page", "special_mapping_close", "untrack_pfn",
    "vma_interval_tree_remove",
]

RING_FUNCTIONS = [f"ring_stage_{i:02d}" for i in range(12)]


@dataclass
class WorkloadProfile:
    name: str
    label: int
    vocabulary: list[tuple[str, float]]  # (function name, relative rate)
    max_depth: int = 3
    branching: float = 1.4
    duration_median_us: float = 1.5
    duration_sigma: float = 0.6
    crypto_intensity: float = 0.0
    io_model: dict = field(default_factory=lambda: {
        "read_count": 20, "write_count": 10,
        "read_block": 4096, "write_block": 4096})
    edge_scheme: Optional[tuple[int, int]] = None  # circulant child offsets

    def __post_init__(self):
        if not 0.0 <= self.crypto_intensity <= 1.0:
            raise ValueError("crypto_intensity must be in [0,1]")
        if any(rate <= 0 for _, rate in self.vocabulary):
            raise ValueError("vocabulary rates must be positive")


@dataclass
class GeneratorBookkeeping:
    call_counts: dict[str, int] = field(default_factory=dict)
    total_calls: int = 0
    io_meta: Optional[IoMeta] = None
    label: int = 0
    task: str = ""

    def note(self, name: str) -> None:
        self.call_counts[name] = self.call_counts.get(name, 0) + 1
        self.total_calls += 1


def _weighted(vocab):
    names = [n for n, _ in vocab]
    rates = np.asarray([r for _, r in vocab], dtype=float)
    return names, rates / rates.sum()


def _lognormal_us(rng, median: float, sigma: float) -> float:
    return float(rng.lognormal(math.log(median), sigma))


def _build_tree(rng, profile: WorkloadProfile, names, probs, depth: int,
                book: GeneratorBookkeeping, branching: float,
                max_depth: int) -> CallRecord:
    name = names[int(rng.choice(len(names), p=probs))]
    book.note(name)
    rec = CallRecord(name=name, cpu=0, depth=depth)
    if depth < max_depth:
        lam = branching / (depth + 1.0)
        for _ in range(int(rng.poisson(lam))):
            child = _build_tree(rng, profile, names, probs, depth + 1, book,
                                branching, max_depth)
            child.parent_name = name
            rec.children.append(child)
    return rec


def _assign_durations(rec: CallRecord, rng, profile: WorkloadProfile) -> None:
    for child in rec.children:
        _assign_durations(child, rng, profile)
    self_us = _lognormal_us(rng, profile.duration_median_us,
                            profile.duration_sigma)
    child_total = sum(c.duration_us for c in rec.children)
    # rounding after summing printed child values keeps containment exact
    rec.duration_us = round(child_total + round(self_us, 3), 3)


def _assign_times(rec: CallRecord, start: float) -> float:
    rec.start_time = round(start, 6)
    t = start
    for child in rec.children:
        t = _assign_times(child, t)
    rec.end_time = round(rec.start_time + rec.duration_us * 1e-6, 6)
    return rec.end_time


def _set_cpu(rec: CallRecord, cpu: int) -> None:
    rec.cpu = cpu
    for child in rec.children:
        _set_cpu(child, cpu)


def _ring_tree(profile: WorkloadProfile, tree_index: int,
               book: GeneratorBookkeeping) -> CallRecord:
    """Fixed circulant wiring: tree t roots ring function t%12 and calls the
    children at the profile's offsets.  Per-function call counts and the
    duration distribution are identical across schemes, so only graph
    structure separates the classes."""
    i = tree_index % len(RING_FUNCTIONS)
    root = CallRecord(name=RING_FUNCTIONS[i], cpu=0, depth=0)
    book.note(root.name)
    for off in profile.edge_scheme:
        j = (i + off) % len(RING_FUNCTIONS)
        child = CallRecord(name=RING_FUNCTIONS[j], cpu=0, depth=1,
                           parent_name=root.name)
        book.note(child.name)
        root.children.append(child)
    return root


def _rng_for(profile: WorkloadProfile, seed: int):
    return np.random.default_rng([zlib.crc32(profile.name.encode()), seed])


def generate_trace(profile: WorkloadProfile, seed: int,
                   n_root_calls: int = 30, multi_cpu: bool = False,
                   n_cpus: int = 2, abstime: bool = False):
    """Emit (trace text, IoMeta, GeneratorBookkeeping) for one workload run."""
    rng = _rng_for(profile, seed)
    book = GeneratorBookkeeping(label=profile.label, task=profile.name)
    names, probs = _weighted(profile.vocabulary)
    crypto_names, crypto_probs = _weighted(
        [(n, 1.0) for n in CRYPTO_FUNCTIONS])

    roots: list[CallRecord] = []
    for t in range(n_root_calls):
        if profile.edge_scheme is not None:
            root = _ring_tree(profile, t, book)
        elif (profile.crypto_intensity > 0
              and rng.random() < profile.crypto_intensity):
            # crypto bursts: denser and deeper subtrees from the crypto vocab
            root = _build_tree(rng, profile, crypto_names, crypto_probs, 0,
                               book, profile.branching + 1.2,
                               profile.max_depth + 1)
        else:
            root = _build_tree(rng, profile, names, probs, 0, book,
                               profile.branching, profile.max_depth)
        _assign_durations(root, rng, profile)
        roots.append(root)

    if multi_cpu:
        for t, root in enumerate(roots):
            _set_cpu(root, t % n_cpus)
    if abstime:
        clocks = {cpu: 1000.0 + cpu for cpu in range(n_cpus if multi_cpu else 1)}
        for root in roots:
            gap = 1e-6
            clocks[root.cpu] = _assign_times(root, clocks[root.cpu] + gap)

    io = IoMeta(
        read_count=int(rng.poisson(profile.io_model["read_count"])),
        write_count=int(rng.poisson(profile.io_model["write_count"])),
    )
    io.read_bytes = io.read_count * int(profile.io_model["read_block"])
    io.write_bytes = io.write_count * int(profile.io_model["write_block"])
    book.io_meta = io

    text = format_forest(roots, abstime=abstime)
    return text, io, book


def generate_corpus(profiles: list[WorkloadProfile], per_profile_count: int,
                    seed: int, out_dir, n_root_calls: int = 30,
                    multi_cpu: bool = False, abstime: bool = False) -> dict:
    """Write per_profile_count traces per profile plus sidecars and a
    manifest; returns the manifest."""
    if per_profile_count < 1:
        raise ValueError("per_profile_count must be >= 1")
    out = Path(out_dir)
    entries = []
    for p_idx, profile in enumerate(profiles):
        task_dir = out / profile.name
        task_dir.mkdir(parents=True, exist_ok=True)
        for j in range(per_profile_count):
            file_seed = int(np.random.SeedSequence(
                [seed, p_idx, j]).generate_state(1)[0]) % 10 ** 9
            text, io, book = generate_trace(
                profile, file_seed, n_root_calls=n_root_calls,
                multi_cpu=multi_cpu, abstime=abstime)
            stem = f"{j:04d}_{file_seed:09d}"
            trace_path = task_dir / f"{stem}.trace"
            trace_path.write_text(text)
            sidecar = {"label": profile.label, "task": profile.name,
                       **io.as_dict()}
            (task_dir / f"{stem}.io.json").write_text(json.dumps(sidecar))
            entries.append({
                "file": str(trace_path.relative_to(out)),
                "sidecar": f"{profile.name}/{stem}.io.json",
                "task": profile.name,
                "label": profile.label,
                "seed": file_seed,
                "sha256": hashlib.sha256(text.encode()).hexdigest(),
                "total_calls": book.total_calls,
                "call_counts": book.call_counts,
            })
    manifest = {"seed": seed, "n_root_calls": n_root_calls,
                "multi_cpu": multi_cpu, "abstime": abstime,
                "profiles": [p.name for p in profiles],
                "entries": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def _mix(base: list[str], extra: list[str], base_rate=1.0, extra_rate=3.0):
    return ([(n, base_rate) for n in base] + [(n, extra_rate) for n in extra])


def default_pair() -> list[WorkloadProfile]:
    """Two-profile corpus with class signal in all three feature groups."""
    plain = WorkloadProfile(
        name="plain_io", label=0,
        vocabulary=_mix(MM_SCHED_FUNCTIONS, IO_FUNCTIONS),
        max_depth=3, branching=1.3,
        duration_median_us=3.0, duration_sigma=0.7,
        io_model={"read_count": 40, "write_count": 30,
                  "read_block": 4096, "write_block": 4096},
    )
    crypto = WorkloadProfile(
        name="crypto_worker", label=1,
        vocabulary=_mix(MM_SCHED_FUNCTIONS, IO_FUNCTIONS, extra_rate=1.5),
        max_depth=3, branching=1.3,
        duration_median_us=1.2, duration_sigma=0.5,
        crypto_intensity=0.7,
        io_model={"read_count": 40, "write_count": 60,
                  "read_block": 4096, "write_block": 512},
    )
    return [plain, crypto]


def graph_signal_pair() -> list[WorkloadProfile]:
    """Classes that differ only in call-graph wiring (circulant offsets);
    counts, durations and I/O distributions are identical, so only graph
    features carry signal."""
    common = dict(
        vocabulary=[(n, 1.0) for n in RING_FUNCTIONS],
        duration_median_us=2.0, duration_sigma=0.6,
        io_model={"read_count": 25, "write_count": 25,
                  "read_block": 2048, "write_block": 2048},
    )
    tight = WorkloadProfile(name="ring_tight", label=1,
                            edge_scheme=(1, 2), **common)
    loose = WorkloadProfile(name="ring_loose", label=0,
                            edge_scheme=(1, 6), **common)
    return [tight, loose]


def task_profiles() -> list[WorkloadProfile]:
    """Six named tasks for the multi-label experiment."""
    base = MM_SCHED_FUNCTIONS

    def prof(name, label, extra, depth, branch, med, io_r, io_w):
        return WorkloadProfile(
            name=name, label=label,
            vocabulary=_mix(base, extra),
            max_depth=depth, branching=branch,
            duration_median_us=med,
            io_model={"read_count": io_r, "write_count": io_w,
                      "read_block": 4096, "write_block": 4096})

    return [
        prof("aes_encrypt", 1, CRYPTO_FUNCTIONS[:5], 4, 2.0, 1.0, 30, 30),
        prof("chacha_stream", 1, CRYPTO_FUNCTIONS[3:8], 4, 1.6, 0.8, 20, 45),
        prof("file_copy", 0, IO_FUNCTIONS[:6], 3, 1.2, 3.5, 80, 80),
        prof("grep_scan", 0, IO_FUNCTIONS[2:8], 3, 1.5, 2.0, 90, 5),
        prof("compile_job", 0, ["cc1_tokenize", "cc1_parse_decl",
                                "gimplify_expr", "ira_color",
                                "lto_write_body"] + IO_FUNCTIONS[:3],
             4, 1.8, 5.0, 50, 40),
        prof("db_update", 0, ["btree_lookup", "wal_append", "page_split",
                              "row_lock_acquire", "fsync_range"]
             + IO_FUNCTIONS[1:4], 3, 1.4, 4.0, 40, 70),
    ]


PROFILE_SETS = {
    "default2": default_pair,
    "graphonly": graph_signal_pair,
    "tasks6": task_profiles,
}


def profiles_by_name(name: str) -> list[WorkloadProfile]:
    try:
        return PROFILE_SETS[name]()
    except KeyError:
        raise ValueError(f"unknown profile set {name!r}; "
                         f"choose from {sorted(PROFILE_SETS)}") from None


def bookkeeping_matches(book: GeneratorBookkeeping,
                        sample: TraceSample) -> bool:
    """Exact oracle check: parsed counts equal generator bookkeeping."""
    return (sample.record_count() == book.total_calls
            and sample.call_counts() == book.call_counts)
