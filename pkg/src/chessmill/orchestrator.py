"""Workload sharding, the engine worker pool, and crash-safe progress.

A run is: shard the workload file, then for each shard drive a pool of
engine sessions over its line range. Every evaluation is written to the
store (keyed, idempotent) BEFORE the checkpoint advances past its line, so
a kill at any instant loses at most in-flight work and a resume re-does only
positions whose records never committed. Combined with keyed writes this
yields exactly-once visible effects from at-least-once execution.

Shards are plain JSON documents; any external scheduler can launch one
run_shard per node as long as ranges stay disjoint (make_shards guarantees
that). Within one shard, workers own one session each and never touch the
store: results funnel through the coordinating thread, the sole writer.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .positions import read_workload
from .store import CorpusStore, StoreUnreachable
from .uci import (
    EngineConfig,
    EngineCrashError,
    EngineSpawnError,
    PositionTimeout,
    ProtocolViolation,
    Session,
    split_engine_identity,
)

MANIFEST_FORMAT = "chessmill-shard 1"
CHECKPOINT_FORMAT = "chessmill-checkpoint 1"

DEFAULT_RETRY_LIMIT = 2  # a position failing retry_limit+1 total attempts is failed

_SECS_PER_HOUR = 3600.0
_SECS_PER_DAY = 86400.0
_SECS_PER_YEAR = 365.25 * _SECS_PER_DAY


class OrchestratorError(Exception):
    pass


@dataclass(slots=True)
class ShardManifest:
    """One shard: a [start, end) line range of a workload file, plus its
    outcome counts. Mutated only by run_shard."""

    shard_id: str
    workload: str
    start: int
    end: int
    engine: str = ""
    status: str = "pending"  # pending | running | done | failed
    evaluated: int = 0
    skipped_existing: int = 0
    failed_positions: int = 0
    wall_seconds: float = 0.0

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValueError(f"empty shard range [{self.start}, {self.end})")
        if self.status not in ("pending", "running", "done", "failed"):
            raise ValueError(f"bad shard status {self.status!r}")

    def size(self) -> int:
        return self.end - self.start

    def accounted(self) -> int:
        return self.evaluated + self.skipped_existing + self.failed_positions

    def to_json(self) -> str:
        doc = {
            "format": MANIFEST_FORMAT,
            "shard_id": self.shard_id,
            "workload": self.workload,
            "start": self.start,
            "end": self.end,
            "engine": self.engine,
            "status": self.status,
            "evaluated": self.evaluated,
            "skipped_existing": self.skipped_existing,
            "failed_positions": self.failed_positions,
            "wall_seconds": self.wall_seconds,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ShardManifest":
        doc = json.loads(text)
        if doc.get("format") != MANIFEST_FORMAT:
            raise OrchestratorError(f"not a shard manifest: {doc.get('format')!r}")
        doc.pop("format")
        return cls(**doc)

    def path_in(self, state_dir: str | Path) -> Path:
        return Path(state_dir) / f"{self.shard_id}.shard.json"

    def save(self, state_dir: str | Path) -> Path:
        path = self.path_in(state_dir)
        _atomic_write(path, self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ShardManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(slots=True)
class Checkpoint:
    """Durable resume state for one shard. completed_through is the highest
    workload line index (absolute) such that every line at or below it in
    the shard's range has a committed record; it never decreases. attempts
    counts tries per line for positions that have failed at least once."""

    shard_id: str
    completed_through: int = -1
    attempts: dict[int, int] = field(default_factory=dict)

    def advance(self, done: set[int], start: int) -> None:
        nxt = max(self.completed_through + 1, start)
        while nxt in done:
            done.discard(nxt)
            self.completed_through = nxt
            nxt += 1

    def to_json(self) -> str:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "shard_id": self.shard_id,
            "completed_through": self.completed_through,
            "attempts": {str(k): v for k, v in sorted(self.attempts.items())},
        }
        return json.dumps(doc) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        doc = json.loads(text)
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise OrchestratorError(f"not a checkpoint: {doc.get('format')!r}")
        return cls(
            shard_id=doc["shard_id"],
            completed_through=doc["completed_through"],
            attempts={int(k): v for k, v in doc["attempts"].items()},
        )

    def path_in(self, state_dir: str | Path) -> Path:
        return Path(state_dir) / f"{self.shard_id}.ckpt.json"

    def save(self, state_dir: str | Path) -> None:
        _atomic_write(self.path_in(state_dir), self.to_json())

    @classmethod
    def load_or_new(cls, state_dir: str | Path, shard_id: str) -> "Checkpoint":
        path = Path(state_dir) / f"{shard_id}.ckpt.json"
        if path.exists():
            return cls.from_json(path.read_text(encoding="utf-8"))
        return cls(shard_id=shard_id)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)


# ---------------------------------------------------------------------------
# sharding


def make_shards(workload: str | Path, shard_size: int) -> list[ShardManifest]:
    """Cover the workload file exactly once with disjoint, in-order ranges of
    at most shard_size lines. An empty workload yields no shards."""
    if shard_size < 1:
        raise ValueError(f"shard_size must be >= 1, got {shard_size}")
    n = len(read_workload(workload))
    shards = []
    for start in range(0, n, shard_size):
        end = min(start + shard_size, n)
        shards.append(
            ShardManifest(
                shard_id=f"shard-{start:08d}-{end:08d}",
                workload=str(workload),
                start=start,
                end=end,
            )
        )
    return shards


# ---------------------------------------------------------------------------
# cost model


@dataclass(frozen=True, slots=True)
class CostEstimate:
    """Batch cost arithmetic: total_core_seconds = n x secs each;
    wall_seconds spreads that over n_cores."""

    n_positions: float
    secs_per_position: float
    n_cores: int
    total_core_seconds: float
    wall_seconds: float

    @property
    def hours(self) -> float:
        return self.total_core_seconds / _SECS_PER_HOUR

    @property
    def days(self) -> float:
        return self.total_core_seconds / _SECS_PER_DAY

    @property
    def years(self) -> float:
        return self.total_core_seconds / _SECS_PER_YEAR

    @property
    def wall_days(self) -> float:
        return self.wall_seconds / _SECS_PER_DAY

    def human(self) -> str:
        if self.total_core_seconds == 0:
            return "0 seconds"
        return (
            f"~{self.years:.1f} years of computation"
            f" ({self.hours:,.0f} hours, {self.days:,.0f} days);"
            f" wall time on {self.n_cores} core(s): {self.wall_days:,.1f} days"
        )


def estimate_cost(n_positions: float, secs_per_position: float,
                  n_cores: int) -> CostEstimate:
    if n_positions < 0 or secs_per_position < 0:
        raise ValueError("counts and durations must be non-negative")
    if n_cores < 1:
        raise ValueError(f"n_cores must be >= 1, got {n_cores}")
    total = n_positions * secs_per_position
    return CostEstimate(
        n_positions=n_positions,
        secs_per_position=secs_per_position,
        n_cores=n_cores,
        total_core_seconds=total,
        wall_seconds=total / n_cores,
    )


# ---------------------------------------------------------------------------
# progress summary


@dataclass(frozen=True, slots=True)
class RunStatus:
    shards_total: int
    shards_done: int
    shards_failed: int
    shards_pending: int
    shards_running: int
    positions_total: int
    evaluated: int
    skipped_existing: int
    failed_positions: int
    percent_complete: float
    positions_per_second: Optional[float]
    eta_seconds: Optional[float]

    def as_line(self) -> str:
        parts = [
            f"shards_total={self.shards_total}",
            f"shards_done={self.shards_done}",
            f"shards_failed={self.shards_failed}",
            f"positions_total={self.positions_total}",
            f"evaluated={self.evaluated}",
            f"skipped_existing={self.skipped_existing}",
            f"failed_positions={self.failed_positions}",
            f"percent_complete={self.percent_complete:.1f}",
            "throughput="
            + (f"{self.positions_per_second:.2f}" if self.positions_per_second else "unknown"),
            "eta_seconds="
            + (f"{self.eta_seconds:.0f}" if self.eta_seconds is not None else "unknown"),
        ]
        return " ".join(parts)


def run_status(manifests: Sequence[ShardManifest]) -> RunStatus:
    """Aggregate shard progress. Throughput is observed evaluated positions
    per wall second (shards run sequentially per process); the ETA projects
    the remaining positions at that rate via the cost model. With nothing
    evaluated yet the ETA is unknown."""
    total = sum(m.size() for m in manifests)
    evaluated = sum(m.evaluated for m in manifests)
    skipped = sum(m.skipped_existing for m in manifests)
    failed = sum(m.failed_positions for m in manifests)
    accounted = evaluated + skipped + failed
    wall = sum(m.wall_seconds for m in manifests)
    throughput = evaluated / wall if evaluated and wall > 0 else None
    remaining = total - accounted
    eta = None
    if remaining == 0:
        eta = 0.0
    elif throughput:
        eta = estimate_cost(remaining, 1.0 / throughput, 1).wall_seconds
    return RunStatus(
        shards_total=len(manifests),
        shards_done=sum(m.status == "done" for m in manifests),
        shards_failed=sum(m.status == "failed" for m in manifests),
        shards_pending=sum(m.status == "pending" for m in manifests),
        shards_running=sum(m.status == "running" for m in manifests),
        positions_total=total,
        evaluated=evaluated,
        skipped_existing=skipped,
        failed_positions=failed,
        percent_complete=(100.0 * accounted / total) if total else 100.0,
        positions_per_second=throughput,
        eta_seconds=eta,
    )


# ---------------------------------------------------------------------------
# shard execution


@dataclass(slots=True)
class _WorkItem:
    line: int
    fen: str
    budget: int  # attempts still allowed


def _terminal_record_present(store: CorpusStore, fen: str,
                             engine_name: str, engine_version: str) -> bool:
    # Mate/stalemate positions yield a single depth-0 record regardless of
    # the configured target depth; only terminal records live at depth 0.
    return store.has_evaluation(fen, engine_name, engine_version, 0, 1)


def _worker(cfg: EngineConfig, work: "queue.Queue[_WorkItem | None]",
            results: "queue.Queue[tuple]", stop: threading.Event) -> None:
    """One pool worker: owns at most one live session, evaluates items until
    the queue is drained. Session crashes are contained here: the session is
    restarted and the item retried within its budget."""
    session: Session | None = None
    try:
        while not stop.is_set():
            item = work.get()
            if item is None:
                return
            attempts = 0
            while True:
                attempts += 1
                try:
                    if session is None:
                        session = Session(cfg)
                    records = session.evaluate(item.fen)
                    results.put(("ok", item.line, records, attempts))
                    break
                except EngineSpawnError as exc:
                    # Cannot get a session at all: hand the item back and die;
                    # the coordinator decides whether the pool is exhausted.
                    work.put(item)
                    results.put(("spawn-fail", item.line, str(exc), attempts))
                    return
                except (EngineCrashError, PositionTimeout, ProtocolViolation) as exc:
                    if session is not None:
                        session.stop()
                        session = None
                    if attempts >= item.budget:
                        results.put(("fail", item.line, str(exc), attempts))
                        break
    finally:
        if session is not None:
            session.stop()
        results.put(("worker-exit", None, None, 0))


def run_shard(
    manifest: ShardManifest,
    pool_size: int,
    store: CorpusStore,
    cfg: EngineConfig,
    state_dir: str | Path,
    retry_limit: int = DEFAULT_RETRY_LIMIT,
) -> ShardManifest:
    """Process one shard to completion. For each line in range: skip when a
    matching record is already durable (checkpoint prefix or store lookup),
    otherwise evaluate on any free session and commit the records before the
    checkpoint may advance past the line. Counts land in the returned
    manifest; status becomes done when every line is accounted for, failed
    on engine-pool exhaustion."""
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    state_dir = Path(state_dir)
    state_dir.mkdir(parents=True, exist_ok=True)

    resuming = manifest.status == "running"  # a previous run died mid-shard
    ckpt = Checkpoint.load_or_new(state_dir, manifest.shard_id)
    if not resuming:
        ckpt = Checkpoint(shard_id=manifest.shard_id)
    manifest.evaluated = manifest.skipped_existing = manifest.failed_positions = 0
    manifest.status = "running"
    started = time.monotonic()
    manifest.save(state_dir)

    lines = read_workload(manifest.workload)
    if manifest.end > len(lines):
        raise OrchestratorError(
            f"workload has {len(lines)} lines; shard wants [{manifest.start},"
            f" {manifest.end})"
        )

    engine_name = engine_version = ""
    probe = Session(cfg)  # fail fast on a broken engine; also fixes identity
    try:
        engine_name, engine_version = probe.engine_name, probe.engine_version
    finally:
        probe.stop()
    manifest.engine = f"{engine_name} {engine_version}".strip()

    max_attempts = retry_limit + 1
    todo: list[_WorkItem] = []
    done: set[int] = set()
    for idx in range(manifest.start, manifest.end):
        fen = lines[idx]
        if idx <= ckpt.completed_through:
            manifest.skipped_existing += 1
            continue
        prior = ckpt.attempts.get(idx, 0)
        if prior >= max_attempts:
            manifest.failed_positions += 1
            continue
        if all(
            store.has_evaluation(fen, engine_name, engine_version,
                                 cfg.target_depth, rank)
            for rank in range(1, cfg.multipv + 1)
        ) or _terminal_record_present(store, fen, engine_name, engine_version):
            manifest.skipped_existing += 1
            done.add(idx)
            ckpt.advance(done, manifest.start)
            continue
        todo.append(_WorkItem(line=idx, fen=fen, budget=max_attempts - prior))
    ckpt.save(state_dir)

    if todo:
        _drain_pool(manifest, ckpt, todo, done, min(pool_size, len(todo)),
                    store, cfg, state_dir)

    if manifest.status != "failed":
        manifest.status = "done"
    manifest.wall_seconds = time.monotonic() - started
    manifest.save(state_dir)
    return manifest


def _drain_pool(manifest: ShardManifest, ckpt: Checkpoint,
                todo: list[_WorkItem], done: set[int], pool_size: int,
                store: CorpusStore, cfg: EngineConfig,
                state_dir: Path) -> None:
    work: queue.Queue = queue.Queue()
    results: queue.Queue = queue.Queue()
    stop = threading.Event()
    for item in todo:
        work.put(item)
    for _ in range(pool_size):
        work.put(None)  # one drain sentinel per worker
    workers = [
        threading.Thread(target=_worker, args=(cfg, work, results, stop), daemon=True)
        for _ in range(pool_size)
    ]
    for w in workers:
        w.start()

    outstanding = len(todo)
    alive = pool_size
    spawn_failures = 0
    try:
        while outstanding > 0:
            kind, line, payload, attempts = results.get()
            if kind == "worker-exit":
                alive -= 1
                if alive == 0 and outstanding > 0:
                    # Pool exhausted with work left: the shard fails.
                    manifest.failed_positions += outstanding
                    manifest.status = "failed"
                    return
                continue
            if kind == "spawn-fail":
                spawn_failures += 1
                continue
            if kind == "ok":
                store.put_evaluations(payload)  # durable before claiming
                manifest.evaluated += 1
                ckpt.attempts.pop(line, None)
                done.add(line)
                ckpt.advance(done, manifest.start)
            else:  # fail (after retries)
                manifest.failed_positions += 1
                ckpt.attempts[line] = ckpt.attempts.get(line, 0) + attempts
            ckpt.save(state_dir)
            outstanding -= 1
    except StoreUnreachable:
        manifest.status = "running"  # resumable once the store is back
        raise
    finally:
        stop.set()
        # Unblock any worker still parked on the queue.
        for _ in workers:
            work.put(None)
        for w in workers:
            w.join(timeout=10.0)


def load_manifests(state_dir: str | Path) -> list[ShardManifest]:
    """All shard manifests in a state directory, ordered by range."""
    shards = [
        ShardManifest.load(path)
        for path in sorted(Path(state_dir).glob("*.shard.json"))
    ]
    return sorted(shards, key=lambda m: m.start)
