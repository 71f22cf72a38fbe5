"""Game traces -> deduplicated, theory-filtered position workloads.

A game's per-ply FEN stream is flagged against an ECO opening index (prefix
match only); the non-theory remainder feeds an exact first-seen-wins
deduplicator that emits the engine workload file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, IO, Iterable, Iterator

from .pgn import GameRecord
from .san import FenKey, ReplayError, replay_san

_ECO_CODE_RE = re.compile(r"^[A-E]\d\d$")
_MOVENUM_RE = re.compile(r"^\d+\.*$")

SNAPSHOT_MAGIC = "chessmill-positionset"
SNAPSHOT_VERSION = 1


class EcoLineError(ValueError):
    """An ECO table line that failed to parse or replay."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class WorkloadWriteError(OSError):
    """Workload emission failed; `durable_offset` bytes are known written."""

    def __init__(self, durable_offset: int, cause: Exception):
        super().__init__(f"workload write failed after {durable_offset} durable bytes: {cause}")
        self.durable_offset = durable_offset


@dataclass(frozen=True, slots=True)
class EcoIndex:
    """FenKey -> (eco_code, opening name) for every position on a book line."""

    entries: dict[FenKey, tuple[str, str]]
    max_line_depth: int

    def __contains__(self, fen: FenKey) -> bool:
        return fen in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def empty(cls) -> "EcoIndex":
        return cls({}, 0)


def load_eco(
    source: str | Path | IO[str] | Iterable[str],
    on_error: Callable[[EcoLineError], None] | None = None,
) -> EcoIndex:
    """Build an EcoIndex from tab-separated lines: code, name, SAN sequence.

    Every intermediate and terminal position of each line is indexed under
    that line's code (first line to claim a position wins). Malformed lines
    are reported through `on_error` and skipped.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_eco(fh, on_error)

    entries: dict[FenKey, tuple[str, str]] = {}
    max_depth = 0
    for line_no, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            _report(on_error, EcoLineError(line_no, f"expected 3 tab-separated fields, got {len(parts)}"))
            continue
        code, name, movetext = (p.strip() for p in parts)
        if not _ECO_CODE_RE.match(code):
            _report(on_error, EcoLineError(line_no, f"bad ECO code {code!r}"))
            continue
        sans = [tok for tok in movetext.split() if not _MOVENUM_RE.match(tok)]
        try:
            steps = replay_san(sans)
        except ReplayError as exc:
            _report(on_error, EcoLineError(line_no, f"line does not replay: {exc}"))
            continue
        for step in steps:
            entries.setdefault(step.fen, (code, name))
        max_depth = max(max_depth, len(steps))
    return EcoIndex(entries, max_depth)


def _report(on_error, exc: EcoLineError) -> None:
    if on_error is not None:
        on_error(exc)


@dataclass(frozen=True, slots=True)
class TracePoint:
    ply: int
    fen: FenKey
    theory: bool


@dataclass(frozen=True, slots=True)
class GamePositionTrace:
    game_id: str
    points: tuple[TracePoint, ...]

    def analyzable(self) -> Iterator[TracePoint]:
        return (p for p in self.points if not p.theory)


def trace_game(game: GameRecord, eco: EcoIndex) -> GamePositionTrace:
    """Per-ply positions of a game with book-prefix theory flags.

    A ply is theory iff it and every earlier ply are in the ECO index; the
    flag can only transition true -> false. The start position (ply 0) is
    not emitted. Replay errors propagate.
    """
    steps = replay_san(game.san_moves)
    points = []
    in_book = True
    for step in steps:
        in_book = in_book and step.fen in eco
        points.append(TracePoint(step.ply, step.fen, in_book))
    return GamePositionTrace(game.game_id, tuple(points))


def fen_key(fen: FenKey, key_fields: int = 6) -> str:
    """Dedup identity of a FEN: the full 6-field text, or the first 4 fields
    (clock-insensitive, transposition-level) when key_fields = 4."""
    if key_fields == 6:
        return fen
    if key_fields == 4:
        return " ".join(fen.split(" ", 4)[:4])
    raise ValueError(f"key_fields must be 4 or 6, got {key_fields}")


class PositionSet:
    """Exact first-seen-wins membership over position keys.

    Tracks every key ever offered (total_seen_count) and the distinct ones
    (unique_count); keeps the first-seen full FEN per key in insertion order,
    which is exactly the workload emission order.
    """

    def __init__(self, key_fields: int = 6):
        if key_fields not in (4, 6):
            raise ValueError(f"key_fields must be 4 or 6, got {key_fields}")
        self.key_fields = key_fields
        self._keys: set[str] = set()
        self._first_seen: list[FenKey] = []
        self.total_seen_count = 0

    @property
    def unique_count(self) -> int:
        return len(self._keys)

    def __contains__(self, fen: FenKey) -> bool:
        return fen_key(fen, self.key_fields) in self._keys

    def add(self, fen: FenKey) -> bool:
        """Record one sighting; True iff this key is new."""
        self.total_seen_count += 1
        key = fen_key(fen, self.key_fields)
        if key in self._keys:
            return False
        self._keys.add(key)
        self._first_seen.append(fen)
        return True

    def first_seen_fens(self) -> list[FenKey]:
        return list(self._first_seen)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}\n")
            fh.write(f"key_fields={self.key_fields}\n")
            fh.write(f"total_seen={self.total_seen_count}\n")
            fh.write(f"unique={self.unique_count}\n")
            for fen in self._first_seen:
                fh.write(fen + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PositionSet":
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().split()
            if header[:1] != [SNAPSHOT_MAGIC] or int(header[1]) != SNAPSHOT_VERSION:
                raise ValueError(f"not a position-set snapshot: {path}")
            meta = {}
            for _ in range(3):
                k, v = fh.readline().rstrip("\n").split("=", 1)
                meta[k] = int(v)
            ps = cls(key_fields=meta["key_fields"])
            for line in fh:
                ps.add(line.rstrip("\n"))
            if ps.unique_count != meta["unique"]:
                raise ValueError(f"snapshot corrupt: {ps.unique_count} keys, header says {meta['unique']}")
            ps.total_seen_count = meta["total_seen"]
            return ps


def dedup_positions(
    traces: Iterable[GamePositionTrace],
    out: str | Path | IO[str] | None = None,
    key_fields: int = 6,
) -> PositionSet:
    """Fold traces' non-theory positions into a PositionSet, emitting each
    first-seen FEN to `out` (the workload file: one FEN per line).

    Emission order is first-seen order, so equal inputs produce byte-equal
    workload files. On a write failure, raises WorkloadWriteError carrying
    the byte offset known flushed.
    """
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="ascii", newline="\n") as fh:
            return dedup_positions(traces, fh, key_fields)

    ps = PositionSet(key_fields=key_fields)
    written = 0
    flushed = 0
    try:
        for trace in traces:
            for point in trace.points:
                if point.theory:
                    continue
                if ps.add(point.fen) and out is not None:
                    out.write(point.fen + "\n")
                    written += len(point.fen) + 1
                    if written - flushed >= 1 << 20:
                        out.flush()
                        flushed = written
        if out is not None:
            out.flush()
    except OSError as exc:
        raise WorkloadWriteError(flushed, exc) from exc
    return ps


def read_workload(path: str | Path) -> list[FenKey]:
    """Read a workload file back: one FEN per line."""
    with open(path, "r", encoding="ascii") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]
