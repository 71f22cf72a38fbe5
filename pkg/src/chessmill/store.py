"""Corpus store: games, players, per-game positions, and engine evaluations.

One store is a directory holding an embedded SQLite database plus a
compressed blob tree for raw engine logs (logs dominate volume; queries must
never pay their I/O). Evaluations are keyed by (fen, engine identity, depth,
multipv_rank), and put_evaluation is idempotent on that key: this is the
anchor the orchestrator's crash/resume semantics hang on.

Durability model: WAL journal with synchronous=NORMAL. A committed write
survives process death (the crash model of a batch run); it is not hardened
against power loss, which a desk-scale reproduction does not need.

Concurrency: single writer, many readers. The orchestrator funnels all
writes through one store handle.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .pgn import GameRecord, PartialDate, Result
from .positions import GamePositionTrace
from .san import FenKey
from .uci import EvaluationRecord, Score

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE players (
    player_id INTEGER PRIMARY KEY,
    name      TEXT NOT NULL UNIQUE
);
CREATE TABLE games (
    game_id     TEXT PRIMARY KEY,
    white_name  TEXT NOT NULL,
    black_name  TEXT NOT NULL,
    white_id    INTEGER NOT NULL REFERENCES players(player_id),
    black_id    INTEGER NOT NULL REFERENCES players(player_id),
    result      TEXT NOT NULL,
    year        INTEGER,
    month       INTEGER,
    day         INTEGER,
    event       TEXT,
    site        TEXT,
    round       TEXT,
    white_elo   INTEGER,
    black_elo   INTEGER,
    eco_code    TEXT,
    san_moves   TEXT NOT NULL,
    source_file TEXT NOT NULL,
    byte_offset INTEGER NOT NULL
);
CREATE TABLE game_positions (
    game_id   TEXT NOT NULL REFERENCES games(game_id),
    ply_index INTEGER NOT NULL,
    fen       TEXT NOT NULL,
    theory    INTEGER NOT NULL,
    PRIMARY KEY (game_id, ply_index)
) WITHOUT ROWID;
CREATE INDEX idx_game_positions_fen ON game_positions(fen);
CREATE TABLE evaluations (
    fen            TEXT NOT NULL,
    engine_name    TEXT NOT NULL,
    engine_version TEXT NOT NULL,
    depth          INTEGER NOT NULL,
    multipv_rank   INTEGER NOT NULL,
    score_kind     TEXT NOT NULL,
    score_value    INTEGER NOT NULL,
    pv             TEXT NOT NULL,
    nodes          INTEGER,
    wall_ms        INTEGER NOT NULL,
    produced_at    REAL NOT NULL,
    terminal       INTEGER NOT NULL,
    log_ref        TEXT NOT NULL,
    PRIMARY KEY (fen, engine_name, engine_version, depth, multipv_rank)
) WITHOUT ROWID;
"""

EXPORT_COLUMNS = (
    "fen", "engine", "depth", "rank",
    "score_kind", "score_value", "pv", "nodes", "wall_ms",
)


class StoreError(Exception):
    pass


class StoreUnreachable(StoreError):
    """The store directory or database cannot be opened/written."""


class UnknownGameError(StoreError):
    pass


def white_pov(score: Score, side_to_move: str) -> Score:
    """Normalize an engine score (side-to-move perspective) so that positive
    always favors white. Idempotent once applied: normalizing an already
    white-POV score with side 'w' changes nothing."""
    if side_to_move == "w":
        return score
    if score.cp is not None:
        return Score(cp=-score.cp)
    return Score(mate_in=-score.mate_in)


@dataclass(frozen=True, slots=True)
class TrajectoryPoint:
    ply: int
    score: Optional[Score]  # white-POV; None when no evaluation exists
    theory: bool


@dataclass(frozen=True, slots=True)
class ScoreTrajectory:
    """The evaluation curve of one game: one point per ply, scores present
    only where the store holds a matching evaluation."""

    game_id: str
    points: tuple[TrajectoryPoint, ...]

    def __post_init__(self) -> None:
        plies = [p.ply for p in self.points]
        if plies != sorted(set(plies)):
            raise ValueError("trajectory ply indices must strictly increase")

    def scored_count(self) -> int:
        return sum(1 for p in self.points if p.score is not None)


def _blob_name(fen: FenKey, engine_name: str, engine_version: str,
               depth: int, rank: int) -> str:
    key = "\x1f".join([fen, engine_name, engine_version, str(depth), str(rank)])
    return hashlib.sha256(key.encode()).hexdigest()


class CorpusStore:
    """Directory-backed store; `root/corpus.sqlite3` plus `root/logs/`."""

    def __init__(self, root: str | Path, create: bool = True):
        self.root = Path(root)
        self.db_path = self.root / "corpus.sqlite3"
        self.log_dir = self.root / "logs"
        if not create and not self.db_path.exists():
            raise StoreUnreachable(f"no store at {self.root}")
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            self.log_dir.mkdir(exist_ok=True)
            self._conn = sqlite3.connect(self.db_path, timeout=30.0)
        except (OSError, sqlite3.Error) as exc:
            raise StoreUnreachable(f"cannot open store at {self.root}: {exc}") from exc
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        self._conn.execute("PRAGMA foreign_keys=ON")
        self._init_schema()

    def _init_schema(self) -> None:
        version = self._conn.execute("PRAGMA user_version").fetchone()[0]
        if version == 0:
            with self._conn:
                self._conn.executescript(_SCHEMA)
                self._conn.execute(
                    "INSERT INTO meta(key, value) VALUES ('layout', ?)",
                    (f"chessmill-store {SCHEMA_VERSION}",),
                )
                self._conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")
        elif version != SCHEMA_VERSION:
            raise StoreUnreachable(
                f"store layout version {version} unsupported (want {SCHEMA_VERSION})"
            )

    @classmethod
    def open(cls, root: str | Path) -> "CorpusStore":
        """Open an existing store; raises StoreUnreachable if absent."""
        return cls(root, create=False)

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "CorpusStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- games ---------------------------------------------------------------

    def _player_id(self, name: str) -> int:
        row = self._conn.execute(
            "SELECT player_id FROM players WHERE name = ?", (name,)
        ).fetchone()
        if row:
            return row[0]
        cur = self._conn.execute("INSERT INTO players(name) VALUES (?)", (name,))
        return cur.lastrowid

    def put_game(self, rec: GameRecord) -> bool:
        """Insert one game; returns False if the game_id is already stored."""
        date = rec.date
        try:
            with self._conn:
                wid = self._player_id(rec.white_name)
                bid = self._player_id(rec.black_name)
                self._conn.execute(
                    "INSERT INTO games VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                    (
                        rec.game_id, rec.white_name, rec.black_name, wid, bid,
                        rec.result.value,
                        date.year if date else None,
                        date.month if date else None,
                        date.day if date else None,
                        rec.event, rec.site, rec.round,
                        rec.white_elo, rec.black_elo, rec.eco_code,
                        " ".join(rec.san_moves),
                        rec.source_file, rec.byte_offset,
                    ),
                )
        except sqlite3.IntegrityError:
            return False
        except sqlite3.Error as exc:
            raise StoreUnreachable(f"game insert failed: {exc}") from exc
        return True

    def put_games(self, recs: Iterable[GameRecord]) -> int:
        return sum(1 for rec in recs if self.put_game(rec))

    def _game_from_row(self, row: sqlite3.Row | tuple) -> GameRecord:
        (game_id, white, black, _wid, _bid, result, year, month, day,
         event, site, rnd, welo, belo, eco, sans, source, offset) = row
        return GameRecord(
            game_id=game_id,
            white_name=white,
            black_name=black,
            result=Result(result),
            san_moves=tuple(sans.split()) if sans else (),
            event=event,
            site=site,
            round=rnd,
            date=PartialDate(year, month, day) if year is not None else None,
            white_elo=welo,
            black_elo=belo,
            eco_code=eco,
            source_file=source,
            byte_offset=offset,
        )

    def get_game(self, game_id: str) -> Optional[GameRecord]:
        row = self._conn.execute(
            "SELECT * FROM games WHERE game_id = ?", (game_id,)
        ).fetchone()
        return self._game_from_row(row) if row else None

    def iter_games(self) -> Iterator[GameRecord]:
        for row in self._conn.execute("SELECT * FROM games ORDER BY rowid"):
            yield self._game_from_row(row)

    def game_count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM games").fetchone()[0]

    # -- per-game positions ----------------------------------------------------

    def put_trace(self, trace: GamePositionTrace) -> int:
        """Store a game's position trace; already-present plies are kept."""
        rows = [(trace.game_id, p.ply, p.fen, int(p.theory)) for p in trace.points]
        try:
            with self._conn:
                self._conn.executemany(
                    "INSERT OR IGNORE INTO game_positions VALUES (?,?,?,?)", rows
                )
        except sqlite3.Error as exc:
            raise StoreUnreachable(f"trace insert failed: {exc}") from exc
        return len(rows)

    def position_count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM game_positions").fetchone()[0]

    # -- evaluations -----------------------------------------------------------

    def put_evaluation(self, rec: EvaluationRecord) -> str:
        """Durable keyed insert: 'inserted', or 'already_present' with the
        store unchanged. The raw log lands in the blob tree before the row
        commits, so a committed row always has its log."""
        ref = _blob_name(rec.fen, rec.engine_name, rec.engine_version,
                         rec.depth, rec.multipv_rank)
        try:
            row = self._conn.execute(
                "SELECT 1 FROM evaluations WHERE fen=? AND engine_name=? AND "
                "engine_version=? AND depth=? AND multipv_rank=?",
                (rec.fen, rec.engine_name, rec.engine_version,
                 rec.depth, rec.multipv_rank),
            ).fetchone()
            if row:
                return "already_present"
            self._write_log(ref, rec.raw_log)
            with self._conn:
                self._conn.execute(
                    "INSERT OR IGNORE INTO evaluations VALUES "
                    "(?,?,?,?,?,?,?,?,?,?,?,?,?)",
                    (
                        rec.fen, rec.engine_name, rec.engine_version,
                        rec.depth, rec.multipv_rank,
                        "cp" if rec.score.cp is not None else "mate",
                        rec.score.cp if rec.score.cp is not None else rec.score.mate_in,
                        " ".join(rec.pv),
                        rec.nodes,
                        int(rec.wall_time * 1000),
                        rec.produced_at,
                        int(rec.terminal),
                        ref,
                    ),
                )
        except (OSError, sqlite3.Error) as exc:
            raise StoreUnreachable(f"evaluation write failed: {exc}") from exc
        return "inserted"

    def put_evaluations(self, recs: Iterable[EvaluationRecord]) -> tuple[int, int]:
        inserted = present = 0
        for rec in recs:
            if self.put_evaluation(rec) == "inserted":
                inserted += 1
            else:
                present += 1
        return inserted, present

    def _write_log(self, ref: str, raw_log: str) -> None:
        sub = self.log_dir / ref[:2]
        sub.mkdir(exist_ok=True)
        path = sub / f"{ref}.log.gz"
        if path.exists():
            return
        tmp = path.with_suffix(".tmp")
        with gzip.open(tmp, "wt", encoding="utf-8") as fh:
            fh.write(raw_log)
        tmp.replace(path)

    def _read_log(self, ref: str) -> str:
        path = self.log_dir / ref[:2] / f"{ref}.log.gz"
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            return fh.read()

    def has_evaluation(self, fen: FenKey, engine_name: str, engine_version: str,
                       depth: int, multipv_rank: int = 1) -> bool:
        row = self._conn.execute(
            "SELECT 1 FROM evaluations WHERE fen=? AND engine_name=? AND "
            "engine_version=? AND depth=? AND multipv_rank=?",
            (fen, engine_name, engine_version, depth, multipv_rank),
        ).fetchone()
        return row is not None

    def get_evaluation(self, fen: FenKey, engine_name: str, engine_version: str,
                       depth: int, multipv_rank: int = 1) -> Optional[EvaluationRecord]:
        row = self._conn.execute(
            "SELECT * FROM evaluations WHERE fen=? AND engine_name=? AND "
            "engine_version=? AND depth=? AND multipv_rank=?",
            (fen, engine_name, engine_version, depth, multipv_rank),
        ).fetchone()
        if row is None:
            return None
        (fen, name, version, depth, rank, kind, value, pv, nodes,
         wall_ms, produced_at, terminal, ref) = row
        return EvaluationRecord(
            fen=fen,
            engine_name=name,
            engine_version=version,
            depth=depth,
            multipv_rank=rank,
            score=Score(cp=value) if kind == "cp" else Score(mate_in=value),
            pv=tuple(pv.split()) if pv else (),
            raw_log=self._read_log(ref),
            nodes=nodes,
            wall_time=wall_ms / 1000.0,
            produced_at=produced_at,
            terminal=bool(terminal),
        )

    def evaluation_count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM evaluations").fetchone()[0]

    def engine_identities(self) -> list[tuple[str, str, int]]:
        """Distinct (engine_name, engine_version, depth) triples present,
        ignoring depth-0 terminal records (they carry no search depth)."""
        rows = self._conn.execute(
            "SELECT DISTINCT engine_name, engine_version, depth FROM evaluations"
            " WHERE depth > 0 ORDER BY engine_name, engine_version, depth"
        ).fetchall()
        return [tuple(r) for r in rows]

    # -- queries -----------------------------------------------------------------

    def score_trajectory(self, game_id: str, engine_name: str,
                         engine_version: str, depth: int) -> ScoreTrajectory:
        """One point per stored ply of the game; the score (normalized to
        white's perspective) is present iff rank-1 evaluation exists for
        that ply's position."""
        if self.get_game(game_id) is None:
            raise UnknownGameError(f"no game with id {game_id}")
        rows = self._conn.execute(
            "SELECT gp.ply_index, gp.fen, gp.theory, ev.score_kind, ev.score_value"
            " FROM game_positions gp LEFT JOIN evaluations ev ON ev.fen = gp.fen"
            "  AND ev.engine_name=? AND ev.engine_version=? AND ev.depth=?"
            "  AND ev.multipv_rank=1"
            " WHERE gp.game_id = ? ORDER BY gp.ply_index",
            (engine_name, engine_version, depth, game_id),
        ).fetchall()
        points = []
        for ply, fen, theory, kind, value in rows:
            score = None
            if kind is not None:
                raw = Score(cp=value) if kind == "cp" else Score(mate_in=value)
                score = white_pov(raw, fen.split()[1])
            points.append(TrajectoryPoint(ply=ply, score=score, theory=bool(theory)))
        return ScoreTrajectory(game_id=game_id, points=tuple(points))

    def export_evaluations_csv(self, path: str | Path) -> int:
        """Bulk CSV export of all evaluation rows (not the logs); returns the
        row count. Deterministic order (by primary key)."""
        rows = self._conn.execute(
            "SELECT fen, engine_name, engine_version, depth, multipv_rank,"
            " score_kind, score_value, pv, nodes, wall_ms FROM evaluations"
            " ORDER BY fen, engine_name, engine_version, depth, multipv_rank"
        )
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(EXPORT_COLUMNS)
        n = 0
        for (fen, name, version, depth, rank, kind, value, pv, nodes, wall) in rows:
            writer.writerow([fen, f"{name} {version}".strip(), depth, rank,
                             kind, value, pv, nodes if nodes is not None else "", wall])
            n += 1
        Path(path).write_text(buf.getvalue(), encoding="utf-8")
        return n

    def verify_integrity(self) -> list[str]:
        """Referential checks; returns human-readable problems (empty = ok)."""
        problems = []
        orphans = self._conn.execute(
            "SELECT COUNT(*) FROM game_positions gp "
            "LEFT JOIN games g ON g.game_id = gp.game_id WHERE g.game_id IS NULL"
        ).fetchone()[0]
        if orphans:
            problems.append(f"{orphans} game_positions rows reference missing games")
        dangling = self._conn.execute(
            "SELECT log_ref FROM evaluations"
        ).fetchall()
        missing_logs = sum(
            1 for (ref,) in dangling
            if not (self.log_dir / ref[:2] / f"{ref}.log.gz").exists()
        )
        if missing_logs:
            problems.append(f"{missing_logs} evaluations lack their raw log blob")
        dupes = self._conn.execute(
            "SELECT COUNT(*) - COUNT(DISTINCT fen || '|' || engine_name || '|' ||"
            " engine_version || '|' || depth || '|' || multipv_rank) FROM evaluations"
        ).fetchone()[0]
        if dupes:
            problems.append(f"{dupes} duplicate evaluation keys")
        return problems
