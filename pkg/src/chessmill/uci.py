"""UCI engine client: one Session drives one child engine process.

Sessions are strictly single-user; parallelism comes from running many
sessions. Every evaluate() accumulates the full wire exchange and builds its
records by parsing that transcript, so a record is a pure function of its
raw_log by construction.
"""

from __future__ import annotations

import logging
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .san import FenKey

log = logging.getLogger(__name__)

_QUIT_GRACE_SECS = 3.0


class EngineError(Exception):
    """Base class for engine-client failures."""


class EngineSpawnError(EngineError):
    pass


class HandshakeTimeout(EngineError):
    pass


class OptionRejected(EngineError):
    pass


class EngineCrashError(EngineError):
    """The child process exited while work was in flight."""


class PositionTimeout(EngineError):
    """Per-position deadline hit; the engine was killed. Retryable on a
    fresh session."""


class ProtocolViolation(EngineError):
    """The engine answered, but not with what UCI promises (e.g. bestmove
    with no info at the target depth)."""


@dataclass(frozen=True, slots=True)
class EngineConfig:
    """How to spawn and drive an engine. `options` are passed through
    verbatim as `setoption` commands; MultiPV is always sent from `multipv`.
    """

    binary: str | Sequence[str]
    target_depth: int = 20
    multipv: int = 1
    options: Mapping[str, object] = field(default_factory=dict)
    handshake_timeout: float = 30.0
    position_timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.target_depth < 1:
            raise ValueError(f"target_depth must be >= 1, got {self.target_depth}")
        if self.multipv < 1:
            raise ValueError(f"multipv must be >= 1, got {self.multipv}")

    def argv(self) -> list[str]:
        if isinstance(self.binary, str):
            return shlex.split(self.binary)
        return list(self.binary)


@dataclass(frozen=True, slots=True)
class Score:
    """Engine score from the side to move's perspective: centipawns or
    moves-to-mate (positive = side to move delivers mate). mate_in = 0 occurs
    only on terminal records, where the side to move is already mated."""

    cp: int | None = None
    mate_in: int | None = None

    def __post_init__(self) -> None:
        if (self.cp is None) == (self.mate_in is None):
            raise ValueError("exactly one of cp / mate_in must be set")

    def as_text(self) -> str:
        return f"cp {self.cp}" if self.cp is not None else f"mate {self.mate_in}"

    @classmethod
    def from_text(cls, text: str) -> "Score":
        kind, value = text.split()
        if kind == "cp":
            return cls(cp=int(value))
        if kind == "mate":
            return cls(mate_in=int(value))
        raise ValueError(f"bad score text {text!r}")


@dataclass(frozen=True, slots=True)
class InfoFields:
    """Whatever one `info` line carried; absent fields are None/empty."""

    depth: int | None = None
    multipv: int | None = None
    score: Score | None = None
    nodes: int | None = None
    pv: tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return self == _EMPTY_INFO


# Single-value integer keys of the info grammar that we either keep or must
# skip together with their argument.
_INT_KEYS = {"depth", "seldepth", "multipv", "nodes", "nps", "time", "hashfull",
             "tbhits", "cpuload", "currmovenumber"}


def parse_info_line(text: str) -> InfoFields:
    """Extract fields from one `info` line; unknown tokens are skipped and
    nothing ever raises. Non-info lines yield an empty result."""
    tokens = text.split()
    if not tokens or tokens[0] != "info":
        return _EMPTY_INFO
    depth = rank = nodes = None
    score: Score | None = None
    pv: tuple[str, ...] = ()
    i = 1
    while i < len(tokens):
        tok = tokens[i]
        if tok == "pv":
            pv = tuple(tokens[i + 1 :])
            break
        if tok == "string":
            break
        if tok == "score":
            try:
                kind, value = tokens[i + 1], int(tokens[i + 2])
            except (IndexError, ValueError):
                i += 1
                continue
            if kind == "cp":
                score = Score(cp=value)
            elif kind == "mate":
                score = Score(mate_in=value)
            i += 3
            continue
        if tok in _INT_KEYS:
            try:
                value = int(tokens[i + 1])
            except (IndexError, ValueError):
                i += 1
                continue
            if tok == "depth":
                depth = value
            elif tok == "multipv":
                rank = value
            elif tok == "nodes":
                nodes = value
            i += 2
            continue
        i += 1  # unknown token (currmove, lowerbound, wdl value lists, ...)
    return InfoFields(depth=depth, multipv=rank, score=score, nodes=nodes, pv=pv)


_EMPTY_INFO = InfoFields()


@dataclass(frozen=True, slots=True)
class EvaluationRecord:
    """One engine verdict for one position at one multipv rank."""

    fen: FenKey
    engine_name: str
    engine_version: str
    depth: int
    multipv_rank: int
    score: Score
    pv: tuple[str, ...]
    raw_log: str
    nodes: int | None = None
    wall_time: float = 0.0
    produced_at: float = 0.0
    terminal: bool = False

    def __post_init__(self) -> None:
        if self.multipv_rank < 1:
            raise ValueError(f"multipv_rank must be >= 1, got {self.multipv_rank}")
        if not self.terminal:
            if not self.pv:
                raise ValueError("non-terminal record with empty pv")
            if self.score.mate_in == 0:
                raise ValueError("mate 0 on a non-terminal record")


def records_from_log(
    raw_log: str,
    engine_name: str = "",
    engine_version: str = "",
    wall_time: float = 0.0,
    produced_at: float = 0.0,
    multipv: int | None = None,
) -> list[EvaluationRecord]:
    """Rebuild the evaluation records encoded in one position's transcript.

    The transcript must contain the `position fen`/`go depth` commands, the
    engine's info lines, and the final bestmove line. With `multipv` given,
    exactly ranks 1..multipv must be present at the target depth (terminal
    positions aside); otherwise whatever ranks appear are returned.
    """
    fen = None
    target_depth = None
    bestmove = None
    last_at_target: dict[int, InfoFields] = {}
    last_any: InfoFields | None = None
    for line in raw_log.splitlines():
        line = line.strip()
        if line.startswith("position fen "):
            fen = line[len("position fen ") :].split(" moves ")[0].strip()
        elif line.startswith("go "):
            toks = line.split()
            if "depth" in toks:
                target_depth = int(toks[toks.index("depth") + 1])
        elif line.startswith("bestmove"):
            parts = line.split()
            bestmove = parts[1] if len(parts) > 1 else "(none)"
            break
        elif line.startswith("info"):
            fields = parse_info_line(line)
            if fields.score is None and not fields.pv:
                continue
            last_any = fields
            if fields.depth == target_depth:
                last_at_target[fields.multipv or 1] = fields
    if fen is None or target_depth is None:
        raise ProtocolViolation("transcript lacks position/go commands")
    if bestmove is None:
        raise ProtocolViolation("transcript lacks a bestmove line")

    def build(fields: InfoFields, rank: int, terminal: bool) -> EvaluationRecord:
        return EvaluationRecord(
            fen=fen,
            engine_name=engine_name,
            engine_version=engine_version,
            depth=fields.depth or 0,
            multipv_rank=rank,
            score=fields.score,
            pv=fields.pv,
            nodes=fields.nodes,
            raw_log=raw_log,
            wall_time=wall_time,
            produced_at=produced_at,
            terminal=terminal,
        )

    if bestmove == "(none)":
        # Terminal position: mate 0 (checkmated) or cp 0 (stalemate).
        if last_any is None or last_any.score is None:
            raise ProtocolViolation("terminal position without a score line")
        return [build(last_any, 1, terminal=True)]

    if not last_at_target or 1 not in last_at_target:
        raise ProtocolViolation(f"bestmove before any info at depth {target_depth}")
    want = sorted(last_at_target) if multipv is None else list(range(1, multipv + 1))
    missing = [r for r in want if r not in last_at_target]
    if missing:
        raise ProtocolViolation(f"multipv ranks missing at depth {target_depth}: {missing}")
    return [build(last_at_target[r], r, terminal=False) for r in want]


def split_engine_identity(id_name: str) -> tuple[str, str]:
    """'Stockfish 6' -> ('Stockfish', '6'); the version is the last
    whitespace token containing a digit, the name is everything before it."""
    tokens = id_name.split()
    for i in range(len(tokens) - 1, -1, -1):
        if any(ch.isdigit() for ch in tokens[i]):
            return " ".join(tokens[:i]) or id_name, tokens[i]
    return id_name, ""


class Session:
    """One live engine process, ready for sequential evaluate() calls."""

    def __init__(self, cfg: EngineConfig):
        self.cfg = cfg
        self.engine_name = ""
        self.engine_version = ""
        self.handshake_log: list[str] = []
        self._dead = False
        self._stopped = False
        try:
            self._proc = subprocess.Popen(
                cfg.argv(),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EngineSpawnError(f"cannot spawn {cfg.argv()}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        try:
            self._handshake()
        except EngineError:
            self.stop()
            raise

    # -- wire plumbing -----------------------------------------------------

    def _pump(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line.rstrip("\n"))
        except ValueError:
            pass  # stdout closed under us during stop()
        finally:
            self._lines.put(None)

    def _send(self, command: str, transcript: list[str] | None = None) -> None:
        if transcript is not None:
            transcript.append(command)
        try:
            self._proc.stdin.write(command + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._dead = True
            raise EngineCrashError(f"engine went away while sending {command!r}") from exc

    def _recv(self, deadline: float, timeout_error: type[EngineError]) -> str:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise timeout_error("deadline exhausted")
        try:
            line = self._lines.get(timeout=remaining)
        except queue.Empty:
            raise timeout_error(f"no engine output within the last {remaining:.1f}s of budget") from None
        if line is None:
            self._dead = True
            try:
                code = self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                code = self._proc.poll()
            raise EngineCrashError(f"engine exited with code {code}")
        return line

    # -- protocol ----------------------------------------------------------

    def _handshake(self) -> None:
        deadline = time.monotonic() + self.cfg.handshake_timeout
        self._send("uci", self.handshake_log)
        while True:
            line = self._recv(deadline, HandshakeTimeout)
            self.handshake_log.append(line)
            if line.startswith("id name "):
                self.engine_name, self.engine_version = split_engine_identity(line[len("id name ") :])
            if line.strip() == "uciok":
                break
        self._send(f"setoption name MultiPV value {self.cfg.multipv}", self.handshake_log)
        for name, value in self.cfg.options.items():
            self._send(f"setoption name {name} value {value}", self.handshake_log)
        self._send("isready", self.handshake_log)
        while True:
            line = self._recv(deadline, HandshakeTimeout)
            self.handshake_log.append(line)
            lowered = line.lower()
            if "no such option" in lowered or "unknown option" in lowered or lowered.startswith("error"):
                raise OptionRejected(line)
            if line.strip() == "readyok":
                return

    def evaluate(self, fen: FenKey) -> list[EvaluationRecord]:
        """Evaluate one position to the configured depth; one record per
        multipv rank (a single terminal record for mate/stalemate on the
        board). The full exchange is each record's raw_log."""
        if self._dead:
            raise EngineCrashError("session is dead; start a fresh one")
        transcript: list[str] = []
        started = time.monotonic()
        deadline = started + self.cfg.position_timeout
        self._send(f"position fen {fen}", transcript)
        self._send(f"go depth {self.cfg.target_depth}", transcript)
        while True:
            try:
                line = self._recv(deadline, PositionTimeout)
            except PositionTimeout:
                self._kill("per-position timeout")
                raise
            transcript.append(line)
            if line.startswith("bestmove"):
                break
        wall = time.monotonic() - started
        return records_from_log(
            "\n".join(transcript) + "\n",
            engine_name=self.engine_name,
            engine_version=self.engine_version,
            wall_time=wall,
            produced_at=time.time(),
            multipv=self.cfg.multipv,
        )

    def _kill(self, why: str) -> None:
        log.warning("killing engine (%s)", why)
        self._dead = True
        self._proc.kill()
        self._proc.wait()

    def stop(self) -> None:
        """Quit politely, escalate to SIGKILL after a grace period.
        Safe to call repeatedly."""
        if self._stopped:
            return
        self._stopped = True
        if self._proc.poll() is None:
            try:
                self._send("quit")
            except EngineError:
                pass
            try:
                self._proc.wait(timeout=_QUIT_GRACE_SECS)
            except subprocess.TimeoutExpired:
                log.warning("engine ignored quit; escalating to kill")
                self._proc.kill()
                self._proc.wait()
        self._dead = True
        self._reader.join(timeout=_QUIT_GRACE_SECS)
        if self._proc.stdin:
            self._proc.stdin.close()

    @property
    def returncode(self) -> int | None:
        return self._proc.poll()


def start_session(cfg: EngineConfig) -> Session:
    return Session(cfg)


def evaluate(session: Session, fen: FenKey) -> list[EvaluationRecord]:
    return session.evaluate(fen)


def stop_session(session: Session) -> None:
    session.stop()
