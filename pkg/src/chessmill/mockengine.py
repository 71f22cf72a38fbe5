"""Deterministic UCI engine stand-in for tests and offline runs.

Speaks enough of the protocol to exercise the client and orchestrator:
handshake, MultiPV, fixed-depth searches with progressive info lines, and
correct terminal handling (mate 0 / stalemate cp 0, bestmove (none)). Scores
are a pure function of (fen, move), so runs are reproducible everywhere.

Fault injection via environment variables, read at startup:
    CHESSMILL_MOCK_DELAY_MS   sleep this long before answering each `go`
    CHESSMILL_MOCK_CRASH_ON_GO  exit(9) mid-search on the Nth `go` (1-based)
    CHESSMILL_MOCK_HANG_ON_GO   go silent on the Nth `go` (forces timeouts)
"""

from __future__ import annotations

import hashlib
import os
import sys
import time

from .board import Move, Position, decode_fen, encode_fen, has_any_legal_move, legal_moves, _make

NAME = "MockEngine 1.3"
AUTHOR = "chessmill test fixtures"

_SCORE_SPAN = 601  # deterministic root scores in [-300, +300] cp


def _emit(text: str) -> None:
    sys.stdout.write(text + "\n")
    sys.stdout.flush()


def move_score(fen: str, uci: str) -> int:
    """Deterministic centipawn score of a root move, side-to-move view."""
    digest = hashlib.sha256(f"{fen} {uci}".encode("ascii")).digest()
    return int.from_bytes(digest[:4], "big") % _SCORE_SPAN - _SCORE_SPAN // 2


def _greedy_pv(pos: Position, first: Move, length: int) -> list[str]:
    pv = [first.uci()]
    current = _make(pos, first)
    while len(pv) < length:
        moves = legal_moves(current)
        if not moves:
            break
        fen = encode_fen(current)
        best = max(moves, key=lambda m: move_score(fen, m.uci()))
        pv.append(best.uci())
        current = _make(current, best)
    return pv


def _ranked_root_moves(pos: Position, fen: str) -> list[tuple[int, Move]]:
    scored = [(move_score(fen, m.uci()), m) for m in legal_moves(pos)]
    scored.sort(key=lambda pair: (-pair[0], pair[1].uci()))
    return scored


def _answer_go(fen: str, depth: int, multipv: int) -> None:
    pos = decode_fen(fen)
    if not has_any_legal_move(pos):
        verdict = "mate 0" if pos.in_check() else "cp 0"
        _emit(f"info depth 0 score {verdict}")
        _emit("bestmove (none)")
        return

    ranked = _ranked_root_moves(pos, fen)
    lines = min(multipv, len(ranked))
    seed = int.from_bytes(hashlib.sha256(fen.encode("ascii")).digest()[:4], "big")
    # A shallow progress line, then the full final iteration per rank; the
    # final iteration re-states rank 1 once refined, so "last line wins"
    # behavior in clients is actually exercised.
    shallow = max(1, depth // 2)
    score0, move0 = ranked[0]
    _emit(
        f"info depth {shallow} seldepth {shallow + 2} multipv 1 score cp {score0 - 7} "
        f"nodes {seed % 5000 + 100} nps 120000 time 4 pv {move0.uci()}"
    )
    for rank in range(1, lines + 1):
        score, move = ranked[rank - 1]
        pv = _greedy_pv(pos, move, min(depth, 8))
        nodes = depth * 10_000 + seed % 9_999 + rank
        if rank == 1:
            _emit(
                f"info depth {depth} seldepth {depth + 3} multipv 1 score cp {score - 2} "
                f"nodes {nodes - 41} nps 800000 time {depth * 12} pv {move.uci()}"
            )
        _emit(
            f"info depth {depth} seldepth {depth + 4} multipv {rank} score cp {score} "
            f"nodes {nodes} nps 850000 time {depth * 13} pv {' '.join(pv)}"
        )
    _emit(f"bestmove {ranked[0][1].uci()}")


def main() -> int:
    delay_ms = float(os.environ.get("CHESSMILL_MOCK_DELAY_MS", "0"))
    crash_on = int(os.environ.get("CHESSMILL_MOCK_CRASH_ON_GO", "0"))
    hang_on = int(os.environ.get("CHESSMILL_MOCK_HANG_ON_GO", "0"))

    multipv = 1
    fen = None
    go_count = 0
    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        cmd, _, rest = line.partition(" ")
        if cmd == "uci":
            _emit(f"id name {NAME}")
            _emit(f"id author {AUTHOR}")
            _emit("option name MultiPV type spin default 1 min 1 max 500")
            _emit("option name Hash type spin default 16 min 1 max 4096")
            _emit("option name Threads type spin default 1 min 1 max 64")
            _emit("uciok")
        elif cmd == "isready":
            _emit("readyok")
        elif cmd == "setoption":
            tokens = rest.split()
            try:
                name = tokens[tokens.index("name") + 1]
                value = tokens[tokens.index("value") + 1]
            except (ValueError, IndexError):
                _emit("info string malformed setoption")
                continue
            if name.lower() == "multipv":
                multipv = max(1, int(value))
            elif name.lower() not in ("hash", "threads"):
                _emit(f"No such option: {name}")
        elif cmd == "ucinewgame":
            fen = None
        elif cmd == "position":
            if rest.startswith("fen "):
                fen = rest[4:].split(" moves ")[0].strip()
            elif rest.startswith("startpos"):
                fen = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"
        elif cmd == "go":
            go_count += 1
            if crash_on and go_count == crash_on:
                sys.exit(9)
            if hang_on and go_count == hang_on:
                time.sleep(3600)
            if delay_ms:
                time.sleep(delay_ms / 1000.0)
            tokens = rest.split()
            depth = int(tokens[tokens.index("depth") + 1]) if "depth" in tokens else 10
            if fen is None:
                _emit("info string no position set")
                _emit("bestmove (none)")
                continue
            _answer_go(fen, depth, multipv)
        elif cmd == "quit":
            return 0
        # anything else: ignore, like real engines do
    return 0


if __name__ == "__main__":
    sys.exit(main())
