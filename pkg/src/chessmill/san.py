"""SAN move interpretation over board.Position, plus whole-game replay.

Tolerant of real-corpus noise: check/mate suffixes, annotation glyphs
(!, ?, !!, ??, !?, ?!), numeric NAGs ($12), and 0-0 castling spellings are
accepted and ignored for move identity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .board import (
    ChessError,
    IllegalMoveError,
    Move,
    MoveKind,
    Position,
    apply_move,
    encode_fen,
    initial_position,
    legal_moves,
    square_index,
    square_name,
)

# Canonical 6-field FEN text, used as the position identity everywhere
# downstream (dedup, storage keys, trajectory lookups).
FenKey = str


class SanError(ChessError, ValueError):
    """A SAN token could not be resolved; `reason` is one of
    'malformed-san', 'illegal-move', 'ambiguous-move'."""

    def __init__(self, reason: str, san: str, detail: str = ""):
        msg = f"{reason}: {san!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.reason = reason
        self.san = san


class ReplayError(ChessError):
    """A game's movetext failed to replay; `ply` is the 1-based failing ply."""

    def __init__(self, ply: int, san: str, cause: Exception):
        super().__init__(f"illegal move at ply {ply}: {san!r} ({cause})")
        self.ply = ply
        self.san = san


_SUFFIX_RE = re.compile(r"(?:[+#]|[!?]+|\$\d+)+$")
_SAN_RE = re.compile(
    r"^(?:"
    r"(?P<castle>O-O-O|O-O|0-0-0|0-0)"
    r"|(?P<piece>[KQRBN])?(?P<from_file>[a-h])?(?P<from_rank>[1-8])?"
    r"(?P<capture>x)?(?P<dest>[a-h][1-8])(?:=?(?P<promo>[QRBN]))?"
    r")$"
)


def _strip_glyphs(san: str) -> str:
    return _SUFFIX_RE.sub("", san.strip())


def parse_san(pos: Position, san: str) -> Move:
    """Resolve a SAN token to the unique legal move it denotes in `pos`.

    Raises SanError with reason 'malformed-san' (unparseable token),
    'illegal-move' (no legal move matches), or 'ambiguous-move' (the token
    under-disambiguates, which indicates a malformed source).
    """
    core = _strip_glyphs(san)
    if not core:
        raise SanError("malformed-san", san, "empty token")
    m = _SAN_RE.match(core)
    if not m:
        raise SanError("malformed-san", san)

    moves = legal_moves(pos)
    if m.group("castle"):
        queenside = len(m.group("castle")) == 5
        matches = [
            mv
            for mv in moves
            if pos.board[mv.from_sq] in ("K", "k") and mv.to_sq - mv.from_sq == (-2 if queenside else 2)
        ]
    else:
        piece = m.group("piece") or "P"
        dest = square_index(m.group("dest"))
        from_file = m.group("from_file")
        from_rank = m.group("from_rank")
        promo = m.group("promo")
        matches = [
            mv
            for mv in moves
            if mv.to_sq == dest
            and pos.board[mv.from_sq].upper() == piece
            and mv.promotion == promo
            and (from_file is None or (mv.from_sq & 7) == ord(from_file) - ord("a"))
            and (from_rank is None or (mv.from_sq >> 3) == int(from_rank) - 1)
        ]

    if not matches:
        raise SanError("illegal-move", san)
    if len(matches) > 1:
        raise SanError(
            "ambiguous-move", san, "matches " + " ".join(mv.uci() for mv in matches)
        )
    return matches[0]


def move_to_san(pos: Position, move: Move) -> str:
    """Render a legal move as minimally disambiguated SAN with +/# suffix."""
    piece = pos.board[move.from_sq]
    if not piece:
        raise IllegalMoveError(f"no piece on {square_name(move.from_sq)}")
    successor, kind = apply_move(pos, move)

    if kind.is_castle_kingside:
        core = "O-O"
    elif kind.is_castle_queenside:
        core = "O-O-O"
    elif piece.upper() == "P":
        core = square_name(move.to_sq)
        if kind.is_capture:
            core = square_name(move.from_sq)[0] + "x" + core
        if move.promotion:
            core += "=" + move.promotion
    else:
        core = piece.upper() + _disambiguation(pos, move) + ("x" if kind.is_capture else "")
        core += square_name(move.to_sq)

    if kind.gives_checkmate:
        core += "#"
    elif kind.gives_check:
        core += "+"
    return core


def _disambiguation(pos: Position, move: Move) -> str:
    rivals = [
        mv
        for mv in legal_moves(pos)
        if mv.to_sq == move.to_sq
        and mv.from_sq != move.from_sq
        and pos.board[mv.from_sq] == pos.board[move.from_sq]
    ]
    if not rivals:
        return ""
    file_ch, rank_ch = square_name(move.from_sq)
    if all((mv.from_sq & 7) != (move.from_sq & 7) for mv in rivals):
        return file_ch
    if all((mv.from_sq >> 3) != (move.from_sq >> 3) for mv in rivals):
        return rank_ch
    return file_ch + rank_ch


@dataclass(frozen=True, slots=True)
class ReplayStep:
    """Position state after one ply: 1-based ply index, the FEN key of the
    resulting position, and the classification of the move that produced it."""

    ply: int
    fen: FenKey
    kind: MoveKind


def replay_san(sans: Iterable[str], start: Position | None = None) -> list[ReplayStep]:
    """Replay SAN tokens from `start` (default: the standard start).

    Returns one step per ply; step i holds the position after ply i. Raises
    ReplayError naming the first failing ply.
    """
    pos = start if start is not None else initial_position()
    steps: list[ReplayStep] = []
    for i, san in enumerate(sans, start=1):
        try:
            move = parse_san(pos, san)
            pos, kind = apply_move(pos, move)
        except ChessError as exc:
            raise ReplayError(i, san, exc) from exc
        steps.append(ReplayStep(i, encode_fen(pos), kind))
    return steps


def replay_game(game) -> list[ReplayStep]:
    """Replay a parsed game record (anything exposing `san_moves`)."""
    sans: Sequence[str] = getattr(game, "san_moves", game)
    return replay_san(sans)
