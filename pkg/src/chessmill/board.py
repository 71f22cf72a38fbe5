"""Chess rules kernel: board state, FEN codec, legal move generation.

Squares are indexed 0..63 with a1 = 0, b1 = 1, ..., h8 = 63 (rank-major from
white's side). Pieces are FEN letters: uppercase white, lowercase black.
Positions are immutable; every operation returns fresh values, so the kernel
is safe to share across worker threads without locks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

WHITE = "w"
BLACK = "b"

PIECE_KINDS = "PNBRQK"
PROMOTION_KINDS = "QRBN"

# Castling-rights bitmask.
CASTLE_WK, CASTLE_WQ, CASTLE_BK, CASTLE_BQ = 1, 2, 4, 8
_CASTLE_CHARS = ((CASTLE_WK, "K"), (CASTLE_WQ, "Q"), (CASTLE_BK, "k"), (CASTLE_BQ, "q"))

STARTING_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"

A1, B1, C1, D1, E1, F1, G1, H1 = range(8)
A8, B8, C8, D8, E8, F8, G8, H8 = range(56, 64)


class ChessError(Exception):
    """Base class for kernel errors."""


class FenError(ChessError, ValueError):
    """A FEN string was rejected; `field` names the offending FEN field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class IllegalMoveError(ChessError):
    """A move violated the rules in the position it was applied to."""


def square_name(sq: int) -> str:
    return "abcdefgh"[sq & 7] + "12345678"[sq >> 3]


def square_index(name: str) -> int:
    if len(name) != 2 or name[0] not in "abcdefgh" or name[1] not in "12345678":
        raise ValueError(f"bad square name: {name!r}")
    return (ord(name[1]) - ord("1")) * 8 + (ord(name[0]) - ord("a"))


def _build_step_table(deltas: Sequence[tuple[int, int]]) -> tuple[tuple[int, ...], ...]:
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        targets = []
        for df, dr in deltas:
            nf, nr = f + df, r + dr
            if 0 <= nf < 8 and 0 <= nr < 8:
                targets.append(nr * 8 + nf)
        table.append(tuple(targets))
    return tuple(table)


def _build_rays(deltas: Sequence[tuple[int, int]]) -> tuple[tuple[tuple[int, ...], ...], ...]:
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        rays = []
        for df, dr in deltas:
            ray = []
            nf, nr = f + df, r + dr
            while 0 <= nf < 8 and 0 <= nr < 8:
                ray.append(nr * 8 + nf)
                nf += df
                nr += dr
            rays.append(tuple(ray))
        table.append(tuple(rays))
    return tuple(table)


_KNIGHT = _build_step_table([(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)])
_KING = _build_step_table([(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)])
_ROOK_RAYS = _build_rays([(1, 0), (-1, 0), (0, 1), (0, -1)])
_BISHOP_RAYS = _build_rays([(1, 1), (1, -1), (-1, 1), (-1, -1)])
# Squares holding a pawn of the given color that would attack the indexed square.
_WHITE_PAWN_SOURCES = _build_step_table([(1, -1), (-1, -1)])
_BLACK_PAWN_SOURCES = _build_step_table([(1, 1), (-1, 1)])

# _ALIGNED[k] = squares sharing a rank, file, or diagonal with k. A move that
# starts outside this set (king, en passant, and check evasions aside) can
# never expose the king on k and needs no legality verification.
_ALIGNED: tuple[frozenset[int], ...] = tuple(
    frozenset(s for ray in _ROOK_RAYS[k] + _BISHOP_RAYS[k] for s in ray) for k in range(64)
)


@dataclass(frozen=True, slots=True)
class Move:
    """A move: origin, destination, optional promotion kind ('Q','R','B','N')."""

    from_sq: int
    to_sq: int
    promotion: str | None = None

    def __post_init__(self) -> None:
        if self.from_sq == self.to_sq:
            raise ValueError("move origin equals destination")
        if self.promotion is not None and self.promotion not in PROMOTION_KINDS:
            raise ValueError(f"bad promotion kind: {self.promotion!r}")

    def uci(self) -> str:
        text = square_name(self.from_sq) + square_name(self.to_sq)
        if self.promotion:
            text += self.promotion.lower()
        return text

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        if len(text) not in (4, 5):
            raise ValueError(f"bad UCI move: {text!r}")
        promo = None
        if len(text) == 5:
            promo = text[4].upper()
        return cls(square_index(text[:2]), square_index(text[2:4]), promo)


@dataclass(frozen=True, slots=True)
class MoveKind:
    """Classification of one played move, computed on the successor position."""

    moved_piece: str
    is_capture: bool = False
    is_promotion: bool = False
    promoted_to: str | None = None
    is_castle_kingside: bool = False
    is_castle_queenside: bool = False
    gives_check: bool = False
    gives_checkmate: bool = False


@dataclass(frozen=True, slots=True)
class Position:
    """Full board state; the decoded form of a 6-field FEN string."""

    board: tuple[str, ...]  # 64 entries, '' empty, FEN piece letter otherwise
    side_to_move: str
    castling: int  # CASTLE_* bitmask
    en_passant: int | None
    halfmove_clock: int
    fullmove_number: int

    def piece_at(self, sq: int) -> str:
        return self.board[sq]

    def king_square(self, color: str) -> int:
        king = "K" if color == WHITE else "k"
        return self.board.index(king)

    def in_check(self) -> bool:
        return _attacked(self.board, self.king_square(self.side_to_move), self.side_to_move != WHITE)


def _attacked(board: Sequence[str], sq: int, by_white: bool) -> bool:
    """True if any piece of the given color attacks `sq`."""
    if by_white:
        pawn_sources, knight, king, rook_q, bishop_q = _WHITE_PAWN_SOURCES, "N", "K", ("R", "Q"), ("B", "Q")
        pawn = "P"
    else:
        pawn_sources, knight, king, rook_q, bishop_q = _BLACK_PAWN_SOURCES, "n", "k", ("r", "q"), ("b", "q")
        pawn = "p"
    for s in pawn_sources[sq]:
        if board[s] == pawn:
            return True
    for s in _KNIGHT[sq]:
        if board[s] == knight:
            return True
    for s in _KING[sq]:
        if board[s] == king:
            return True
    for ray in _ROOK_RAYS[sq]:
        for s in ray:
            p = board[s]
            if p:
                if p in rook_q:
                    return True
                break
    for ray in _BISHOP_RAYS[sq]:
        for s in ray:
            p = board[s]
            if p:
                if p in bishop_q:
                    return True
                break
    return False


def _board_after(board: Sequence[str], move: Move, white_moving: bool, ep: int | None) -> list[str]:
    """Board array after `move`, handling en passant, castling, promotion."""
    b = list(board)
    piece = b[move.from_sq]
    b[move.to_sq] = piece
    b[move.from_sq] = ""
    if piece in "Pp":
        if move.to_sq == ep and (move.from_sq & 7) != (move.to_sq & 7) and board[move.to_sq] == "":
            b[move.to_sq - 8 if white_moving else move.to_sq + 8] = ""
        if move.promotion:
            b[move.to_sq] = move.promotion if white_moving else move.promotion.lower()
    elif piece in "Kk" and abs((move.from_sq & 7) - (move.to_sq & 7)) == 2:
        rank_base = move.from_sq & ~7
        if (move.to_sq & 7) == 6:  # kingside: rook h -> f
            b[rank_base + 5] = b[rank_base + 7]
            b[rank_base + 7] = ""
        else:  # queenside: rook a -> d
            b[rank_base + 3] = b[rank_base]
            b[rank_base] = ""
    return b


def _king_safe_after(pos: Position, move: Move) -> bool:
    white = pos.side_to_move == WHITE
    b = _board_after(pos.board, move, white, pos.en_passant)
    ksq = b.index("K" if white else "k")
    return not _attacked(b, ksq, not white)


def _pseudo_moves(pos: Position) -> Iterator[Move]:
    board = pos.board
    white = pos.side_to_move == WHITE
    own_lower = not white
    for sq in range(64):
        piece = board[sq]
        if not piece or piece.islower() != own_lower:
            continue
        kind = piece.upper()
        if kind == "P":
            yield from _pawn_moves(pos, sq, white)
        elif kind == "N":
            for t in _KNIGHT[sq]:
                p = board[t]
                if not p or p.islower() == white:
                    yield Move(sq, t)
        elif kind == "K":
            for t in _KING[sq]:
                p = board[t]
                if not p or p.islower() == white:
                    yield Move(sq, t)
            yield from _castle_moves(pos, sq, white)
        else:
            rays = ()
            if kind in ("R", "Q"):
                rays += _ROOK_RAYS[sq]
            if kind in ("B", "Q"):
                rays += _BISHOP_RAYS[sq]
            for ray in rays:
                for t in ray:
                    p = board[t]
                    if not p:
                        yield Move(sq, t)
                        continue
                    if p.islower() == white:
                        yield Move(sq, t)
                    break


def _pawn_moves(pos: Position, sq: int, white: bool) -> Iterator[Move]:
    board = pos.board
    step = 8 if white else -8
    start_rank = 1 if white else 6
    last_rank = 7 if white else 0
    one = sq + step
    if board[one] == "":
        if one >> 3 == last_rank:
            for promo in PROMOTION_KINDS:
                yield Move(sq, one, promo)
        else:
            yield Move(sq, one)
            if sq >> 3 == start_rank and board[sq + 2 * step] == "":
                yield Move(sq, sq + 2 * step)
    file = sq & 7
    for df in (-1, 1):
        nf = file + df
        if not 0 <= nf < 8:
            continue
        t = one - file + nf
        p = board[t]
        if (p and p.islower() == white) or (t == pos.en_passant):
            if t >> 3 == last_rank:
                for promo in PROMOTION_KINDS:
                    yield Move(sq, t, promo)
            else:
                yield Move(sq, t)


def _castle_moves(pos: Position, ksq: int, white: bool) -> Iterator[Move]:
    board = pos.board
    home = E1 if white else E8
    if ksq != home:
        return
    k_right = CASTLE_WK if white else CASTLE_BK
    q_right = CASTLE_WQ if white else CASTLE_BQ
    enemy_is_white = not white
    if pos.castling & k_right and board[home + 1] == "" and board[home + 2] == "":
        if not any(_attacked(board, s, enemy_is_white) for s in (home, home + 1, home + 2)):
            yield Move(home, home + 2)
    if pos.castling & q_right and board[home - 1] == "" and board[home - 2] == "" and board[home - 3] == "":
        if not any(_attacked(board, s, enemy_is_white) for s in (home, home - 1, home - 2)):
            yield Move(home, home - 2)


def legal_moves(pos: Position) -> list[Move]:
    """All legal moves under FIDE rules. Empty iff checkmate or stalemate."""
    return list(_legal_moves_iter(pos))


def _legal_moves_iter(pos: Position) -> Iterator[Move]:
    white = pos.side_to_move == WHITE
    ksq = pos.king_square(pos.side_to_move)
    check = _attacked(pos.board, ksq, not white)
    aligned = _ALIGNED[ksq]
    ep = pos.en_passant
    for m in _pseudo_moves(pos):
        if check or m.from_sq == ksq or m.from_sq in aligned or m.to_sq == ep:
            if not _king_safe_after(pos, m):
                continue
        yield m


def has_any_legal_move(pos: Position) -> bool:
    for _ in _legal_moves_iter(pos):
        return True
    return False


def _make(pos: Position, move: Move) -> Position:
    """Successor position for a known-legal move (no classification)."""
    white = pos.side_to_move == WHITE
    board = pos.board
    piece = board[move.from_sq]
    target = board[move.to_sq]
    new_board = _board_after(board, move, white, pos.en_passant)

    castling = pos.castling
    if piece == "K":
        castling &= ~(CASTLE_WK | CASTLE_WQ)
    elif piece == "k":
        castling &= ~(CASTLE_BK | CASTLE_BQ)
    for sq in (move.from_sq, move.to_sq):
        if sq == H1:
            castling &= ~CASTLE_WK
        elif sq == A1:
            castling &= ~CASTLE_WQ
        elif sq == H8:
            castling &= ~CASTLE_BK
        elif sq == A8:
            castling &= ~CASTLE_BQ

    ep = None
    if piece in "Pp" and abs(move.to_sq - move.from_sq) == 16:
        ep = (move.from_sq + move.to_sq) // 2

    is_capture = bool(target) or (
        piece in "Pp" and move.to_sq == pos.en_passant and (move.from_sq & 7) != (move.to_sq & 7)
    )
    halfmove = 0 if (piece in "Pp" or is_capture) else pos.halfmove_clock + 1

    return Position(
        board=tuple(new_board),
        side_to_move=BLACK if white else WHITE,
        castling=castling,
        en_passant=ep,
        halfmove_clock=halfmove,
        fullmove_number=pos.fullmove_number + (0 if white else 1),
    )


def apply_move(pos: Position, move: Move) -> tuple[Position, MoveKind]:
    """Apply a legal move; returns the successor and the move's classification.

    Raises IllegalMoveError when the move is not legal in `pos`.
    """
    piece = pos.board[move.from_sq]
    white = pos.side_to_move == WHITE
    if not piece or piece.islower() == white:
        raise IllegalMoveError(f"no {pos.side_to_move} piece on {square_name(move.from_sq)}")
    if move not in set(_piece_pseudo_moves(pos, move.from_sq)):
        raise IllegalMoveError(f"{move.uci()} is not a pseudo-legal move for {piece}")
    if not _king_safe_after(pos, move):
        raise IllegalMoveError(f"{move.uci()} leaves the king in check")

    target = pos.board[move.to_sq]
    is_ep = piece in "Pp" and move.to_sq == pos.en_passant and (move.from_sq & 7) != (move.to_sq & 7)
    successor = _make(pos, move)

    castle_k = piece in "Kk" and move.to_sq - move.from_sq == 2
    castle_q = piece in "Kk" and move.from_sq - move.to_sq == 2
    gives_check = successor.in_check()
    kind = MoveKind(
        moved_piece=piece.upper(),
        is_capture=bool(target) or is_ep,
        is_promotion=move.promotion is not None,
        promoted_to=move.promotion,
        is_castle_kingside=castle_k,
        is_castle_queenside=castle_q,
        gives_check=gives_check,
        gives_checkmate=gives_check and not has_any_legal_move(successor),
    )
    return successor, kind


def _piece_pseudo_moves(pos: Position, sq: int) -> Iterator[Move]:
    """Pseudo-legal moves of the single piece on `sq` (same rules as _pseudo_moves)."""
    piece = pos.board[sq]
    white = pos.side_to_move == WHITE
    kind = piece.upper()
    board = pos.board
    if kind == "P":
        yield from _pawn_moves(pos, sq, white)
    elif kind == "N":
        for t in _KNIGHT[sq]:
            p = board[t]
            if not p or p.islower() == white:
                yield Move(sq, t)
    elif kind == "K":
        for t in _KING[sq]:
            p = board[t]
            if not p or p.islower() == white:
                yield Move(sq, t)
        yield from _castle_moves(pos, sq, white)
    else:
        rays = ()
        if kind in ("R", "Q"):
            rays += _ROOK_RAYS[sq]
        if kind in ("B", "Q"):
            rays += _BISHOP_RAYS[sq]
        for ray in rays:
            for t in ray:
                p = board[t]
                if not p:
                    yield Move(sq, t)
                    continue
                if p.islower() == white:
                    yield Move(sq, t)
                break


@lru_cache(maxsize=1)
def initial_position() -> Position:
    return decode_fen(STARTING_FEN)


def decode_fen(text: str) -> Position:
    """Decode a 6-field FEN string, validating placement and consistency.

    Raises FenError naming the offending field. Castling availability is
    checked against piece placement (Chess960-style rights are rejected).
    """
    fields = text.split()
    if len(fields) != 6:
        raise FenError("fen", f"expected 6 fields, got {len(fields)}")
    placement, side, castling_text, ep_text, halfmove_text, fullmove_text = fields

    ranks = placement.split("/")
    if len(ranks) != 8:
        raise FenError("placement", f"expected 8 ranks, got {len(ranks)}")
    board: list[str] = [""] * 64
    for rank_idx, rank_text in enumerate(ranks):
        rank = 7 - rank_idx
        file = 0
        prev_digit = False
        for ch in rank_text:
            if ch.isdigit():
                if prev_digit:
                    raise FenError("placement", f"adjacent digits in rank {rank + 1}")
                n = int(ch)
                if not 1 <= n <= 8:
                    raise FenError("placement", f"bad empty-run {ch!r} in rank {rank + 1}")
                file += n
                prev_digit = True
            elif ch in "PNBRQKpnbrqk":
                if file >= 8:
                    raise FenError("placement", f"rank {rank + 1} overflows 8 files")
                board[rank * 8 + file] = ch
                file += 1
                prev_digit = False
            else:
                raise FenError("placement", f"bad piece char {ch!r}")
        if file != 8:
            raise FenError("placement", f"rank {rank + 1} has {file} files, expected 8")

    for king, label in (("K", "white"), ("k", "black")):
        n = board.count(king)
        if n != 1:
            raise FenError("placement", f"illegal-placement: {n} {label} kings")
    for sq in list(range(0, 8)) + list(range(56, 64)):
        if board[sq] in ("P", "p"):
            raise FenError("placement", f"illegal-placement: pawn on {square_name(sq)}")

    if side not in (WHITE, BLACK):
        raise FenError("side", f"expected 'w' or 'b', got {side!r}")

    castling = 0
    if castling_text != "-":
        for ch in castling_text:
            for bit, c in _CASTLE_CHARS:
                if ch == c:
                    if castling & bit:
                        raise FenError("castling", f"duplicate right {ch!r}")
                    castling |= bit
                    break
            else:
                raise FenError("castling", f"bad castling char {ch!r}")
    _check_castling_consistency(board, castling)

    ep = None
    if ep_text != "-":
        try:
            ep = square_index(ep_text)
        except ValueError:
            raise FenError("en_passant", f"bad square {ep_text!r}") from None
        _check_ep_consistency(board, ep, side)

    try:
        halfmove = int(halfmove_text)
        fullmove = int(fullmove_text)
    except ValueError:
        raise FenError("clocks", f"non-numeric clock in {halfmove_text!r} {fullmove_text!r}") from None
    if halfmove < 0:
        raise FenError("clocks", f"negative halfmove clock {halfmove}")
    if fullmove < 1:
        raise FenError("clocks", f"fullmove number {fullmove} < 1")

    return Position(tuple(board), side, castling, ep, halfmove, fullmove)


def _check_castling_consistency(board: list[str], castling: int) -> None:
    checks = (
        (CASTLE_WK, E1, "K", H1, "R"),
        (CASTLE_WQ, E1, "K", A1, "R"),
        (CASTLE_BK, E8, "k", H8, "r"),
        (CASTLE_BQ, E8, "k", A8, "r"),
    )
    for bit, ksq, king, rsq, rook in checks:
        if castling & bit and (board[ksq] != king or board[rsq] != rook):
            raise FenError(
                "castling",
                f"right {dict(_CASTLE_CHARS)[bit]!r} set but king/rook not on "
                f"{square_name(ksq)}/{square_name(rsq)}",
            )


def _check_ep_consistency(board: list[str], ep: int, side: str) -> None:
    rank = ep >> 3
    if side == WHITE:
        # Black just double-pushed: ep on rank 6, black pawn one square below.
        if rank != 5:
            raise FenError("en_passant", f"inconsistent-ep-square: {square_name(ep)} with white to move")
        pawn_sq, pawn, origin = ep - 8, "p", ep + 8
    else:
        if rank != 2:
            raise FenError("en_passant", f"inconsistent-ep-square: {square_name(ep)} with black to move")
        pawn_sq, pawn, origin = ep + 8, "P", ep - 8
    if board[ep] != "" or board[origin] != "" or board[pawn_sq] != pawn:
        raise FenError("en_passant", f"inconsistent-ep-square: no double-pushed pawn behind {square_name(ep)}")


def encode_fen(pos: Position) -> str:
    """Canonical 6-field FEN text; inverse of decode_fen."""
    ranks = []
    for rank in range(7, -1, -1):
        row = []
        empties = 0
        for file in range(8):
            piece = pos.board[rank * 8 + file]
            if piece:
                if empties:
                    row.append(str(empties))
                    empties = 0
                row.append(piece)
            else:
                empties += 1
        if empties:
            row.append(str(empties))
        ranks.append("".join(row))
    castling = "".join(c for bit, c in _CASTLE_CHARS if pos.castling & bit) or "-"
    ep = square_name(pos.en_passant) if pos.en_passant is not None else "-"
    return (
        f"{'/'.join(ranks)} {pos.side_to_move} {castling} {ep} "
        f"{pos.halfmove_clock} {pos.fullmove_number}"
    )


def perft(pos: Position, depth: int) -> int:
    """Legal move-tree leaf count; the standard move-generator validity check."""
    if depth <= 0:
        return 1
    moves = legal_moves(pos)
    if depth == 1:
        return len(moves)
    return sum(perft(_make(pos, m), depth - 1) for m in moves)
