"""Independent brute-force reference implementations used only by tests.

The move generator here shares no code or design with the package kernel:
it uses a 10x12 mailbox board with integer piece codes and offset walks,
and verifies every candidate move by full make-and-scan. Slow on purpose.
"""

from __future__ import annotations

# 10x12 mailbox: 2 sentinel ranks top and bottom, 1 sentinel file each side.
# Index 21 = a1, 28 = h1, 91 = a8, 98 = h8. OFF marks off-board cells.
OFF = 99
EMPTY = 0
WP, WN, WB, WR, WQ, WK = 1, 2, 3, 4, 5, 6
_PIECE_OF_CHAR = {
    "P": WP, "N": WN, "B": WB, "R": WR, "Q": WQ, "K": WK,
    "p": -WP, "n": -WN, "b": -WB, "r": -WR, "q": -WQ, "k": -WK,
}

N_OFFS = (-21, -19, -12, -8, 8, 12, 19, 21)
K_OFFS = (-11, -10, -9, -1, 1, 9, 10, 11)
B_OFFS = (-11, -9, 9, 11)
R_OFFS = (-10, -1, 1, 10)


def mb_index(file: int, rank: int) -> int:
    return 21 + rank * 10 + file


class MailboxState:
    __slots__ = ("cells", "white_to_move", "rights", "ep", "halfmove", "fullmove")

    def __init__(self) -> None:
        self.cells = [OFF] * 120
        for r in range(8):
            for f in range(8):
                self.cells[mb_index(f, r)] = EMPTY
        self.white_to_move = True
        self.rights = set()  # subset of {"K","Q","k","q"}
        self.ep = None
        self.halfmove = 0
        self.fullmove = 1

    def clone(self) -> "MailboxState":
        s = MailboxState.__new__(MailboxState)
        s.cells = list(self.cells)
        s.white_to_move = self.white_to_move
        s.rights = set(self.rights)
        s.ep = self.ep
        s.halfmove = self.halfmove
        s.fullmove = self.fullmove
        return s


def mb_from_fen(fen: str) -> MailboxState:
    placement, side, rights, ep, half, full = fen.split()
    s = MailboxState()
    rank = 7
    file = 0
    for ch in placement:
        if ch == "/":
            rank -= 1
            file = 0
        elif ch.isdigit():
            file += int(ch)
        else:
            s.cells[mb_index(file, rank)] = _PIECE_OF_CHAR[ch]
            file += 1
    s.white_to_move = side == "w"
    s.rights = set(rights) - {"-"}
    if ep != "-":
        s.ep = mb_index(ord(ep[0]) - ord("a"), ord(ep[1]) - ord("1"))
    s.halfmove = int(half)
    s.fullmove = int(full)
    return s


def mb_square_attacked(s: MailboxState, cell: int, by_white: bool) -> bool:
    sign = 1 if by_white else -1
    pawn_dirs = (-9, -11) if by_white else (9, 11)
    for d in pawn_dirs:
        if s.cells[cell + d] == sign * WP:
            return True
    for d in N_OFFS:
        if s.cells[cell + d] == sign * WN:
            return True
    for d in K_OFFS:
        if s.cells[cell + d] == sign * WK:
            return True
    for d in B_OFFS:
        c = cell + d
        while s.cells[c] == EMPTY:
            c += d
        if s.cells[c] in (sign * WB, sign * WQ):
            return True
    for d in R_OFFS:
        c = cell + d
        while s.cells[c] == EMPTY:
            c += d
        if s.cells[c] in (sign * WR, sign * WQ):
            return True
    return False


def _mb_king_cell(s: MailboxState, white: bool) -> int:
    target = WK if white else -WK
    return s.cells.index(target)


def mb_pseudo_moves(s: MailboxState):
    """Yields (from, to, promo, flag) tuples; promo in {0, WN..WQ}, flag in
    {'', 'ep', 'ck', 'cq', 'dbl'}."""
    sign = 1 if s.white_to_move else -1
    fwd = 10 * sign
    for cell in range(21, 99):
        piece = s.cells[cell]
        if piece == OFF or piece == EMPTY or (piece > 0) != s.white_to_move:
            continue
        kind = abs(piece)
        if kind == WP:
            promo_rank = range(91, 99) if s.white_to_move else range(21, 29)
            one = cell + fwd
            if s.cells[one] == EMPTY:
                if one in promo_rank:
                    for pk in (WQ, WR, WB, WN):
                        yield (cell, one, pk, "")
                else:
                    yield (cell, one, 0, "")
                    start = range(31, 39) if s.white_to_move else range(81, 89)
                    if cell in start and s.cells[cell + 2 * fwd] == EMPTY:
                        yield (cell, cell + 2 * fwd, 0, "dbl")
            for d in (fwd - 1, fwd + 1):
                t = cell + d
                victim = s.cells[t]
                if victim != OFF and victim != EMPTY and (victim > 0) != s.white_to_move:
                    if t in promo_rank:
                        for pk in (WQ, WR, WB, WN):
                            yield (cell, t, pk, "")
                    else:
                        yield (cell, t, 0, "")
                elif t == s.ep:
                    yield (cell, t, 0, "ep")
        elif kind == WN:
            for d in N_OFFS:
                t = cell + d
                v = s.cells[t]
                if v == EMPTY or (v != OFF and (v > 0) != s.white_to_move):
                    yield (cell, t, 0, "")
        elif kind == WK:
            for d in K_OFFS:
                t = cell + d
                v = s.cells[t]
                if v == EMPTY or (v != OFF and (v > 0) != s.white_to_move):
                    yield (cell, t, 0, "")
            yield from _mb_castles(s)
        else:
            dirs = B_OFFS if kind == WB else R_OFFS if kind == WR else B_OFFS + R_OFFS
            for d in dirs:
                t = cell + d
                while True:
                    v = s.cells[t]
                    if v == EMPTY:
                        yield (cell, t, 0, "")
                        t += d
                        continue
                    if v != OFF and (v > 0) != s.white_to_move:
                        yield (cell, t, 0, "")
                    break


def _mb_castles(s: MailboxState):
    if s.white_to_move:
        e, enemy_white = mb_index(4, 0), False
        k_right, q_right = "K", "Q"
    else:
        e, enemy_white = mb_index(4, 7), True
        k_right, q_right = "k", "q"
    if mb_square_attacked(s, e, enemy_white):
        return
    if k_right in s.rights and s.cells[e + 1] == EMPTY and s.cells[e + 2] == EMPTY:
        if not mb_square_attacked(s, e + 1, enemy_white) and not mb_square_attacked(s, e + 2, enemy_white):
            yield (e, e + 2, 0, "ck")
    if q_right in s.rights and all(s.cells[e - i] == EMPTY for i in (1, 2, 3)):
        if not mb_square_attacked(s, e - 1, enemy_white) and not mb_square_attacked(s, e - 2, enemy_white):
            yield (e, e - 2, 0, "cq")


def mb_make(s: MailboxState, move) -> MailboxState:
    frm, to, promo, flag = move
    n = s.clone()
    piece = n.cells[frm]
    capture = n.cells[to] != EMPTY or flag == "ep"
    n.cells[to] = piece
    n.cells[frm] = EMPTY
    if flag == "ep":
        n.cells[to - (10 if s.white_to_move else -10)] = EMPTY
    elif flag == "ck":
        n.cells[to - 1] = n.cells[to + 1]
        n.cells[to + 1] = EMPTY
    elif flag == "cq":
        n.cells[to + 1] = n.cells[to - 2]
        n.cells[to - 2] = EMPTY
    if promo:
        n.cells[to] = promo if s.white_to_move else -promo
    if abs(piece) == WK:
        n.rights -= {"K", "Q"} if s.white_to_move else {"k", "q"}
    for cell, right in ((mb_index(7, 0), "K"), (mb_index(0, 0), "Q"),
                        (mb_index(7, 7), "k"), (mb_index(0, 7), "q")):
        if frm == cell or to == cell:
            n.rights.discard(right)
    n.ep = (frm + to) // 2 if flag == "dbl" else None
    n.halfmove = 0 if (abs(piece) == WP or capture) else s.halfmove + 1
    if not s.white_to_move:
        n.fullmove += 1
    n.white_to_move = not s.white_to_move
    return n


def mb_legal_moves(s: MailboxState) -> list:
    out = []
    for mv in mb_pseudo_moves(s):
        n = mb_make(s, mv)
        if not mb_square_attacked(n, _mb_king_cell(n, s.white_to_move), n.white_to_move):
            out.append(mv)
    return out


def mb_perft(s: MailboxState, depth: int) -> int:
    if depth <= 0:
        return 1
    moves = mb_legal_moves(s)
    if depth == 1:
        return len(moves)
    return sum(mb_perft(mb_make(s, mv), depth - 1) for mv in moves)


def mb_move_uci(move) -> str:
    frm, to, promo, _ = move
    def name(cell: int) -> str:
        off = cell - 21
        return "abcdefgh"[off % 10] + "12345678"[off // 10]
    suffix = {0: "", WN: "n", WB: "b", WR: "r", WQ: "q"}[promo]
    return name(frm) + name(to) + suffix
