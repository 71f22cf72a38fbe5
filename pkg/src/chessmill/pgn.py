"""Streaming PGN ingestion: parse, normalize headers, replay-gate, dedup.

The parser is a line-oriented state machine over a byte stream; it never
buffers whole files, survives arbitrary garbage, and resumes at the next
tag-pair section after an error. Input bytes are decoded latin-1 so legacy
archives with mixed 8-bit encodings pass through losslessly.
"""

from __future__ import annotations

import enum
import hashlib
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Callable, Iterable, Iterator, Mapping

from .san import ReplayError, _SAN_RE, _strip_glyphs, replay_game


class Result(enum.Enum):
    WHITE_WIN = "white-win"
    BLACK_WIN = "black-win"
    DRAW = "draw"
    UNKNOWN = "unknown"


_RESULT_TOKENS = {
    "1-0": Result.WHITE_WIN,
    "0-1": Result.BLACK_WIN,
    "1/2-1/2": Result.DRAW,
    "*": Result.UNKNOWN,
}
RESULT_TOKEN_OF = {v: k for k, v in _RESULT_TOKENS.items()}

ELO_MIN, ELO_MAX = 1, 3500


@dataclass(frozen=True, slots=True)
class PartialDate:
    """PGN date with '??' components mapped to None."""

    year: int
    month: int | None = None
    day: int | None = None

    def __str__(self) -> str:
        return f"{self.year:04d}.{self.month or 0:02d}.{self.day or 0:02d}"


@dataclass(frozen=True, slots=True)
class GameRecord:
    """One parsed game: normalized headers, SAN movetext, provenance."""

    game_id: str
    white_name: str
    black_name: str
    result: Result
    san_moves: tuple[str, ...]
    event: str | None = None
    site: str | None = None
    round: str | None = None
    date: PartialDate | None = None
    white_elo: int | None = None
    black_elo: int | None = None
    eco_code: str | None = None
    source_file: str = "<stream>"
    byte_offset: int = 0

    def ply_count(self) -> int:
        return len(self.san_moves)


@dataclass(frozen=True, slots=True)
class GameError:
    """A game that failed to parse. `kind` is one of 'bad-tag-pair',
    'unterminated-comment', 'bad-movetext-token', 'missing-result'."""

    kind: str
    message: str
    source_file: str
    byte_offset: int

    def __str__(self) -> str:
        return f"{self.source_file}:{self.byte_offset} {self.kind}: {self.message}"


@dataclass(slots=True)
class IngestReport:
    """Ingest accounting. parse_failures counts games rejected before dedup,
    both syntactic failures and replay-gate exclusions; the latter are also
    broken out in illegal_replay_failures. Always:
    games_kept + duplicates_removed + parse_failures = games_read.
    """

    games_read: int = 0
    games_kept: int = 0
    duplicates_removed: int = 0
    parse_failures: int = 0
    illegal_replay_failures: int = 0
    diagnostics: list[str] = field(default_factory=list)

    def note(self, text: str) -> None:
        self.diagnostics.append(text)

    def as_lines(self) -> list[str]:
        return [
            f"games_read={self.games_read}",
            f"games_kept={self.games_kept}",
            f"duplicates_removed={self.duplicates_removed}",
            f"parse_failures={self.parse_failures}",
            f"illegal_replay_failures={self.illegal_replay_failures}",
        ]


_TAG_RE = re.compile(r'^\[\s*(\w+)\s+"((?:[^"\\]|\\.)*)"\s*\]\s*$')
_DATE_RE = re.compile(r"^(\d{4})(?:\.(\d\d|\?\?))?(?:\.(\d\d|\?\?))?$")
_ECO_RE = re.compile(r"^[A-E]\d\d")
_MOVENUM_PREFIX = re.compile(r"^\d+\.*")
_NAG_RE = re.compile(r"^\$\d+$")

# Chess titles that real archives append to player names.
_TITLES = ("gm", "im", "fm", "wgm", "wim", "wfm", "cm", "wcm", "nm", "lm")
_TITLE_SUFFIX = re.compile(r"(?:\s*\((?:%s)\)|\s+(?:%s))$" % ("|".join(_TITLES), "|".join(_TITLES)))


def normalize_name(name: str) -> str:
    """Dedup form of a player name: case-folded, whitespace collapsed,
    trailing title annotations removed."""
    out = " ".join(name.split()).casefold()
    while True:
        trimmed = _TITLE_SUFFIX.sub("", out)
        if trimmed == out:
            return out
        out = trimmed


def _unescape_tag(value: str) -> str:
    return value.replace('\\"', '"').replace("\\\\", "\\")


def normalize_headers(raw: Mapping[str, str]) -> tuple[dict, list[str]]:
    """Map raw tag pairs to normalized header fields.

    Unparseable values become None and produce a diagnostic note; nothing
    raises. Returns (fields, notes).
    """
    notes: list[str] = []
    fields: dict = {}

    def plain(tag: str) -> str | None:
        v = raw.get(tag, "").strip()
        return v if v and v != "?" else None

    fields["event"] = plain("Event")
    fields["site"] = plain("Site")
    fields["round"] = plain("Round")
    fields["white_name"] = raw.get("White", "").strip()
    fields["black_name"] = raw.get("Black", "").strip()
    if not fields["white_name"] or not fields["black_name"]:
        notes.append("missing player name tag")

    fields["date"] = None
    date_text = raw.get("Date", "").strip()
    if date_text and not date_text.startswith("?"):
        m = _DATE_RE.match(date_text)
        if m:
            year = int(m.group(1))
            month = day = None
            if m.group(2) and m.group(2) != "??":
                month = int(m.group(2))
                if not 1 <= month <= 12:
                    notes.append(f"month out of range in Date {date_text!r}")
                    month = None
            if month is not None and m.group(3) and m.group(3) != "??":
                day = int(m.group(3))
                if not 1 <= day <= 31:
                    notes.append(f"day out of range in Date {date_text!r}")
                    day = None
            fields["date"] = PartialDate(year, month, day)
        else:
            notes.append(f"unparseable Date {date_text!r}")

    for tag, key in (("WhiteElo", "white_elo"), ("BlackElo", "black_elo")):
        fields[key] = None
        v = raw.get(tag, "").strip()
        if v and v != "-":
            if v.isdigit() and ELO_MIN <= int(v) <= ELO_MAX:
                fields[key] = int(v)
            else:
                notes.append(f"unparseable {tag} {v!r}")

    fields["eco_code"] = None
    eco = raw.get("ECO", "").strip()
    if eco:
        m = _ECO_RE.match(eco)
        if m:
            fields["eco_code"] = m.group(0)
        else:
            notes.append(f"unparseable ECO {eco!r}")

    fields["header_result"] = _RESULT_TOKENS.get(raw.get("Result", "").strip())
    return fields, notes


def _game_id(white: str, black: str, result: Result, date: PartialDate | None, sans: tuple[str, ...]) -> str:
    payload = "\x1f".join([white, black, result.value, str(date) if date else "-", " ".join(sans)])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _movetext_san(token: str) -> str | None:
    """Strip a move-number prefix; return the SAN part or None if the token
    is pure bookkeeping (move number, NAG, ellipsis)."""
    if _NAG_RE.match(token):
        return None
    if token.startswith(("0-0", "O-O")):  # keep zero-spelled castling intact
        return token
    rest = _MOVENUM_PREFIX.sub("", token, count=1)
    if not rest:
        return None
    return rest


class _GameBuilder:
    __slots__ = ("tags", "sans", "offset", "result_token")

    def __init__(self, offset: int):
        self.tags: dict[str, str] = {}
        self.sans: list[str] = []
        self.offset = offset
        self.result_token: str | None = None


def parse_pgn_stream(
    stream: BinaryIO | bytes,
    source: str = "<stream>",
    on_note: Callable[[str], None] | None = None,
) -> Iterator[GameRecord | GameError]:
    """Parse a PGN byte stream into GameRecords, yielding GameError for each
    malformed block and resuming at the next tag-pair section.

    `on_note` receives header-normalization diagnostics for games that still
    parse (absent Elo, bad dates, ...).
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)

    BETWEEN, TAGS, MOVETEXT, RECOVER = range(4)
    state = BETWEEN
    game: _GameBuilder | None = None
    in_comment = False
    var_depth = 0
    offset = 0

    def finalize() -> GameRecord | GameError:
        nonlocal game, in_comment, var_depth
        g = game
        game = None
        in_comment = False
        var_depth = 0
        assert g is not None
        if g.result_token is None:
            return GameError("missing-result", "movetext ended without a result token", source, g.offset)
        fields, notes = normalize_headers(g.tags)
        header_result = fields.pop("header_result")
        result = _RESULT_TOKENS[g.result_token]
        if header_result is not None and header_result is not result:
            notes.append(
                f"Result tag {RESULT_TOKEN_OF[header_result]!r} disagrees with "
                f"movetext {g.result_token!r}; movetext wins"
            )
        if on_note:
            for n in notes:
                on_note(f"{source}:{g.offset} {n}")
        sans = tuple(g.sans)
        return GameRecord(
            game_id=_game_id(fields["white_name"], fields["black_name"], result, fields["date"], sans),
            result=result,
            san_moves=sans,
            source_file=source,
            byte_offset=g.offset,
            **fields,
        )

    for raw_line in stream:
        line_offset = offset
        offset += len(raw_line)
        line = raw_line.decode("latin-1").rstrip("\r\n")

        if state == MOVETEXT and not in_comment and line.startswith("["):
            # New tag section while a game is still open: the game never
            # produced a result token.
            yield finalize()
            state = RECOVER

        if not in_comment and line.startswith("%"):
            continue

        if state in (BETWEEN, RECOVER):
            if not line.strip():
                state = BETWEEN
                continue
            if _TAG_RE.match(line):
                game = _GameBuilder(line_offset)
                state = TAGS
            elif state == BETWEEN:
                yield GameError("bad-movetext-token", f"garbage outside any game: {line[:60]!r}", source, line_offset)
                state = RECOVER
            # RECOVER swallows anything that is not a tag line.
            if state != TAGS:
                continue

        if state == TAGS:
            m = _TAG_RE.match(line)
            if m:
                game.tags[m.group(1)] = _unescape_tag(m.group(2))
                continue
            if not line.strip():
                state = MOVETEXT
                continue
            if line.startswith("["):
                yield GameError("bad-tag-pair", f"malformed tag line: {line[:60]!r}", source, line_offset)
                game = None
                state = RECOVER
                continue
            state = MOVETEXT  # movetext with no separating blank line

        # MOVETEXT: character scan handling comments, variations, tokens.
        err = None
        token_chars: list[str] = []

        def flush() -> str | None:
            """Returns an error kind if the token is unusable."""
            if not token_chars:
                return None
            token = "".join(token_chars)
            token_chars.clear()
            if var_depth > 0:
                return None
            if token in _RESULT_TOKENS:
                game.result_token = token
                return "DONE"
            san = _movetext_san(token)
            if san is None:
                return None
            if not _SAN_RE.match(_strip_glyphs(san)):
                return f"unrecognized movetext token {token[:40]!r}"
            game.sans.append(san)
            return None

        i = 0
        done = False
        while i < len(line):
            ch = line[i]
            if in_comment:
                if ch == "}":
                    in_comment = False
                i += 1
                continue
            if ch == "{":
                err = flush()
                in_comment = True
            elif ch == "(":
                err = flush()
                var_depth += 1
            elif ch == ")":
                err = flush()
                var_depth = max(0, var_depth - 1)
            elif ch == ";":
                err = flush()
                i = len(line)
            elif ch.isspace():
                err = flush()
            else:
                token_chars.append(ch)
            if err == "DONE":
                done = True
                err = None
                break
            if err:
                break
            i += 1
        if not err and not done:
            err = flush()
            if err == "DONE":
                done = True
                err = None

        if err:
            yield GameError("bad-movetext-token", err, source, game.offset)
            game = None
            in_comment = False
            var_depth = 0
            state = RECOVER
        elif done:
            yield finalize()
            state = BETWEEN

    if game is not None:
        if in_comment:
            yield GameError("unterminated-comment", "comment still open at end of input", source, game.offset)
        elif state == MOVETEXT:
            yield finalize()
        else:
            yield GameError("missing-result", "input ended inside a tag section", source, game.offset)


def dedup_key(rec: GameRecord) -> tuple[str, str, str, str]:
    moves_hash = hashlib.sha256(" ".join(rec.san_moves).encode("utf-8")).hexdigest()
    return (normalize_name(rec.white_name), normalize_name(rec.black_name), rec.result.value, moves_hash)


def dedup_games(
    games: Iterable[GameRecord], report: IngestReport | None = None
) -> tuple[Iterator[GameRecord], IngestReport]:
    """First occurrence of each duplicate class wins. The report's kept and
    duplicate counters are final once the returned stream is exhausted."""
    rpt = report if report is not None else IngestReport()

    def gen() -> Iterator[GameRecord]:
        seen: set[tuple[str, str, str, str]] = set()
        for rec in games:
            key = dedup_key(rec)
            if key in seen:
                rpt.duplicates_removed += 1
                continue
            seen.add(key)
            rpt.games_kept += 1
            yield rec

    return gen(), rpt


def ingest(
    sources: Iterable[str | Path | BinaryIO],
    replay_gate: bool = True,
) -> tuple[list[GameRecord], IngestReport]:
    """Parse, replay-validate, and deduplicate games from PGN sources.

    Games whose movetext does not replay as legal chess are excluded and
    counted (parse_failures and illegal_replay_failures). Sources are paths
    or binary file objects, parsed sequentially.
    """
    report = IngestReport()

    def parsed() -> Iterator[GameRecord]:
        for src in sources:
            if isinstance(src, (str, Path)):
                with open(src, "rb") as fh:
                    yield from _gated(fh, str(src))
            else:
                yield from _gated(src, getattr(src, "name", "<stream>"))

    def _gated(fh: BinaryIO, name: str) -> Iterator[GameRecord]:
        for item in parse_pgn_stream(fh, name, on_note=report.note):
            report.games_read += 1
            if isinstance(item, GameError):
                report.parse_failures += 1
                report.note(str(item))
                continue
            if replay_gate:
                try:
                    replay_game(item)
                except ReplayError as exc:
                    report.parse_failures += 1
                    report.illegal_replay_failures += 1
                    report.note(f"{item.source_file}:{item.byte_offset} illegal replay: {exc}")
                    continue
            yield item

    stream, _ = dedup_games(parsed(), report)
    return list(stream), report
