from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from chessmill.pgn import (
    GameError,
    GameRecord,
    IngestReport,
    PartialDate,
    Result,
    dedup_games,
    dedup_key,
    ingest,
    normalize_headers,
    normalize_name,
    parse_pgn_stream,
)

FIXTURES = Path(__file__).parent / "fixtures" / "games"

ONE_GAME = b"""\
[Event "Dieren op"]
[Date "1990.07.??"]
[White "Klip, Hans"]
[Black "Bottema, Sierk"]
[Result "1-0"]
[WhiteElo "2305"]
[BlackElo "2205"]

1. e4 f6 2. d4 g5 3. Qh5# 1-0
"""


def records(data: bytes):
    return [x for x in parse_pgn_stream(data) if isinstance(x, GameRecord)]


def errors(data: bytes):
    return [x for x in parse_pgn_stream(data) if isinstance(x, GameError)]


def test_parse_single_game():
    out = list(parse_pgn_stream(ONE_GAME, source="one.pgn"))
    assert len(out) == 1
    rec = out[0]
    assert isinstance(rec, GameRecord)
    assert rec.san_moves == ("e4", "f6", "d4", "g5", "Qh5#")
    assert rec.result is Result.WHITE_WIN
    assert rec.white_name == "Klip, Hans"
    assert rec.white_elo == 2305 and rec.black_elo == 2205
    assert rec.date == PartialDate(1990, 7, None)
    assert rec.source_file == "one.pgn"
    assert rec.byte_offset == 0
    assert rec.ply_count() == 5


def test_parse_empty_input():
    assert list(parse_pgn_stream(b"")) == []
    assert list(parse_pgn_stream(b"\n\n\n")) == []


def test_parse_miniatures_fixture():
    with open(FIXTURES / "miniatures.pgn", "rb") as fh:
        out = list(parse_pgn_stream(fh, source="miniatures.pgn"))
    assert [type(x) for x in out] == [GameRecord] * 3
    assert [len(r.san_moves) for r in out] == [5, 7, 8]
    assert [r.result for r in out] == [Result.WHITE_WIN, Result.WHITE_WIN, Result.BLACK_WIN]
    assert out[2].eco_code == "A02"
    # offsets point at each game's first tag line
    raw = (FIXTURES / "miniatures.pgn").read_bytes()
    for rec in out:
        assert raw[rec.byte_offset : rec.byte_offset + 1] == b"["


def test_garbage_block_between_games_yields_one_error():
    data = ONE_GAME + b"\nthis is not chess\nstill not chess\n\n" + ONE_GAME.replace(b"Klip", b"Xlip") + b"\n" + ONE_GAME.replace(b"Klip", b"Ylip")
    out = list(parse_pgn_stream(data))
    recs = [x for x in out if isinstance(x, GameRecord)]
    errs = [x for x in out if isinstance(x, GameError)]
    assert len(recs) == 3
    assert len(errs) == 1
    assert errs[0].kind == "bad-movetext-token"


def test_comments_variations_and_nags_are_discarded():
    data = b"""\
[White "A"]
[Black "B"]
[Result "*"]

1. e4 {king's pawn
still the same comment} e5 $14 2. Nf3 (2. f4 {gambit} exf4) 2... Nc6 *
"""
    (rec,) = records(data)
    assert rec.san_moves == ("e4", "e5", "Nf3", "Nc6")
    assert rec.result is Result.UNKNOWN


def test_comment_glued_to_tokens():
    data = b'[White "A"]\n[Black "B"]\n[Result "1-0"]\n\n1.e4{x}e5 2.d4 1-0\n'
    (rec,) = records(data)
    assert rec.san_moves == ("e4", "e5", "d4")


def test_zero_spelled_castling_survives():
    data = b'[White "A"]\n[Black "B"]\n[Result "*"]\n\n1. e4 e5 2. Nf3 Nf6 3. Bc4 Bc5 4. 0-0 0-0 *\n'
    (rec,) = records(data)
    assert rec.san_moves[-2:] == ("0-0", "0-0")


def test_semicolon_comment_runs_to_end_of_line():
    data = b'[White "A"]\n[Black "B"]\n[Result "*"]\n\n1. e4 ; best by test\ne5 *\n'
    (rec,) = records(data)
    assert rec.san_moves == ("e4", "e5")


def test_bad_tag_pair_error():
    data = b'[White "A"]\n[Black broken\n[Result "*"]\n\n*\n'
    out = list(parse_pgn_stream(data))
    assert any(isinstance(x, GameError) and x.kind == "bad-tag-pair" for x in out)


def test_bad_movetext_token_error():
    data = b'[White "A"]\n[Black "B"]\n[Result "1-0"]\n\n1. e4 Qxx9 2. d4 1-0\n'
    (err,) = errors(data)
    assert err.kind == "bad-movetext-token"
    assert records(data) == []


def test_unterminated_comment_error():
    data = b'[White "A"]\n[Black "B"]\n[Result "1-0"]\n\n1. e4 {never closed\n'
    (err,) = errors(data)
    assert err.kind == "unterminated-comment"


def test_missing_result_when_next_game_begins():
    data = (
        b'[White "A"]\n[Black "B"]\n[Result "1-0"]\n\n1. e4 e5\n\n'
        b'[White "C"]\n[Black "D"]\n[Result "0-1"]\n\n1. d4 d5 0-1\n'
    )
    out = list(parse_pgn_stream(data))
    errs = [x for x in out if isinstance(x, GameError)]
    recs = [x for x in out if isinstance(x, GameRecord)]
    assert [e.kind for e in errs] == ["missing-result"]
    assert len(recs) == 1
    assert recs[0].white_name == "C"


def test_missing_result_at_eof():
    data = b'[White "A"]\n[Black "B"]\n\n1. e4 e5\n'
    (err,) = errors(data)
    assert err.kind == "missing-result"


def test_empty_movetext_game_is_kept():
    data = b'[White "A"]\n[Black "B"]\n[Result "*"]\n\n*\n'
    (rec,) = records(data)
    assert rec.san_moves == ()
    assert rec.ply_count() == 0


def test_result_tag_movetext_disagreement_prefers_movetext():
    notes = []
    data = b'[White "A"]\n[Black "B"]\n[Result "0-1"]\n\n1. e4 1-0\n'
    (rec,) = [x for x in parse_pgn_stream(data, on_note=notes.append) if isinstance(x, GameRecord)]
    assert rec.result is Result.WHITE_WIN
    assert any("disagrees" in n for n in notes)


def test_normalize_headers_values():
    fields, notes = normalize_headers(
        {
            "Event": "?",
            "Date": "1990.??.??",
            "White": "Klip, Hans",
            "Black": "Bottema, Sierk",
            "WhiteElo": "2305",
            "BlackElo": "-",
            "ECO": "B00",
            "Result": "1-0",
        }
    )
    assert fields["event"] is None
    assert fields["date"] == PartialDate(1990, None, None)
    assert fields["white_elo"] == 2305
    assert fields["black_elo"] is None
    assert fields["eco_code"] == "B00"
    assert fields["header_result"] is Result.WHITE_WIN
    assert notes == []


def test_normalize_headers_bad_values_become_absent_with_notes():
    fields, notes = normalize_headers(
        {
            "White": "A",
            "Black": "B",
            "Date": "sometime in june",
            "WhiteElo": "9999",
            "BlackElo": "weak",
            "ECO": "Z99",
        }
    )
    assert fields["date"] is None
    assert fields["white_elo"] is None and fields["black_elo"] is None
    assert fields["eco_code"] is None
    assert len(notes) == 4


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Kasparov, Garry", "kasparov, garry"),
        ("KASPAROV,   Garry ", "kasparov, garry"),
        ("Kasparov, Garry (GM)", "kasparov, garry"),
        ("Smith, John IM", "smith, john"),
        ("Smith, John  (wgm)", "smith, john"),
        ("Carlsen", "carlsen"),
    ],
)
def test_normalize_name(raw, expected):
    assert normalize_name(raw) == expected


def _rec(white, black, result, sans, rid="x"):
    return GameRecord(
        game_id=rid,
        white_name=white,
        black_name=black,
        result=result,
        san_moves=tuple(sans),
    )


def _naive_first_occurrences(recs):
    """Independent dedup oracle: pairwise comparison on raw key content."""
    kept = []
    for r in recs:
        key = (normalize_name(r.white_name), normalize_name(r.black_name), r.result, r.san_moves)
        if not any(
            key == (normalize_name(k.white_name), normalize_name(k.black_name), k.result, k.san_moves)
            for k in kept
        ):
            kept.append(r)
    return kept


def test_dedup_hundred_games_with_seventeen_duplicates():
    base = [
        _rec(f"Player {i}", f"Player {i + 1}", Result.WHITE_WIN, ["e4", "e5", f"a{1 + i % 4}"], rid=str(i))
        for i in range(83)
    ]
    dups = []
    for i in range(17):
        src = base[(i * 5) % 83]
        dups.append(
            _rec(
                src.white_name.upper() + " (GM)",
                "  " + src.black_name,
                src.result,
                src.san_moves,
                rid=f"dup{i}",
            )
        )
    corpus = base[:40] + dups[:9] + base[40:] + dups[9:]
    assert len(corpus) == 100

    stream, report = dedup_games(iter(corpus))
    kept = list(stream)
    oracle = _naive_first_occurrences(corpus)
    assert len(kept) == len(oracle) == 83
    assert [r.game_id for r in kept] == [r.game_id for r in oracle]
    assert report.games_kept == 83
    assert report.duplicates_removed == 17


def test_dedup_is_idempotent():
    recs = [_rec("A", "B", Result.DRAW, ["e4", "e5"])] * 3 + [_rec("C", "D", Result.DRAW, ["d4"])]
    once, r1 = dedup_games(iter(recs))
    kept = list(once)
    twice, r2 = dedup_games(iter(kept))
    assert list(twice) == kept
    assert r1.duplicates_removed == 2
    assert r2.duplicates_removed == 0


def test_dedup_key_distinguishes_same_players_different_moves():
    a = _rec("A", "B", Result.DRAW, ["e4", "e5"])
    b = _rec("A", "B", Result.DRAW, ["d4", "d5"])
    assert dedup_key(a) != dedup_key(b)


def test_ingest_replay_gate_excludes_illegal_games(tmp_path):
    path = tmp_path / "mixed.pgn"
    path.write_bytes(
        ONE_GAME
        + b"\n"
        + b'[White "A"]\n[Black "B"]\n[Result "1-0"]\n\n1. e4 e5 2. Ke3 1-0\n'
    )
    kept, report = ingest([path])
    assert len(kept) == 1
    assert report.games_read == 2
    assert report.games_kept == 1
    assert report.parse_failures == 1
    assert report.illegal_replay_failures == 1
    assert report.games_kept + report.duplicates_removed + report.parse_failures == report.games_read
    assert any("illegal replay" in d for d in report.diagnostics)


def test_ingest_deduplicates_across_files(tmp_path):
    p1 = tmp_path / "a.pgn"
    p2 = tmp_path / "b.pgn"
    p1.write_bytes(ONE_GAME)
    p2.write_bytes(ONE_GAME)
    kept, report = ingest([p1, p2])
    assert len(kept) == 1
    assert report.duplicates_removed == 1
    assert kept[0].source_file == str(p1)


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=600))
def test_parser_totality_on_arbitrary_bytes(data):
    """Any byte stream parses to completion and the report identity holds."""
    kept, report = ingest([__import__("io").BytesIO(data)], replay_gate=False)
    assert report.games_kept + report.duplicates_removed + report.parse_failures == report.games_read
    assert report.games_kept == len(kept)
