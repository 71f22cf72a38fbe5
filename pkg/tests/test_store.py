"""Store tests: keyed idempotent evaluation writes, game round trips, the
score-trajectory query with white-POV normalization, CSV export, and
integrity checks."""

import csv
import random
from pathlib import Path

import pytest

from chessmill.pgn import GameRecord, PartialDate, Result
from chessmill.positions import GamePositionTrace, TracePoint
from chessmill.san import replay_san
from chessmill.store import (
    CorpusStore,
    ScoreTrajectory,
    StoreUnreachable,
    TrajectoryPoint,
    UnknownGameError,
    white_pov,
)
from chessmill.uci import EvaluationRecord, Score

MINIATURE = ("e4", "f6", "d4", "g5", "Qh5#")


def make_game(**overrides) -> GameRecord:
    base = dict(
        game_id="g-" + str(overrides.get("seq", 0)).zfill(4),
        white_name="klip, hans",
        black_name="bottema, sierk",
        result=Result.WHITE_WIN,
        san_moves=MINIATURE,
        event="Dieren op",
        site="Dieren",
        date=PartialDate(1990, 7, None),
        white_elo=2305,
        black_elo=2205,
        eco_code="B00",
        source_file="fixtures.pgn",
        byte_offset=17,
    )
    base.pop("seq", None)
    overrides.pop("seq", None)
    base.update(overrides)
    return GameRecord(**base)


def make_eval(fen: str, *, depth: int = 20, rank: int = 1,
              score: Score = Score(cp=34), engine: str = "MockEngine",
              version: str = "1.3", pv: tuple = ("e2e4",),
              terminal: bool = False) -> EvaluationRecord:
    return EvaluationRecord(
        fen=fen,
        engine_name=engine,
        engine_version=version,
        depth=depth,
        multipv_rank=rank,
        score=score,
        pv=pv,
        raw_log=f"position fen {fen}\ngo depth {depth}\nbestmove x\n",
        nodes=1234,
        wall_time=0.5,
        produced_at=1700000000.0,
        terminal=terminal,
    )


@pytest.fixture
def store(tmp_path):
    with CorpusStore(tmp_path / "store") as st:
        yield st


# ---------------------------------------------------------------------------
# games


def test_game_round_trip_field_wise(store):
    game = make_game()
    assert store.put_game(game)
    assert store.get_game(game.game_id) == game


def test_game_round_trip_with_absent_optionals(store):
    game = make_game(event=None, site=None, round=None, date=None,
                     white_elo=None, black_elo=None, eco_code=None)
    store.put_game(game)
    assert store.get_game(game.game_id) == game


def test_duplicate_game_id_is_rejected_without_change(store):
    game = make_game()
    assert store.put_game(game)
    assert not store.put_game(game)
    assert store.game_count() == 1


def test_iter_games_preserves_insertion_order(store):
    games = [make_game(game_id=f"g-{i:04d}") for i in range(7)]
    assert store.put_games(games) == 7
    assert [g.game_id for g in store.iter_games()] == [g.game_id for g in games]


def test_store_survives_reopen(tmp_path):
    root = tmp_path / "store"
    with CorpusStore(root) as st:
        st.put_game(make_game())
        st.put_evaluation(make_eval("8/8/8/8/8/8/8/K6k w - - 0 1"))
    with CorpusStore.open(root) as st:
        assert st.game_count() == 1
        assert st.evaluation_count() == 1


def test_open_missing_store_is_unreachable(tmp_path):
    with pytest.raises(StoreUnreachable):
        CorpusStore.open(tmp_path / "nowhere")


# ---------------------------------------------------------------------------
# evaluations


def test_evaluation_round_trip_field_wise(store):
    rec = make_eval("8/8/8/8/8/8/8/K6k w - - 0 1", score=Score(mate_in=-3),
                    pv=("a1a2", "h1h2"))
    assert store.put_evaluation(rec) == "inserted"
    back = store.get_evaluation(rec.fen, "MockEngine", "1.3", 20, 1)
    assert back == rec


def test_put_evaluation_is_idempotent(store):
    rec = make_eval("8/8/8/8/8/8/8/K6k w - - 0 1")
    assert store.put_evaluation(rec) == "inserted"
    assert store.put_evaluation(rec) == "already_present"
    assert store.evaluation_count() == 1


def test_same_fen_different_depth_are_distinct_keys(store):
    fen = "8/8/8/8/8/8/8/K6k w - - 0 1"
    assert store.put_evaluation(make_eval(fen, depth=20)) == "inserted"
    assert store.put_evaluation(make_eval(fen, depth=12)) == "inserted"
    assert store.evaluation_count() == 2


def test_terminal_evaluation_round_trip(store):
    rec = make_eval("7k/5Q2/6K1/8/8/8/8/8 b - - 0 1", depth=0,
                    score=Score(cp=0), pv=(), terminal=True)
    store.put_evaluation(rec)
    back = store.get_evaluation(rec.fen, "MockEngine", "1.3", 0, 1)
    assert back.terminal and back.pv == () and back.score == Score(cp=0)


def test_thousand_inserts_all_retrievable_by_brute_force(store):
    rng = random.Random(42)
    recs = []
    for i in range(1000):
        fen = f"8/8/8/8/8/8/{i % 8}k{7 - i % 8}/K7 w - - 0 {i + 1}"
        depth = rng.choice((12, 20))
        rank = rng.choice((1, 2))
        recs.append(make_eval(fen, depth=depth, rank=rank,
                              score=Score(cp=rng.randint(-300, 300)),
                              pv=("a1a2", "h2h3")))
    inserted, present = store.put_evaluations(recs)
    unique_keys = {(r.fen, r.engine_name, r.engine_version, r.depth, r.multipv_rank)
                   for r in recs}
    assert inserted == len(unique_keys)
    assert inserted + present == 1000
    assert store.evaluation_count() == len(unique_keys)
    by_key = {}
    for r in recs:
        by_key.setdefault(
            (r.fen, r.engine_name, r.engine_version, r.depth, r.multipv_rank), r
        )
    for key, rec in by_key.items():
        assert store.get_evaluation(*key[:2], key[2], key[3], key[4]) == rec


def test_has_evaluation_tracks_puts(store):
    fen = "8/8/8/8/8/8/8/K6k w - - 0 1"
    assert not store.has_evaluation(fen, "MockEngine", "1.3", 20, 1)
    store.put_evaluation(make_eval(fen))
    assert store.has_evaluation(fen, "MockEngine", "1.3", 20, 1)
    assert not store.has_evaluation(fen, "MockEngine", "1.3", 21, 1)


# ---------------------------------------------------------------------------
# white-POV normalization


def test_white_pov_flips_black_to_move_scores():
    assert white_pov(Score(cp=-50), "b") == Score(cp=50)
    assert white_pov(Score(cp=-50), "w") == Score(cp=-50)
    assert white_pov(Score(mate_in=2), "b") == Score(mate_in=-2)


def test_white_pov_is_idempotent_once_applied():
    for score in (Score(cp=77), Score(cp=-3), Score(mate_in=4), Score(mate_in=-1)):
        for side in "wb":
            once = white_pov(score, side)
            assert white_pov(once, "w") == once


# ---------------------------------------------------------------------------
# score trajectory


def _seed_traced_game(store, theory_plies: int = 2):
    game = make_game()
    store.put_game(game)
    steps = replay_san(list(MINIATURE))
    trace = GamePositionTrace(
        game_id=game.game_id,
        points=tuple(
            TracePoint(ply=s.ply, fen=s.fen, theory=s.ply <= theory_plies)
            for s in steps
        ),
    )
    store.put_trace(trace)
    return game, steps


def test_trajectory_normalizes_to_constant_white_advantage(store):
    game, steps = _seed_traced_game(store, theory_plies=0)
    # Scripted engine: +50 from white-to-move positions, -50 from black's.
    for step in steps:
        side = step.fen.split()[1]
        store.put_evaluation(
            make_eval(step.fen, score=Score(cp=50 if side == "w" else -50),
                      pv=("a2a3",))
        )
    traj = store.score_trajectory(game.game_id, "MockEngine", "1.3", 20)
    assert [p.ply for p in traj.points] == [1, 2, 3, 4, 5]
    assert all(p.score == Score(cp=50) for p in traj.points)


def test_trajectory_theory_plies_have_no_scores(store):
    game, steps = _seed_traced_game(store, theory_plies=2)
    for step in steps[2:]:
        store.put_evaluation(make_eval(step.fen, score=Score(cp=10), pv=("a2a3",)))
    traj = store.score_trajectory(game.game_id, "MockEngine", "1.3", 20)
    assert [p.theory for p in traj.points] == [True, True, False, False, False]
    assert [p.score is None for p in traj.points] == [True, True, False, False, False]
    assert traj.scored_count() == 3


def test_trajectory_fens_agree_with_replay(store):
    game, steps = _seed_traced_game(store)
    rows = store._conn.execute(
        "SELECT fen FROM game_positions WHERE game_id=? ORDER BY ply_index",
        (game.game_id,),
    ).fetchall()
    assert [r[0] for r in rows] == [s.fen for s in steps]


def test_trajectory_unknown_game_raises(store):
    with pytest.raises(UnknownGameError):
        store.score_trajectory("no-such-game", "MockEngine", "1.3", 20)


def test_trajectory_requires_increasing_plies():
    with pytest.raises(ValueError):
        ScoreTrajectory(game_id="g", points=(
            TrajectoryPoint(ply=2, score=None, theory=False),
            TrajectoryPoint(ply=1, score=None, theory=False),
        ))


# ---------------------------------------------------------------------------
# export and integrity


def test_export_csv_round_trips_and_is_deterministic(store, tmp_path):
    fens = [f"8/8/8/8/8/8/8/K5k{'1' if i % 2 else ''} w - - 0 {i + 1}"
            for i in range(5)]
    for i, fen in enumerate(fens):
        store.put_evaluation(make_eval(fen, score=Score(cp=i * 10 - 20),
                                       pv=("a1a2",)))
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert store.export_evaluations_csv(out1) == 5
    assert store.export_evaluations_csv(out2) == 5
    assert out1.read_bytes() == out2.read_bytes()
    with open(out1, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["fen", "engine", "depth", "rank", "score_kind",
                       "score_value", "pv", "nodes", "wall_ms"]
    assert len(rows) == 6
    assert {r[4] for r in rows[1:]} == {"cp"}
    assert sorted(int(r[5]) for r in rows[1:]) == [-20, -10, 0, 10, 20]


def test_verify_integrity_clean_store(store):
    store.put_game(make_game())
    store.put_evaluation(make_eval("8/8/8/8/8/8/8/K6k w - - 0 1"))
    assert store.verify_integrity() == []


def test_verify_integrity_reports_missing_log_blob(store):
    rec = make_eval("8/8/8/8/8/8/8/K6k w - - 0 1")
    store.put_evaluation(rec)
    for path in (store.log_dir).rglob("*.log.gz"):
        path.unlink()
    problems = store.verify_integrity()
    assert problems and "raw log" in problems[0]
