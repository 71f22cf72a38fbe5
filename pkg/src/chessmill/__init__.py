"""Batch chess-corpus pipeline: PGN ingest, position dedup, pooled UCI
evaluation with resumable shards, and deterministic corpus statistics."""

from .board import (
    FenError,
    IllegalMoveError,
    Move,
    MoveKind,
    Position,
    apply_move,
    decode_fen,
    encode_fen,
    initial_position,
    legal_moves,
    perft,
)
from .config import ConfigError, RunConfig, load_config
from .orchestrator import (
    Checkpoint,
    CostEstimate,
    OrchestratorError,
    RunStatus,
    ShardManifest,
    estimate_cost,
    load_manifests,
    make_shards,
    run_shard,
    run_status,
)
from .pgn import GameRecord, IngestReport, ingest, parse_pgn_stream
from .positions import (
    EcoIndex,
    GamePositionTrace,
    PositionSet,
    dedup_positions,
    load_eco,
    trace_game,
)
from .san import (
    ReplayError,
    move_to_san,
    parse_san,
    replay_game,
    replay_san,
)
from .stats import (
    CorpusFilter,
    GameStats,
    StatTable,
    elo_distributions,
    first_move_shares_by_year,
    ply_vs_elodiff,
    render,
    summarize_corpus,
    summarize_game,
    time_series,
    white_performance,
    winrate_vs_elodiff,
)
from .store import (
    CorpusStore,
    ScoreTrajectory,
    StoreError,
    StoreUnreachable,
    white_pov,
)
from .uci import (
    EngineConfig,
    EngineCrashError,
    EngineError,
    EvaluationRecord,
    Score,
    Session,
    parse_info_line,
    records_from_log,
)

__version__ = "0.1.0"
