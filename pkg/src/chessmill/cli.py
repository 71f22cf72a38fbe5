"""Command-line entry point wiring the whole pipeline.

Subcommands: ingest -> positions -> shard -> analyze -> status / stats /
trajectory, plus estimate for batch-cost arithmetic. Every subcommand prints
one machine-parseable `key=value ...` summary line to stdout; diagnostics go
to stderr. Exit codes: 0 success, 1 usage/config error, 2 run failure,
3 store unreachable. All subcommands are re-runnable: ingest dedups, analyze
skips existing records, stats overwrites its outputs deterministically.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .config import ConfigError, RunConfig, load_config
from .orchestrator import (
    OrchestratorError,
    estimate_cost,
    load_manifests,
    make_shards,
    run_shard,
    run_status,
)
from .pgn import ingest
from .positions import (
    EcoIndex,
    WorkloadWriteError,
    dedup_positions,
    load_eco,
    trace_game,
)
from .san import ReplayError
from .stats import (
    CorpusFilter,
    StatsError,
    elo_distributions,
    first_move_shares_by_year,
    ply_vs_elodiff,
    render,
    summarize_corpus,
    time_series,
    white_performance,
    winrate_vs_elodiff,
)
from .store import CorpusStore, StoreError, StoreUnreachable
from .uci import EngineConfig, EngineError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUN_FAILURE = 2
EXIT_STORE_UNREACHABLE = 3


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1 in this tool, not argparse's default 2
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _err(message: str) -> None:
    print(f"chessmill: {message}", file=sys.stderr)


def _summary(**kv) -> None:
    print(" ".join(f"{key}={value}" for key, value in kv.items()))
    sys.stdout.flush()


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="INI config file")
    common.add_argument("--pgn", action="append", metavar="FILE",
                        help="PGN input (repeatable)")
    common.add_argument("--eco", metavar="FILE", help="opening table (TSV)")
    common.add_argument("--store", metavar="DIR", help="store directory")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--workload", metavar="FILE", help="workload FEN file")
    common.add_argument("--manifests", metavar="DIR", help="shard state directory")
    common.add_argument("--engine", metavar="CMD", help="UCI engine command")
    common.add_argument("--depth", type=int, help="target search depth")
    common.add_argument("--multipv", type=int, help="lines per position")
    common.add_argument("--position-timeout", type=float, dest="position_timeout",
                        metavar="SECS", help="per-position engine budget")
    common.add_argument("--shard-size", type=int, dest="shard_size")
    common.add_argument("--pool-size", type=int, dest="pool_size")
    common.add_argument("--retry-limit", type=int, dest="retry_limit")
    common.add_argument("--key-fields", type=int, dest="key_fields",
                        choices=(4, 6), help="FEN fields for position dedup")
    common.add_argument("--bin-width", type=int, dest="bin_width")
    common.add_argument("--top-k", type=int, dest="top_k")
    common.add_argument("--plot", action="store_const", const=True,
                        help="also render SVG plots")
    common.add_argument("--require-elos", action="store_const", const=True,
                        dest="require_elos")
    common.add_argument("--year-min", type=int, dest="year_min")
    common.add_argument("--year-max", type=int, dest="year_max")
    common.add_argument("--min-ply", type=int, dest="min_ply")
    common.add_argument("--require-result", action="store_const", const=True,
                        dest="require_result")

    parser = _Parser(prog="chessmill",
                     description="PGN corpora to engine evaluations to "
                                 "corpus statistics.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.add_parser("ingest", parents=[common],
                   help="parse PGN files into the store")
    sub.add_parser("positions", parents=[common],
                   help="extract, theory-filter, and dedup positions")
    sub.add_parser("shard", parents=[common],
                   help="split the workload into shard manifests")
    sub.add_parser("analyze", parents=[common],
                   help="evaluate shards with an engine pool")
    sub.add_parser("status", parents=[common], help="aggregate shard progress")
    sub.add_parser("stats", parents=[common],
                   help="compute corpus statistics from the store")
    traj = sub.add_parser("trajectory", parents=[common],
                          help="score curve of one game")
    traj.add_argument("game_id", metavar="GAME_ID")
    est = sub.add_parser("estimate", parents=[common],
                         help="batch cost arithmetic")
    est.add_argument("n_positions", type=float)
    est.add_argument("secs_per_position", type=float)
    est.add_argument("n_cores", type=int)
    return parser


_CONFIG_FLAGS = (
    "pgn", "eco", "store", "out", "workload", "manifests", "engine", "depth",
    "multipv", "position_timeout", "shard_size", "pool_size", "retry_limit",
    "key_fields", "bin_width", "top_k", "plot", "require_elos", "year_min",
    "year_max", "min_ply", "require_result",
)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS}
    return load_config(args.config, overrides=overrides)


def _engine_config(cfg: RunConfig) -> EngineConfig:
    if not cfg.engine:
        raise _UsageError("no engine configured (use --engine or [engine] binary)")
    return EngineConfig(
        binary=cfg.engine,
        target_depth=cfg.depth,
        multipv=cfg.multipv,
        position_timeout=cfg.position_timeout,
    )


def _filter(cfg: RunConfig) -> CorpusFilter:
    return CorpusFilter(
        require_elos=cfg.require_elos,
        year_min=cfg.year_min,
        year_max=cfg.year_max,
        min_ply=cfg.min_ply,
        require_result=cfg.require_result,
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_ingest(cfg: RunConfig) -> int:
    if not cfg.pgn:
        raise _UsageError("ingest needs at least one --pgn file")
    games, report = ingest(cfg.pgn)
    for diag in report.diagnostics[:20]:
        _err(str(diag))
    if len(report.diagnostics) > 20:
        _err(f"... {len(report.diagnostics) - 20} more diagnostics")
    with CorpusStore(cfg.store) as store:
        stored = store.put_games(games)
        total = store.game_count()
    _summary(
        games_read=report.games_read,
        games_kept=report.games_kept,
        duplicates_removed=report.duplicates_removed,
        parse_failures=report.parse_failures,
        illegal_replay_failures=report.illegal_replay_failures,
        stored=stored,
        store_games=total,
    )
    return EXIT_OK


def _cmd_positions(cfg: RunConfig) -> int:
    eco = EcoIndex.empty()
    eco_errors = []
    if cfg.eco:
        eco = load_eco(cfg.eco, on_error=eco_errors.append)
        for exc in eco_errors[:10]:
            _err(str(exc))
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    workload = cfg.workload_path()
    snapshot = out_dir / "positions.snapshot"
    with CorpusStore.open(cfg.store) as store:
        traces = []
        for game in store.iter_games():
            trace = trace_game(game, eco)
            store.put_trace(trace)
            traces.append(trace)
        positions = dedup_positions(traces, out=workload,
                                    key_fields=cfg.key_fields)
        positions.save(snapshot)
    theory_points = sum(
        sum(1 for p in t.points if p.theory) for t in traces
    )
    _summary(
        games=len(traces),
        positions_seen=positions.total_seen_count,
        positions_unique=positions.unique_count,
        theory_excluded=theory_points,
        key_fields=cfg.key_fields,
        workload=workload,
        snapshot=snapshot,
    )
    return EXIT_OK


def _cmd_shard(cfg: RunConfig) -> int:
    workload = cfg.workload_path()
    if not workload.exists():
        raise _UsageError(f"workload file {workload} does not exist")
    state_dir = cfg.manifest_dir()
    state_dir.mkdir(parents=True, exist_ok=True)
    shards = make_shards(workload, cfg.shard_size)
    for shard in shards:
        shard.save(state_dir)
    _summary(
        shards=len(shards),
        positions=sum(s.size() for s in shards),
        shard_size=cfg.shard_size,
        manifest_dir=state_dir,
    )
    return EXIT_OK


def _contiguous_cover(manifests, line_count: int) -> bool:
    pos = 0
    for m in sorted(manifests, key=lambda m: m.start):
        if m.start != pos:
            return False
        pos = m.end
    return pos == line_count


def _resolve_shards(cfg: RunConfig):
    """Manifests to run: whatever is on disk if it covers the workload,
    otherwise the deterministic make_shards layout with any already-saved
    manifest (e.g. from a run killed mid-creation) slotted back in."""
    state_dir = cfg.manifest_dir()
    existing = load_manifests(state_dir) if state_dir.exists() else []
    workload = cfg.workload_path()
    if not workload.exists():
        if existing:
            return existing, state_dir
        raise _UsageError(f"no shard manifests and no workload at {workload}")
    planned = make_shards(workload, cfg.shard_size)
    lines = sum(s.size() for s in planned)
    if existing and _contiguous_cover(existing, lines):
        return existing, state_dir
    by_id = {m.shard_id: m for m in existing}
    strays = set(by_id) - {s.shard_id for s in planned}
    if strays:
        raise _UsageError(
            f"manifests in {state_dir} do not match the workload layout"
            f" ({sorted(strays)[0]} ...); rerun shard or clear the directory"
        )
    state_dir.mkdir(parents=True, exist_ok=True)
    manifests = []
    for shard in planned:
        have = by_id.get(shard.shard_id)
        if have is None:
            shard.save(state_dir)
            have = shard
        manifests.append(have)
    return manifests, state_dir


def _cmd_analyze(cfg: RunConfig) -> int:
    engine_cfg = _engine_config(cfg)
    manifests, state_dir = _resolve_shards(cfg)
    with CorpusStore(cfg.store) as store:
        done = []
        for shard in manifests:
            done.append(
                run_shard(shard, pool_size=cfg.pool_size, store=store,
                          cfg=engine_cfg, state_dir=state_dir,
                          retry_limit=cfg.retry_limit)
            )
        records = store.evaluation_count()
    failed_shards = sum(m.status == "failed" for m in done)
    _summary(
        shards=len(done),
        shards_done=sum(m.status == "done" for m in done),
        shards_failed=failed_shards,
        evaluated=sum(m.evaluated for m in done),
        skipped_existing=sum(m.skipped_existing for m in done),
        failed_positions=sum(m.failed_positions for m in done),
        store_records=records,
    )
    return EXIT_RUN_FAILURE if failed_shards else EXIT_OK


def _cmd_status(cfg: RunConfig) -> int:
    state_dir = cfg.manifest_dir()
    manifests = load_manifests(state_dir) if state_dir.exists() else []
    print(run_status(manifests).as_line())
    return EXIT_OK


def _cmd_stats(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out) / "stats"
    filt = _filter(cfg)
    formats = ("csv", "svg") if cfg.plot else ("csv",)
    with CorpusStore.open(cfg.store) as store:
        games = list(store.iter_games())
    replay_failures = []
    summaries = summarize_corpus(
        games, on_error=lambda gid, exc: replay_failures.append(gid)
    )
    for gid in replay_failures[:10]:
        _err(f"replay failed for stored game {gid}")
    tables = []
    tables.extend(elo_distributions(summaries, filt, bin_width=cfg.bin_width))
    tables.append(ply_vs_elodiff(summaries, filt, bin_width=cfg.bin_width))
    tables.append(winrate_vs_elodiff(summaries, filt, bin_width=cfg.bin_width))
    tables.extend(white_performance(summaries, filt))
    tables.append(first_move_shares_by_year(summaries, filt, top_k=cfg.top_k))
    tables.extend(time_series(summaries, filt).values())
    written = []
    for table in tables:
        table.provenance["config"] = cfg.echo()
        written.extend(render(table, out_dir, formats=formats))
    _summary(
        games=len(games),
        summarized=len(summaries),
        replay_failures=len(replay_failures),
        tables=len(tables),
        files=len(written),
        out=out_dir,
    )
    return EXIT_OK


def _cmd_trajectory(cfg: RunConfig, game_id: str) -> int:
    with CorpusStore.open(cfg.store) as store:
        identities = store.engine_identities()
        if not identities:
            _err("store holds no evaluations; run analyze first")
            return EXIT_RUN_FAILURE
        if len(identities) > 1 and cfg.engine:
            # the engine command doubles as a disambiguator against the
            # stored "name version" identity
            wanted = cfg.engine.lower()
            identities = [
                ident for ident in identities
                if wanted in f"{ident[0]} {ident[1]}".lower()
            ]
        if len(identities) != 1:
            listing = ", ".join(f"{n} {v} depth {d}" for n, v, d in
                                store.engine_identities())
            _err(f"cannot pick an engine identity from: {listing or 'none'};"
                 f" narrow with --engine NAME")
            return EXIT_RUN_FAILURE
        name, version, depth = identities[0]
        trajectory = store.score_trajectory(game_id, name, version, depth)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"trajectory-{game_id[:16]}.csv"
    lines = ["ply,score_kind,score_value,theory"]
    for point in trajectory.points:
        if point.score is None:
            kind = value = ""
        elif point.score.cp is not None:
            kind, value = "cp", point.score.cp
        else:
            kind, value = "mate", point.score.mate_in
        lines.append(f"{point.ply},{kind},{value},{int(point.theory)}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _summary(
        game_id=game_id,
        engine=f"{name}-{version}",
        depth=depth,
        plies=len(trajectory.points),
        scored=trajectory.scored_count(),
        csv=csv_path,
    )
    return EXIT_OK


def _cmd_estimate(n_positions: float, secs_per_position: float,
                  n_cores: int) -> int:
    est = estimate_cost(n_positions, secs_per_position, n_cores)
    print(est.human())
    _summary(
        n_positions=f"{est.n_positions:g}",
        secs_per_position=f"{est.secs_per_position:g}",
        n_cores=est.n_cores,
        total_core_seconds=f"{est.total_core_seconds:g}",
        hours=f"{est.hours:g}",
        days=f"{est.days:g}",
        years=f"{est.years:.1f}",
        wall_seconds=f"{est.wall_seconds:g}",
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# dispatch


def dispatch(argv: Sequence[str]) -> int:
    parser = _build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # argparse --help exits itself
            return int(exc.code or 0)
        if not args.command:
            parser.print_usage(sys.stderr)
            _err("a subcommand is required")
            return EXIT_USAGE
        if args.command == "estimate":
            return _cmd_estimate(args.n_positions, args.secs_per_position,
                                 args.n_cores)
        cfg = _config_from_args(args)
        if args.command == "ingest":
            return _cmd_ingest(cfg)
        if args.command == "positions":
            return _cmd_positions(cfg)
        if args.command == "shard":
            return _cmd_shard(cfg)
        if args.command == "analyze":
            return _cmd_analyze(cfg)
        if args.command == "status":
            return _cmd_status(cfg)
        if args.command == "stats":
            return _cmd_stats(cfg)
        if args.command == "trajectory":
            return _cmd_trajectory(cfg, args.game_id)
        raise AssertionError(f"unrouted command {args.command}")
    except (_UsageError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except StoreUnreachable as exc:
        _err(str(exc))
        return EXIT_STORE_UNREACHABLE
    except (OrchestratorError, EngineError, StoreError, StatsError,
            ReplayError, WorkloadWriteError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_RUN_FAILURE


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
