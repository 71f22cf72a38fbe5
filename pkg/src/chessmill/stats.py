"""Corpus statistics: per-game summaries, histogram/series tables, rendering.

Every operation is a pure aggregation over immutable per-game summaries, so
identical inputs produce identical tables (and byte-identical CSVs). Games
missing a field a statistic requires are excluded from that statistic only;
exclusion counts land in the table's provenance.
"""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .pgn import GameRecord, Result
from .san import ReplayError, replay_game

PIECE_KINDS = ("P", "N", "B", "R", "Q", "K")


class StatsError(Exception):
    pass


# ---------------------------------------------------------------------------
# per-game summaries


@dataclass(frozen=True, slots=True)
class GameStats:
    """Board-derived and header-derived facts of one game, computed once by
    a full replay and shared by every statistic."""

    game_id: str
    white_elo: Optional[int]
    black_elo: Optional[int]
    result: Result
    year: Optional[int]
    ply_count: int
    first_san: Optional[str]
    ends_in_checkmate: bool
    captures: int
    promotions: int
    castled_kingside: int
    castled_queenside: int
    piece_moves: tuple[int, int, int, int, int, int]  # PIECE_KINDS order

    def elo_diff(self) -> Optional[int]:
        if self.white_elo is None or self.black_elo is None:
            return None
        return abs(self.white_elo - self.black_elo)

    def capture_ratio(self) -> Optional[float]:
        if self.ply_count == 0:
            return None
        return self.captures / self.ply_count


def summarize_game(game: GameRecord) -> GameStats:
    steps = replay_game(game)
    captures = promotions = ks = qs = 0
    piece_counts = dict.fromkeys(PIECE_KINDS, 0)
    mate = False
    for step in steps:
        kind = step.kind
        piece_counts[kind.moved_piece] += 1
        captures += kind.is_capture
        promotions += kind.is_promotion
        ks += kind.is_castle_kingside
        qs += kind.is_castle_queenside
        mate = kind.gives_checkmate
    first = game.san_moves[0] if game.san_moves else None
    if first:
        first = first.rstrip("+#!?")
    return GameStats(
        game_id=game.game_id,
        white_elo=game.white_elo,
        black_elo=game.black_elo,
        result=game.result,
        year=game.date.year if game.date else None,
        ply_count=len(steps),
        first_san=first,
        ends_in_checkmate=mate,
        captures=captures,
        promotions=promotions,
        castled_kingside=ks,
        castled_queenside=qs,
        piece_moves=tuple(piece_counts[p] for p in PIECE_KINDS),
    )


def summarize_corpus(
    games: Iterable[GameRecord],
    on_error: Callable[[str, ReplayError], None] | None = None,
) -> list[GameStats]:
    out = []
    for game in games:
        try:
            out.append(summarize_game(game))
        except ReplayError as exc:
            if on_error is None:
                raise
            on_error(game.game_id, exc)
    return out


# ---------------------------------------------------------------------------
# filters


@dataclass(frozen=True, slots=True)
class CorpusFilter:
    """Optional game predicates; a filter can only remove games."""

    require_elos: bool = False
    year_min: Optional[int] = None
    year_max: Optional[int] = None
    min_ply: Optional[int] = None
    require_result: bool = False

    def admits(self, gs: GameStats) -> bool:
        if self.require_elos and (gs.white_elo is None or gs.black_elo is None):
            return False
        if self.year_min is not None and (gs.year is None or gs.year < self.year_min):
            return False
        if self.year_max is not None and (gs.year is None or gs.year > self.year_max):
            return False
        if self.min_ply is not None and gs.ply_count < self.min_ply:
            return False
        if self.require_result and gs.result is Result.UNKNOWN:
            return False
        return True

    def describe(self) -> str:
        parts = []
        if self.require_elos:
            parts.append("both-elos")
        if self.year_min is not None:
            parts.append(f"year>={self.year_min}")
        if self.year_max is not None:
            parts.append(f"year<={self.year_max}")
        if self.min_ply is not None:
            parts.append(f"ply>={self.min_ply}")
        if self.require_result:
            parts.append("result-known")
        return " ".join(parts) or "none"


NO_FILTER = CorpusFilter()


# ---------------------------------------------------------------------------
# tables


@dataclass(slots=True)
class StatTable:
    """Rectangular named table plus provenance; the carrier for every figure.
    `kind` selects the plot shape: 'histogram' (bars), 'line', or 'share'
    (stacked shares per row)."""

    name: str
    columns: tuple[str, ...]
    kind: str = "table"
    provenance: dict[str, str] = field(default_factory=dict)
    rows: list[tuple] = field(default_factory=list)

    def add_row(self, *cells) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(
                f"{self.name}: row arity {len(cells)} != {len(self.columns)} columns"
            )
        self.rows.append(tuple(cells))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.provenance):
            buf.write(f"# {key}={self.provenance[key]}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell_text(c) for c in row])
        return buf.getvalue()


def _cell_text(cell) -> str:
    if isinstance(cell, float):
        return format(cell, ".10g")
    return str(cell)


def _bin(value: int, width: int) -> int:
    return (value // width) * width


def _provenance(stats: Sequence[GameStats], filt: CorpusFilter,
                **extra) -> dict[str, str]:
    prov = {"corpus_games": str(len(stats)), "filter": filt.describe()}
    prov.update({k: str(v) for k, v in extra.items()})
    return prov


# ---------------------------------------------------------------------------
# operations


def elo_distributions(stats: Sequence[GameStats], filt: CorpusFilter = NO_FILTER,
                      bin_width: int = 25) -> tuple[StatTable, StatTable]:
    """Histogram of all player ratings (both colors pooled; every present
    rating counts one player-slot) and histogram of |white - black| rating
    difference (games carrying both ratings)."""
    admitted = [g for g in stats if filt.admits(g)]
    pool: Counter[int] = Counter()
    diffs: Counter[int] = Counter()
    slotless = diffless = 0
    for g in admitted:
        present = [e for e in (g.white_elo, g.black_elo) if e is not None]
        if not present:
            slotless += 1
        for elo in present:
            pool[_bin(elo, bin_width)] += 1
        d = g.elo_diff()
        if d is None:
            diffless += 1
        else:
            diffs[_bin(d, bin_width)] += 1
    elo_table = StatTable(
        name="elo_distribution",
        columns=("elo_bin", "players"),
        kind="histogram",
        provenance=_provenance(stats, filt, bin_width=bin_width,
                               excluded_no_rating=slotless),
    )
    for b in sorted(pool):
        elo_table.add_row(b, pool[b])
    diff_table = StatTable(
        name="elo_diff_distribution",
        columns=("elo_diff_bin", "games"),
        kind="histogram",
        provenance=_provenance(stats, filt, bin_width=bin_width,
                               excluded_missing_rating=diffless),
    )
    for b in sorted(diffs):
        diff_table.add_row(b, diffs[b])
    return elo_table, diff_table


def ply_vs_elodiff(stats: Sequence[GameStats], filt: CorpusFilter = NO_FILTER,
                   bin_width: int = 25) -> StatTable:
    """Mean game length per rating-difference bin."""
    admitted = [g for g in stats if filt.admits(g)]
    sums: dict[int, int] = defaultdict(int)
    counts: dict[int, int] = defaultdict(int)
    excluded = 0
    for g in admitted:
        d = g.elo_diff()
        if d is None:
            excluded += 1
            continue
        b = _bin(d, bin_width)
        sums[b] += g.ply_count
        counts[b] += 1
    table = StatTable(
        name="ply_vs_elo_diff",
        columns=("elo_diff_bin", "mean_ply", "games"),
        kind="line",
        provenance=_provenance(stats, filt, bin_width=bin_width,
                               excluded_missing_rating=excluded),
    )
    for b in sorted(counts):
        table.add_row(b, sums[b] / counts[b], counts[b])
    return table


def winrate_vs_elodiff(stats: Sequence[GameStats], filt: CorpusFilter = NO_FILTER,
                       bin_width: int = 25,
                       include_draws: bool = False) -> StatTable:
    """Chance of the higher-rated player winning, per rating-difference bin.
    Draws are excluded from the numerator and denominator unless
    include_draws is set (then they count in the denominator only). The
    higher-rated player of an equal-rating game is taken to be white."""
    admitted = [g for g in stats if filt.admits(g)]
    higher_wins: dict[int, int] = defaultdict(int)
    decisive: dict[int, int] = defaultdict(int)
    draws: dict[int, int] = defaultdict(int)
    games: dict[int, int] = defaultdict(int)
    excluded = 0
    for g in admitted:
        d = g.elo_diff()
        if d is None or g.result is Result.UNKNOWN:
            excluded += 1
            continue
        b = _bin(d, bin_width)
        games[b] += 1
        if g.result is Result.DRAW:
            draws[b] += 1
            continue
        decisive[b] += 1
        white_is_higher = g.white_elo >= g.black_elo
        white_won = g.result is Result.WHITE_WIN
        if white_won == white_is_higher:
            higher_wins[b] += 1
    table = StatTable(
        name="winrate_vs_elo_diff",
        columns=("elo_diff_bin", "p_higher_wins", "draw_share",
                 "decisive_games", "games"),
        kind="line",
        provenance=_provenance(
            stats, filt, bin_width=bin_width,
            draws_in_denominator=include_draws,
            excluded_missing_fields=excluded,
        ),
    )
    for b in sorted(games):
        denom = games[b] if include_draws else decisive[b]
        p = higher_wins[b] / denom if denom else 0.0
        table.add_row(b, p, draws[b] / games[b], decisive[b], games[b])
    return table


def white_performance(stats: Sequence[GameStats], filt: CorpusFilter = NO_FILTER,
                      bin_width: int = 100) -> tuple[StatTable, StatTable]:
    """Per white-rating bin: white's win/draw/loss shares. Second table: per
    band of the two players' mean rating, result shares by color."""
    admitted = [g for g in stats if filt.admits(g)]
    by_white: dict[int, Counter] = defaultdict(Counter)
    by_band: dict[int, Counter] = defaultdict(Counter)
    excluded_white = excluded_band = 0
    for g in admitted:
        if g.result is Result.UNKNOWN:
            excluded_white += 1
            excluded_band += 1
            continue
        if g.white_elo is not None:
            by_white[_bin(g.white_elo, bin_width)][g.result] += 1
        else:
            excluded_white += 1
        if g.white_elo is not None and g.black_elo is not None:
            band = _bin((g.white_elo + g.black_elo) // 2, bin_width)
            by_band[band][g.result] += 1
        else:
            excluded_band += 1
    white_table = StatTable(
        name="white_performance_by_elo",
        columns=("white_elo_bin", "games", "white_win_share", "draw_share",
                 "white_loss_share"),
        kind="share",
        provenance=_provenance(stats, filt, bin_width=bin_width,
                               excluded_missing_fields=excluded_white),
    )
    for b in sorted(by_white):
        tally = by_white[b]
        n = sum(tally.values())
        white_table.add_row(
            b, n,
            tally[Result.WHITE_WIN] / n,
            tally[Result.DRAW] / n,
            tally[Result.BLACK_WIN] / n,
        )
    band_table = StatTable(
        name="result_shares_by_elo_band",
        columns=("elo_band", "games", "white_win_share", "black_win_share",
                 "draw_share"),
        kind="share",
        provenance=_provenance(stats, filt, bin_width=bin_width,
                               excluded_missing_fields=excluded_band),
    )
    for b in sorted(by_band):
        tally = by_band[b]
        n = sum(tally.values())
        band_table.add_row(
            b, n,
            tally[Result.WHITE_WIN] / n,
            tally[Result.BLACK_WIN] / n,
            tally[Result.DRAW] / n,
        )
    return white_table, band_table


def first_move_shares_by_year(stats: Sequence[GameStats],
                              filt: CorpusFilter = NO_FILTER,
                              top_k: int = 4) -> StatTable:
    """Share of each of the corpus-wide top_k first moves per year, with the
    rest pooled under 'other'. Games with no moves or no date are excluded."""
    admitted = [g for g in stats
                if filt.admits(g) and g.year is not None and g.first_san]
    excluded = sum(1 for g in stats if filt.admits(g)) - len(admitted)
    overall: Counter[str] = Counter(g.first_san for g in admitted)
    top = [san for san, _ in sorted(overall.items(),
                                    key=lambda kv: (-kv[1], kv[0]))[:top_k]]
    per_year: dict[int, Counter] = defaultdict(Counter)
    for g in admitted:
        per_year[g.year][g.first_san] += 1
    table = StatTable(
        name="first_move_shares_by_year",
        columns=("year", *top, "other", "games"),
        kind="line",
        provenance=_provenance(stats, filt, top_k=top_k,
                               excluded_missing_fields=excluded),
    )
    for year in sorted(per_year):
        tally = per_year[year]
        n = sum(tally.values())
        shares = [tally[san] / n for san in top]
        other = (n - sum(tally[san] for san in top)) / n
        table.add_row(year, *shares, other, n)
    return table


def time_series(stats: Sequence[GameStats],
                filt: CorpusFilter = NO_FILTER) -> dict[str, StatTable]:
    """Per-year series: volume, mean length, result shares, board-checkmate
    rate, capture ratio, and piece-activity rates. Dateless games are
    excluded; the result-share series additionally drops unknown results and
    the capture-ratio series drops zero-ply games."""
    admitted = [g for g in stats if filt.admits(g)]
    dated = [g for g in admitted if g.year is not None]
    years = sorted({g.year for g in dated})
    by_year: dict[int, list[GameStats]] = defaultdict(list)
    for g in dated:
        by_year[g.year].append(g)
    base_prov = _provenance(stats, filt, excluded_dateless=len(admitted) - len(dated))

    games_t = StatTable("games_per_year", ("year", "games"), kind="histogram",
                        provenance=dict(base_prov))
    ply_t = StatTable("mean_ply_by_year", ("year", "mean_ply", "games"),
                      kind="line", provenance=dict(base_prov))
    results_t = StatTable(
        "result_shares_by_year",
        ("year", "white_win_share", "black_win_share", "draw_share", "games"),
        kind="share", provenance=dict(base_prov),
    )
    mate_t = StatTable("checkmate_rate_by_year",
                       ("year", "checkmate_share", "games"),
                       kind="line", provenance=dict(base_prov))
    capture_t = StatTable("capture_ratio_by_year",
                          ("year", "mean_capture_ratio", "games"),
                          kind="line", provenance=dict(base_prov))
    piece_t = StatTable(
        "piece_activity_by_year",
        ("year", "games", "promotions_per_game", "castle_kingside_per_game",
         "castle_queenside_per_game",
         *(f"share_{p}" for p in PIECE_KINDS)),
        kind="line", provenance=dict(base_prov),
    )

    for year in years:
        group = by_year[year]
        n = len(group)
        games_t.add_row(year, n)
        ply_t.add_row(year, sum(g.ply_count for g in group) / n, n)
        known = [g for g in group if g.result is not Result.UNKNOWN]
        if known:
            k = len(known)
            results_t.add_row(
                year,
                sum(g.result is Result.WHITE_WIN for g in known) / k,
                sum(g.result is Result.BLACK_WIN for g in known) / k,
                sum(g.result is Result.DRAW for g in known) / k,
                k,
            )
        mate_t.add_row(year, sum(g.ends_in_checkmate for g in group) / n, n)
        ratios = [g.capture_ratio() for g in group]
        ratios = [r for r in ratios if r is not None]
        if ratios:
            capture_t.add_row(year, sum(ratios) / len(ratios), len(ratios))
        total_plies = sum(g.ply_count for g in group)
        piece_t.add_row(
            year, n,
            sum(g.promotions for g in group) / n,
            sum(g.castled_kingside for g in group) / n,
            sum(g.castled_queenside for g in group) / n,
            *(
                (sum(g.piece_moves[i] for g in group) / total_plies)
                if total_plies else 0.0
                for i in range(len(PIECE_KINDS))
            ),
        )
    return {
        t.name: t
        for t in (games_t, ply_t, results_t, mate_t, capture_t, piece_t)
    }


# ---------------------------------------------------------------------------
# rendering


def render(table: StatTable, out_dir: str | Path,
           formats: Sequence[str] = ("csv",)) -> list[Path]:
    """Write the table as CSV and/or an SVG plot named after the table.
    CSV output is byte-deterministic for identical tables."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        path = out_dir / f"{table.name}.{fmt}"
        if fmt == "csv":
            path.write_text(table.to_csv(), encoding="utf-8")
        elif fmt == "svg":
            _plot_svg(table, path)
        else:
            raise ValueError(f"unsupported render format {fmt!r}")
        written.append(path)
    return written


def _plot_svg(table: StatTable, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "chessmill"
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if not table.rows:
        ax.set_title(f"{table.name} (empty)")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return
    x = table.column(table.columns[0])
    numeric = [
        name for name in table.columns[1:]
        if name != "games" and isinstance(table.rows[0][table.columns.index(name)],
                                          (int, float))
    ]
    if table.kind == "histogram":
        width = min(b - a for a, b in zip(x, x[1:])) * 0.9 if len(x) > 1 else 1
        ax.bar(x, table.column(table.columns[1]), width=width, align="edge")
        ax.set_ylabel(table.columns[1])
    elif table.kind == "share":
        bottom = [0.0] * len(x)
        for name in numeric:
            values = table.column(name)
            ax.bar(x, values, bottom=bottom,
                   width=min((b - a for a, b in zip(x, x[1:])), default=1) * 0.9,
                   align="edge", label=name)
            bottom = [b + v for b, v in zip(bottom, values)]
        ax.legend(fontsize=8)
        ax.set_ylabel("share")
    else:
        for name in numeric:
            ax.plot(x, table.column(name), marker=".", label=name)
        if len(numeric) > 1:
            ax.legend(fontsize=8)
        elif numeric:
            ax.set_ylabel(numeric[0])
    ax.set_xlabel(table.columns[0])
    ax.set_title(table.name)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
