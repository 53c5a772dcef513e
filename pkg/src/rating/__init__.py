from src.rating.gaussian import draw_margin_abs, vw_draw, vw_win
from src.rating.trueskill import (
    ChainMessages,
    Rating,
    RatingConfig,
    Ranking,
    apply_dynamics,
    crossover_fusion_rating,
    draw_margin,
    mutation_child_rating,
    rank_update,
    run_chain_ep,
    ucb_score,
    win_probability,
)

__all__ = [
    "ChainMessages",
    "Rating",
    "RatingConfig",
    "Ranking",
    "apply_dynamics",
    "crossover_fusion_rating",
    "draw_margin",
    "draw_margin_abs",
    "mutation_child_rating",
    "rank_update",
    "run_chain_ep",
    "ucb_score",
    "vw_draw",
    "vw_win",
    "win_probability",
]
