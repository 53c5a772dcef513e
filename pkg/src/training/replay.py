from pathlib import Path
from typing import Dict, List, Tuple, Union

from pydantic import BaseModel, Field

from src.monitoring.logger import setup_logger
from src.monitoring.metrics import HEADER, read_metrics
from src.rating.trueskill import (
    Rating,
    RatingConfig,
    Ranking,
    crossover_fusion_rating,
    mutation_child_rating,
    rank_update,
)

logger = setup_logger(__name__)


class ReplayReport(BaseModel):
    ratings: Dict[int, Tuple[float, float]]
    tournaments: int = 0
    children: int = 0
    mismatches: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def replay_ratings(metrics_path: Union[str, Path]) -> ReplayReport:
    """
        Recompute every rating of a run from its metrics stream alone and
        compare with what the run recorded. Comparisons are exact.
    """
    records = read_metrics(metrics_path)
    if not records or records[0]["type"] != HEADER:
        raise ValueError(f"{metrics_path} does not start with a header record")
    header = records[0]
    rating_cfg = RatingConfig.model_validate(header["config"]["rating"])
    delta_sigma = float(header["config"]["genetic"]["delta_sigma"])

    root = header["root"]
    ratings: Dict[int, Rating] = {root["id"]: Rating.model_validate(root["rating"])}
    report = ReplayReport(ratings={})

    for record in records[1:]:
        t = record["iteration"]
        participants: List[int] = record["participants"]
        if record["ranking"] is not None:
            ranking = Ranking.model_validate(record["ranking"])
            posteriors = rank_update([ratings[pid] for pid in participants], ranking, rating_cfg)
            for pid, rating in zip(participants, posteriors):
                ratings[pid] = rating
                logged = record["posteriors"][str(pid)]
                if [rating.mu, rating.sigma] != logged:
                    report.mismatches.append(f"iteration {t}: node {pid} replayed "
                                             f"({rating.mu}, {rating.sigma}) != logged {tuple(logged)}")
            report.tournaments += 1

        for child in record["children"]:
            if child["origin"] == "mutation":
                rating = mutation_child_rating(ratings[child["parents"][0]], delta_sigma,
                                               rating_cfg.child_sigma_rule)
            else:
                rating = crossover_fusion_rating([ratings[pid] for pid in participants], delta_sigma)
            if [rating.mu, rating.sigma] != child["rating"]:
                report.mismatches.append(f"iteration {t}: child {child['id']} replayed "
                                         f"({rating.mu}, {rating.sigma}) != logged {tuple(child['rating'])}")
            ratings[child["id"]] = rating
            report.children += 1

    report.ratings = {pid: (r.mu, r.sigma) for pid, r in sorted(ratings.items())}
    if report.mismatches:
        logger.warning(f"Replay found {len(report.mismatches)} mismatches")
    else:
        logger.info(f"Replay reproduced {report.tournaments} tournaments and {report.children} children exactly")
    return report
