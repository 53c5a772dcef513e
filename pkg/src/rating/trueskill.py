import math
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import special

from src.exceptions import InvalidMatchError, RatingNumericError
from src.monitoring.logger import setup_logger
from src.rating.gaussian import draw_margin_abs, vw_draw, vw_win

logger = setup_logger(__name__)

MU0 = 25.0
SIGMA0 = MU0 / 3.0
BETA = MU0 / 6.0
TAU = MU0 / 300.0
P_DRAW = 0.10


class Rating(BaseModel):
    """Gaussian skill belief N(mu, sigma**2)"""

    model_config = ConfigDict(frozen=True)

    mu: float = MU0
    sigma: float = SIGMA0

    @field_validator("mu")
    @classmethod
    def _finite_mu(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError(f"mu must be finite, got {value}")
        return value

    @field_validator("sigma")
    @classmethod
    def _positive_sigma(cls, value: float) -> float:
        if not math.isfinite(value) or value <= 0.0:
            raise ValueError(f"sigma must be finite and > 0, got {value}")
        return value


class RatingConfig(BaseModel):
    mu0: float = MU0
    sigma0: float = Field(default=SIGMA0, gt=0.0)
    perf_beta: float = Field(default=BETA, gt=0.0)
    tau: float = Field(default=TAU, ge=0.0)
    p_draw: float = Field(default=P_DRAW, ge=0.0, lt=1.0)
    ep_max_sweeps: int = Field(default=10, ge=1)
    ep_tolerance: float = Field(default=1e-4, gt=0.0)
    # "variance": sqrt(sigma**2 + dsigma**2); "additive": sigma + dsigma
    child_sigma_rule: Literal["variance", "additive"] = "variance"

    def initial_rating(self) -> Rating:
        return Rating(mu=self.mu0, sigma=self.sigma0)


class Ranking(BaseModel):
    """
        order[p] is the player index at position p (best first); adjacent
        positions p, p+1 are a draw when ties[p] == ties[p+1].
    """

    order: List[int]
    ties: List[int]

    @model_validator(mode="after")
    def _check_permutation(self) -> "Ranking":
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(f"order must be a permutation of 0..{len(self.order) - 1}: {self.order}")
        if len(self.ties) != len(self.order):
            raise ValueError("ties must have one entry per player")
        return self

    def is_draw(self, position: int) -> bool:
        return self.ties[position] == self.ties[position + 1]


class ChainMessages(BaseModel):
    """EP messages of the ranked chain, one entry per adjacent constraint"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    pi_upper: np.ndarray
    tau_upper: np.ndarray
    pi_lower: np.ndarray
    tau_lower: np.ndarray
    sweeps: int = 0
    max_change: float = 0.0

    @classmethod
    def zeros(cls, n_constraints: int) -> "ChainMessages":
        return cls(
            pi_upper=np.zeros(n_constraints),
            tau_upper=np.zeros(n_constraints),
            pi_lower=np.zeros(n_constraints),
            tau_lower=np.zeros(n_constraints),
        )

    def incoming(self, position: int, n_players: int, skip: Optional[int] = None) -> Tuple[float, float]:
        """Sum of messages reaching a chain position, optionally leaving one constraint out"""
        pi = tau = 0.0
        # constraint position-1 sees this player as its lower end, constraint position as upper
        if position > 0 and skip != position - 1:
            pi += self.pi_lower[position - 1]
            tau += self.tau_lower[position - 1]
        if position < n_players - 1 and skip != position:
            pi += self.pi_upper[position]
            tau += self.tau_upper[position]
        return pi, tau


def apply_dynamics(r: Rating, cfg: RatingConfig) -> Rating:
    if cfg.tau == 0.0:
        return r
    return Rating(mu=r.mu, sigma=math.sqrt(r.sigma * r.sigma + cfg.tau * cfg.tau))


def draw_margin(cfg: RatingConfig) -> float:
    return draw_margin_abs(cfg.p_draw, cfg.perf_beta)


def ucb_score(r: Rating, lam: float) -> float:
    return r.mu + lam * r.sigma


def win_probability(a: Rating, b: Rating, cfg: RatingConfig) -> float:
    """P(performance of a exceeds performance of b)"""
    c = math.sqrt(a.sigma ** 2 + b.sigma ** 2 + 2.0 * cfg.perf_beta ** 2)
    return float(special.ndtr((a.mu - b.mu) / c))


def mutation_child_rating(parent: Rating, delta_sigma: float, rule: str = "variance") -> Rating:
    """
        Child inherits the parent's mean with inflated uncertainty.
    """
    if delta_sigma < 0.0:
        raise ValueError(f"delta_sigma must be >= 0, got {delta_sigma}")
    if rule == "additive":
        return Rating(mu=parent.mu, sigma=parent.sigma + delta_sigma)
    return Rating(mu=parent.mu, sigma=math.sqrt(parent.sigma ** 2 + delta_sigma ** 2))


def crossover_fusion_rating(parents: Sequence[Rating], delta_sigma: float) -> Rating:
    """
        Precision-weighted fusion of the parents' ratings plus delta_sigma**2 inflation.
    """
    if not parents:
        raise ValueError("crossover fusion needs at least one parent rating")
    precision = sum(1.0 / (p.sigma ** 2) for p in parents)
    weighted = sum(p.mu / (p.sigma ** 2) for p in parents)
    return Rating(mu=weighted / precision, sigma=math.sqrt(1.0 / precision + delta_sigma ** 2))


def run_chain_ep(
    pi0: np.ndarray,
    tau0: np.ndarray,
    draws: Sequence[bool],
    eps_abs: float,
    max_sweeps: int,
    tolerance: float,
    messages: Optional[ChainMessages] = None,
) -> ChainMessages:
    """
        Expectation propagation along a ranked chain in performance space.

        pi0/tau0 are the natural parameters of each chain position's performance
        prior. draws[k] tells whether constraint k (positions k, k+1) is a draw.
        Sweeps run forward over the constraints until the largest change of any
        message natural parameter drops below tolerance or max_sweeps is hit.
    """
    n = len(pi0)
    n_constraints = n - 1
    msgs = messages.model_copy(deep=True) if messages is not None else ChainMessages.zeros(n_constraints)

    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for k in range(n_constraints):
            i, j = k, k + 1
            in_pi_i, in_tau_i = msgs.incoming(i, n, skip=k)
            in_pi_j, in_tau_j = msgs.incoming(j, n, skip=k)
            pi_i, tau_i = pi0[i] + in_pi_i, tau0[i] + in_tau_i
            pi_j, tau_j = pi0[j] + in_pi_j, tau0[j] + in_tau_j

            var_i, var_j = 1.0 / pi_i, 1.0 / pi_j
            mu_i, mu_j = tau_i * var_i, tau_j * var_j
            c = math.sqrt(var_i + var_j)
            t = (mu_i - mu_j) / c
            eps = eps_abs / c
            v, w = vw_draw(t, eps) if draws[k] else vw_win(t, eps)

            post_mu_i = mu_i + var_i / c * v
            post_mu_j = mu_j - var_j / c * v
            post_var_i = var_i * (1.0 - var_i / (c * c) * w)
            post_var_j = var_j * (1.0 - var_j / (c * c) * w)

            new_pi_i = max(0.0, 1.0 / post_var_i - pi_i)
            new_pi_j = max(0.0, 1.0 / post_var_j - pi_j)
            new_tau_i = post_mu_i / post_var_i - tau_i
            new_tau_j = post_mu_j / post_var_j - tau_j

            values = (new_pi_i, new_tau_i, new_pi_j, new_tau_j, post_var_i, post_var_j)
            if not all(math.isfinite(x) for x in values) or post_var_i <= 0.0 or post_var_j <= 0.0:
                raise RatingNumericError(
                    f"Non-finite EP update on constraint {k}",
                    diagnostics={
                        "constraint": k, "sweep": sweep, "t": t, "eps": eps, "v": v, "w": w,
                        "cavity": [(mu_i, var_i), (mu_j, var_j)],
                        "posterior_var": [post_var_i, post_var_j],
                    },
                )

            max_change = max(
                max_change,
                abs(new_pi_i - msgs.pi_upper[k]), abs(new_tau_i - msgs.tau_upper[k]),
                abs(new_pi_j - msgs.pi_lower[k]), abs(new_tau_j - msgs.tau_lower[k]),
            )
            msgs.pi_upper[k], msgs.tau_upper[k] = new_pi_i, new_tau_i
            msgs.pi_lower[k], msgs.tau_lower[k] = new_pi_j, new_tau_j

        msgs.sweeps = sweep
        msgs.max_change = max_change
        if max_change < tolerance:
            break

    return msgs


def rank_update(ratings: Sequence[Rating], ranking: Ranking, cfg: RatingConfig) -> List[Rating]:
    """
        Posterior ratings after one ranked match. Dynamics drift is applied
        once to every participant first; the result comes back in the
        players' original index order.
    """
    n = len(ratings)
    if n < 2:
        raise InvalidMatchError(f"A match needs at least 2 players, got {n}")
    if len(ranking.order) != n:
        raise InvalidMatchError(f"Ranking covers {len(ranking.order)} players, match has {n}")

    beta2 = cfg.perf_beta ** 2
    priors = [apply_dynamics(r, cfg) for r in ratings]
    chain = [priors[idx] for idx in ranking.order]

    perf_var = np.array([r.sigma ** 2 + beta2 for r in chain])
    pi0 = 1.0 / perf_var
    tau0 = np.array([r.mu for r in chain]) * pi0
    draws = [ranking.is_draw(p) for p in range(n - 1)]

    msgs = run_chain_ep(pi0, tau0, draws, draw_margin(cfg), cfg.ep_max_sweeps, cfg.ep_tolerance)
    logger.debug(f"EP converged after {msgs.sweeps} sweeps (max change {msgs.max_change:.2e})")

    posteriors: Dict[int, Rating] = {}
    for position, player in enumerate(ranking.order):
        prior = chain[position]
        pi_msg, tau_msg = msgs.incoming(position, n)
        # Map the performance-space message through the performance-noise link
        scale = 1.0 + beta2 * pi_msg
        pi_skill = 1.0 / prior.sigma ** 2 + pi_msg / scale
        tau_skill = prior.mu / prior.sigma ** 2 + tau_msg / scale
        if not (math.isfinite(pi_skill) and math.isfinite(tau_skill)) or pi_skill <= 0.0:
            raise RatingNumericError(
                f"Non-finite skill posterior for player {player}",
                diagnostics={"player": player, "pi_msg": pi_msg, "tau_msg": tau_msg,
                             "prior": (prior.mu, prior.sigma)},
            )
        posteriors[player] = Rating(mu=tau_skill / pi_skill, sigma=math.sqrt(1.0 / pi_skill))

    return [posteriors[idx] for idx in range(n)]
