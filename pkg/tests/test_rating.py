import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from src.exceptions import InvalidConfigError, InvalidMatchError
from src.rating.gaussian import draw_margin_abs, probit, vw_draw, vw_win
from src.rating.trueskill import (
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

WIN = Ranking(order=[0, 1], ties=[0, 1])
LOSS = Ranking(order=[1, 0], ties=[0, 1])
DRAW = Ranking(order=[0, 1], ties=[0, 0])


def _band_moments(lo: float, hi: float):
    """Mean and variance of a standard normal restricted to [lo, hi], by quadrature"""
    kw = {"epsabs": 0.0, "epsrel": 1e-12, "limit": 200}
    z = integrate.quad(stats.norm.pdf, lo, hi, **kw)[0]
    m1 = integrate.quad(lambda x: x * stats.norm.pdf(x), lo, hi, **kw)[0] / z
    m2 = integrate.quad(lambda x: x * x * stats.norm.pdf(x), lo, hi, **kw)[0] / z
    return m1, m2 - m1 * m1


def _quadrature_posterior(winner: Rating, loser: Rating, draw: bool, cfg: RatingConfig):
    """
        Exact posterior moments of both skills given the outcome, integrating over
        the performance difference d = p_winner - p_loser.
    """
    var_w = winner.sigma ** 2 + cfg.tau ** 2
    var_l = loser.sigma ** 2 + cfg.tau ** 2
    c = math.sqrt(var_w + var_l + 2.0 * cfg.perf_beta ** 2)
    t = (winner.mu - loser.mu) / c
    e = draw_margin(cfg) / c
    if draw:
        mean, var = _band_moments(-e - t, e - t)
    else:
        mean, var = _band_moments(e - t, max(e - t, 0.0) + 14.0)
    v, w = mean, 1.0 - var
    post_w = (winner.mu + var_w / c * v, math.sqrt(var_w * (1.0 - var_w / c ** 2 * w)))
    post_l = (loser.mu - var_l / c * v, math.sqrt(var_l * (1.0 - var_l / c ** 2 * w)))
    return post_w, post_l


# --- draw margin -------------------------------------------------------------

def test_draw_margin_default_constants():
    eps = draw_margin_abs(0.10, 25.0 / 6.0)
    assert eps == pytest.approx(0.74047, abs=1e-5)
    assert eps == pytest.approx(stats.norm.ppf(0.55) * math.sqrt(2.0) * 25.0 / 6.0, rel=1e-12)


def test_draw_margin_zero_and_linear_in_beta():
    assert draw_margin_abs(0.0, 4.0) == 0.0
    assert draw_margin_abs(0.10, 2 * 25.0 / 6.0) == pytest.approx(2 * draw_margin_abs(0.10, 25.0 / 6.0))


@pytest.mark.parametrize("p_draw", [1.0, 1.5, -0.1])
def test_draw_margin_rejects_invalid_probability(p_draw):
    with pytest.raises(InvalidConfigError):
        draw_margin_abs(p_draw, 4.0)


def test_probit_inverts_cdf():
    for p in (1e-12, 0.01, 0.3, 0.5, 0.77, 0.999999):
        assert special.ndtr(probit(p)) == pytest.approx(p, rel=1e-12)


# --- v / w -------------------------------------------------------------------

def test_vw_win_at_origin():
    v, w = vw_win(0.0, 0.0)
    assert v == pytest.approx(0.7978846, abs=1e-7)
    assert w == pytest.approx(0.6366198, abs=1e-7)


def test_vw_win_certain_win_needs_no_correction():
    v, w = vw_win(10.0, 0.0)
    assert 0.0 <= v < 1e-15
    assert 0.0 <= w < 1e-12


@pytest.mark.parametrize("x", np.linspace(-40.0, 40.0, 81))
def test_vw_win_matches_log_space_oracle(x):
    v, w = vw_win(x + 0.5, 0.5)
    v_ref = math.exp(stats.norm.logpdf(x) - special.log_ndtr(x))
    assert math.isfinite(v) and math.isfinite(w)
    assert v == pytest.approx(v_ref, rel=1e-6, abs=1e-12)
    assert w == pytest.approx(min(v_ref * (v_ref + x), 1.0 - 1e-15), abs=1e-6)


def test_vw_win_deep_loss_follows_inverse_mills_asymptote():
    v, w = vw_win(-10.0, 0.0)
    # phi(10) / Phi(-10) = 10.098...
    assert v == pytest.approx(10.0, rel=0.02)
    assert v > 10.0
    assert w == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("eps", [0.1, 0.74047, 2.0])
@pytest.mark.parametrize("t", np.linspace(-5.0, 5.0, 21))
def test_vw_draw_matches_quadrature(t, eps):
    v, w = vw_draw(t, eps)
    mean, var = _band_moments(-eps - t, eps - t)
    assert v == pytest.approx(mean, abs=1e-6)
    assert w == pytest.approx(1.0 - var, abs=1e-6)


def test_vw_draw_symmetry():
    assert vw_draw(0.0, 0.74047)[0] == 0.0
    v_pos, w_pos = vw_draw(0.5, 0.74047)
    v_neg, w_neg = vw_draw(-0.5, 0.74047)
    assert v_neg == -v_pos
    assert w_neg == w_pos
    assert v_pos < 0.0


@settings(max_examples=300, deadline=None)
@given(t=st.floats(min_value=-40.0, max_value=40.0), eps=st.floats(min_value=0.0, max_value=5.0))
def test_corrections_stay_finite(t, eps):
    v, w = vw_win(t, eps)
    assert math.isfinite(v) and math.isfinite(w)
    assert v >= 0.0 and 0.0 <= w < 1.0
    v, w = vw_draw(t, eps)
    assert math.isfinite(v) and math.isfinite(w)
    assert 0.0 < w < 1.0


# --- scalar rules ------------------------------------------------------------

def test_ucb_score():
    assert ucb_score(Rating(mu=25.0, sigma=25.0 / 3.0), 2.0) == pytest.approx(41.6667, abs=1e-4)
    assert ucb_score(Rating(mu=25.0, sigma=3.0), 0.0) == 25.0
    assert ucb_score(Rating(mu=25.0, sigma=4.0), 1.0) > ucb_score(Rating(mu=25.0, sigma=3.0), 1.0)


@given(mu=st.floats(-100, 100), sigma=st.floats(0.01, 50), lam=st.floats(-5, 5))
def test_ucb_score_is_linear(mu, sigma, lam):
    assert ucb_score(Rating(mu=mu, sigma=sigma), lam) == pytest.approx(mu + lam * sigma, abs=1e-9)


def test_win_probability():
    cfg = RatingConfig()
    a, b = Rating(mu=30.0, sigma=4.0), Rating(mu=22.0, sigma=6.0)
    assert win_probability(a, a, cfg) == pytest.approx(0.5)
    assert win_probability(a, b, cfg) + win_probability(b, a, cfg) == pytest.approx(1.0)
    c = math.sqrt(16.0 + 36.0 + 2.0 * cfg.perf_beta ** 2)
    assert win_probability(a, b, cfg) == pytest.approx(stats.norm.cdf(8.0 / c))


def test_mutation_child_rating():
    child = mutation_child_rating(Rating(mu=25.0, sigma=25.0 / 3.0), 1.0)
    assert child.mu == 25.0
    assert child.sigma == pytest.approx(8.3932, abs=1e-4)
    assert mutation_child_rating(Rating(mu=10.0, sigma=3.0), 0.0) == Rating(mu=10.0, sigma=3.0)
    assert mutation_child_rating(Rating(mu=10.0, sigma=3.0), 4.0).sigma == pytest.approx(5.0)
    assert mutation_child_rating(Rating(mu=10.0, sigma=3.0), 4.0, rule="additive").sigma == 7.0
    with pytest.raises(ValueError):
        mutation_child_rating(Rating(), -1.0)


def test_crossover_fusion_rating():
    fused = crossover_fusion_rating([Rating(mu=25.0, sigma=5.0), Rating(mu=25.0, sigma=5.0)], 1.0)
    assert fused.mu == pytest.approx(25.0)
    assert fused.sigma == pytest.approx(3.6742, abs=1e-4)

    single = crossover_fusion_rating([Rating(mu=20.0, sigma=3.0)], 4.0)
    assert single.mu == pytest.approx(20.0)
    assert single.sigma == pytest.approx(mutation_child_rating(Rating(mu=20.0, sigma=3.0), 4.0).sigma)

    skewed = crossover_fusion_rating([Rating(mu=30.0, sigma=2.0), Rating(mu=20.0, sigma=8.0)], 1.0)
    assert abs(skewed.mu - 30.0) < abs(skewed.mu - 20.0)

    with pytest.raises(ValueError):
        crossover_fusion_rating([], 1.0)


def test_rating_rejects_invalid_sigma():
    with pytest.raises(ValueError):
        Rating(mu=25.0, sigma=0.0)
    with pytest.raises(ValueError):
        Rating(mu=float("nan"), sigma=1.0)


def test_apply_dynamics(rating_cfg):
    drifted = apply_dynamics(Rating(mu=25.0, sigma=3.0), rating_cfg)
    assert drifted.mu == 25.0
    assert drifted.sigma == pytest.approx(math.sqrt(9.0 + rating_cfg.tau ** 2))
    assert apply_dynamics(Rating(mu=1.0, sigma=2.0), RatingConfig(tau=0.0)) == Rating(mu=1.0, sigma=2.0)


# --- rank_update -------------------------------------------------------------

def test_symmetric_win_conserves_mean(rating_cfg):
    a, b = rank_update([Rating(), Rating()], WIN, rating_cfg)
    assert a.mu > 25.0 > b.mu
    assert (a.mu - 25.0) == pytest.approx(25.0 - b.mu, abs=1e-9)
    assert a.sigma == pytest.approx(b.sigma, abs=1e-12)


def test_symmetric_draw_keeps_means(rating_cfg):
    a, b = rank_update([Rating(), Rating()], DRAW, rating_cfg)
    prior_sigma = apply_dynamics(Rating(), rating_cfg).sigma
    assert a.mu == b.mu
    assert a.mu == pytest.approx(25.0, abs=1e-9)
    assert a.sigma < prior_sigma and b.sigma < prior_sigma


def test_two_player_update_matches_quadrature_example(rating_cfg):
    a, b = Rating(mu=30.0, sigma=4.0), Rating(mu=22.0, sigma=6.0)
    post_a, post_b = rank_update([a, b], WIN, rating_cfg)
    ref_a, ref_b = _quadrature_posterior(a, b, False, rating_cfg)
    assert (post_a.mu, post_a.sigma) == pytest.approx(ref_a, abs=1e-3)
    assert (post_b.mu, post_b.sigma) == pytest.approx(ref_b, abs=1e-3)


def test_two_player_update_matches_quadrature_randomized(rating_cfg):
    rng = np.random.default_rng(7)
    for case in range(24):
        ratings = [Rating(mu=float(rng.uniform(15, 35)), sigma=float(rng.uniform(1, 9))) for _ in range(2)]
        outcome = ("win", "loss", "draw")[case % 3]
        ranking = {"win": WIN, "loss": LOSS, "draw": DRAW}[outcome]
        post = rank_update(ratings, ranking, rating_cfg)

        winner, loser = (1, 0) if outcome == "loss" else (0, 1)
        ref_w, ref_l = _quadrature_posterior(ratings[winner], ratings[loser], outcome == "draw", rating_cfg)
        assert (post[winner].mu, post[winner].sigma) == pytest.approx(ref_w, abs=1e-3), case
        assert (post[loser].mu, post[loser].sigma) == pytest.approx(ref_l, abs=1e-3), case


def test_winner_mean_beats_counterfactual_loss(rating_cfg):
    ratings = [Rating(mu=27.0, sigma=5.0), Rating(mu=24.0, sigma=7.0)]
    won = rank_update(ratings, WIN, rating_cfg)
    lost = rank_update(ratings, LOSS, rating_cfg)
    assert won[0].mu > lost[0].mu
    prior = [apply_dynamics(r, rating_cfg) for r in ratings]
    assert all(post.sigma < pre.sigma for post, pre in zip(won, prior))


def test_three_player_chain_is_symmetric(rating_cfg):
    top, middle, bottom = rank_update([Rating()] * 3, Ranking(order=[0, 1, 2], ties=[0, 1, 2]), rating_cfg)
    assert middle.mu == pytest.approx(25.0, abs=1e-2)
    assert top.mu - 25.0 == pytest.approx(25.0 - bottom.mu, abs=1e-2)
    assert top.sigma == pytest.approx(bottom.sigma, abs=1e-2)
    assert top.mu > middle.mu > bottom.mu


def test_chain_ep_reaches_fixed_point(rating_cfg):
    priors = [Rating(mu=28.0, sigma=5.0), Rating(mu=25.0, sigma=8.0), Rating(mu=20.0, sigma=3.0)]
    perf_var = np.array([r.sigma ** 2 + rating_cfg.perf_beta ** 2 for r in priors])
    pi0 = 1.0 / perf_var
    tau0 = np.array([r.mu for r in priors]) * pi0
    eps = draw_margin(rating_cfg)

    converged = run_chain_ep(pi0, tau0, [False, False], eps, max_sweeps=100, tolerance=1e-12)
    again = run_chain_ep(pi0, tau0, [False, False], eps, max_sweeps=1, tolerance=1e-12, messages=converged)
    assert again.max_change < 1e-10

    default = run_chain_ep(pi0, tau0, [False, False], eps, rating_cfg.ep_max_sweeps, rating_cfg.ep_tolerance)
    assert default.max_change < rating_cfg.ep_tolerance or default.sweeps == rating_cfg.ep_max_sweeps
    np.testing.assert_allclose(default.tau_upper, converged.tau_upper, atol=1e-3)


def test_rank_update_errors(rating_cfg):
    with pytest.raises(InvalidMatchError):
        rank_update([Rating()], Ranking(order=[0], ties=[0]), rating_cfg)
    with pytest.raises(InvalidMatchError):
        rank_update([Rating(), Rating(), Rating()], WIN, rating_cfg)
    with pytest.raises(ValueError):
        Ranking(order=[0, 0], ties=[0, 1])


def test_rank_update_is_order_independent(rating_cfg):
    a, b, c = Rating(mu=26.0, sigma=4.0), Rating(mu=22.0, sigma=6.0), Rating(mu=29.0, sigma=3.0)
    # c first, then a, then b
    posts = rank_update([a, b, c], Ranking(order=[2, 0, 1], ties=[0, 1, 2]), rating_cfg)
    permuted = rank_update([c, a, b], Ranking(order=[0, 1, 2], ties=[0, 1, 2]), rating_cfg)
    assert posts[2] == permuted[0]
    assert posts[0] == permuted[1]
    assert posts[1] == permuted[2]
