from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from src.exceptions import IterationError, RolloutTransportError
from src.genetic.operators import maybe_crossover, mutate
from src.guardrails.safety import PromptGuardrails
from src.monitoring.logger import setup_logger
from src.monitoring.metrics import MetricsWriter
from src.policy.toy_policy import ToyPolicy
from src.population.population import Population, PromptNode, TournamentResult, record_tournament, select
from src.reflect.backends import ReflectorBackend
from src.reflect.pipeline import create_backend
from src.reflect.transport import LangChainChatTransport
from src.rollout.problems import load_problems
from src.rollout.samplers import HttpChatSampler, RolloutSampler, SyntheticSampler, sample_batch
from src.rollout.synthetic import SyntheticEnv
from src.rollout.types import Problem, RolloutBatch, best_prompt
from src.training.checkpoint import TrainingState, load_checkpoint, save_checkpoint
from src.training.config import EsplConfig, config_hash, config_to_dict
from src.training.rng import derive_rng

DEFAULT_ROOT_PROMPT = "You are a helpful assistant. Solve the task and end with a line 'Answer: <answer>'."


def aggregate_tournament_values(batch: RolloutBatch) -> List[float]:
    """Per-prompt fitness: mean over the problem batch of V[i][b]"""
    return batch.prompt_values()


def _rating_pair(node: PromptNode) -> List[float]:
    return [node.rating.mu, node.rating.sigma]


class EsplTrainer:
    """
        Runs the training loop: select, sample, policy step, tournament,
        mutation, crossover. One trainer owns one run's state.
    """

    def __init__(self, cfg: EsplConfig, metrics: Optional[MetricsWriter] = None,
                 checkpoint_dir: Optional[Union[str, Path]] = None,
                 backend: Optional[ReflectorBackend] = None,
                 sampler: Optional[RolloutSampler] = None,
                 langfuse_handler=None):
        self.cfg = cfg
        self.logger = setup_logger(__name__)
        self.metrics = metrics or MetricsWriter()
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
        self.selection = cfg.selection_policy()
        self.guardrails = PromptGuardrails(cfg.reflector.max_principle_chars, cfg.genetic.k_ops)

        self.env: Optional[SyntheticEnv] = None
        self.policy: Optional[ToyPolicy] = None
        if cfg.sampler.backend == "synthetic":
            self.env = SyntheticEnv.from_fixture(cfg.sampler.fixture, quality_gain=cfg.sampler.quality_gain)
            self.problems: List[Problem] = self.env.problems()
            self.policy = ToyPolicy.from_env(self.env)
        else:
            self.problems = load_problems(cfg.sampler.problems_path)
        self._sampler = sampler

        self.backend = backend or create_backend(cfg.reflector, cfg.genetic.k_ops, self.env, langfuse_handler)
        self.langfuse_handler = langfuse_handler
        self.hash = config_hash(cfg)
        self.logger.info(f"Trainer ready: {len(self.problems)} problems, sampler={cfg.sampler.backend}, "
                         f"reflector={cfg.reflector.backend}, config {self.hash[:12]}")

    # --- state ---------------------------------------------------------

    def root_text(self) -> str:
        if self.cfg.root_prompt is not None:
            return self.cfg.root_prompt
        return self.env.root_prompt if self.env is not None else DEFAULT_ROOT_PROMPT

    def initial_state(self) -> TrainingState:
        pop = Population.with_root(self.root_text(), self.cfg.rating.initial_rating(), window_size=self.cfg.K)
        theta = self.policy.theta.copy() if self.policy is not None else None
        reference = self.policy.reference_theta.copy() if self.policy is not None else None
        root = pop.nodes[0]
        self.metrics.write_header(config_to_dict(self.cfg), self.hash, root.model_dump(mode="json"))
        return TrainingState(population=pop, theta=theta, reference_theta=reference)

    def policy_for(self, state: TrainingState) -> Optional[ToyPolicy]:
        if self.policy is None or state.theta is None:
            return None
        return ToyPolicy(state.theta, self.policy.problem_ids, self.policy.feature_weights,
                         self.policy.featurizer, state.reference_theta)

    def sampler_for(self, policy: Optional[ToyPolicy]) -> RolloutSampler:
        if self._sampler is not None:
            return self._sampler
        if self.env is not None:
            return SyntheticSampler(self.env, policy)
        s = self.cfg.sampler
        transport = LangChainChatTransport(
            endpoint=s.endpoint, model=s.model, api_key_env=s.api_key_env, temperature=s.temperature,
            max_retries=s.max_retries, timeout=s.request_timeout, max_in_flight=s.concurrency,
            langfuse_handler=self.langfuse_handler,
        )
        self._sampler = HttpChatSampler(transport, concurrency=s.concurrency)
        return self._sampler

    def draw_problems(self, iteration: int) -> List[Problem]:
        rng = derive_rng(self.cfg.seed, "problems", iteration)
        size = min(self.cfg.batch_size, len(self.problems))
        picked = rng.choice(len(self.problems), size=size, replace=False)
        return [self.problems[idx] for idx in picked]

    # --- loop ----------------------------------------------------------

    def _sample_with_retries(self, participants: Sequence[PromptNode], problems: Sequence[Problem],
                             policy: Optional[ToyPolicy], iteration: int) -> RolloutBatch:
        sampler = self.sampler_for(policy)
        for attempt in range(self.cfg.max_iteration_retries + 1):
            try:
                return sample_batch(sampler, participants, problems, self.cfg.N,
                                    derive_rng(self.cfg.seed, "rollout", iteration, attempt))
            except RolloutTransportError as e:
                self.logger.warning(f"Iteration {iteration}: rollout attempt {attempt + 1} failed: {e}")
        raise IterationError(f"rollouts failed after {self.cfg.max_iteration_retries + 1} attempts", iteration)

    def run_iteration(self, state: TrainingState) -> TrainingState:
        t = state.iteration
        pop = state.population
        cfg = self.cfg

        participants = select(pop, self.selection, derive_rng(cfg.seed, "select", t))
        participant_ids = [node.id for node in participants]
        self.logger.info(f"Iteration {t}: selected {participant_ids}")
        problems = self.draw_problems(t)
        policy = self.policy_for(state)

        batch = self._sample_with_retries(participants, problems, policy, t)

        if cfg.train_policy and policy is not None:
            policy = policy.step(batch, cfg.rl)
            state.theta = policy.theta
        elif cfg.train_policy:
            self.logger.info(f"Iteration {t}: policy weights live on the sampling server, RL step skipped")

        values = aggregate_tournament_values(batch)
        priors = {node.id: _rating_pair(node) for node in participants}
        tournament: Optional[TournamentResult] = None
        if len(participants) >= 2:
            tournament = record_tournament(pop, participant_ids, values, cfg.rating)
        else:
            self.logger.info(f"Iteration {t}: single participant, no rating update")

        children: List[PromptNode] = []
        crossover_fired = False
        if cfg.evolve_prompts:
            # Fresh node objects carry the post-tournament ratings
            current = [pop.get(node_id) for node_id in participant_ids]
            child = mutate(batch, current, self.backend, cfg.genetic, pop, t, self.guardrails, cfg.rating)
            if child is not None:
                children.append(child)
            outcome = maybe_crossover(batch, current, self.backend, cfg.genetic,
                                      derive_rng(cfg.seed, "crossover", t), pop, t, self.guardrails)
            crossover_fired = outcome.fired
            if outcome.child is not None:
                children.append(outcome.child)
            for node in children:
                pop.append(node)

        best_value = max(values)
        state.reward_history.append(best_value)
        self.metrics.write_iteration({
            "iteration": t,
            "participants": participant_ids,
            "problems": [p.id for p in problems],
            "values": values,
            "priors": {str(k): v for k, v in priors.items()},
            "ranking": tournament.ranking.model_dump() if tournament else None,
            "posteriors": ({str(k): [r.mu, r.sigma] for k, r in tournament.posteriors.items()}
                           if tournament else {}),
            "mutation_parent": participant_ids[best_prompt(batch)],
            "children": [
                {"id": c.id, "origin": c.origin.value, "parents": c.parent_ids,
                 "rating": _rating_pair(c), "text": c.text}
                for c in children
            ],
            "crossover_fired": crossover_fired,
            "mean_reward": batch.mean_reward(),
            "best_value": best_value,
        })

        state.iteration = t + 1
        if self._plateaued(state):
            self.logger.info(f"Best batch value plateaued for {cfg.early_stop_patience} iterations, stopping")
            state.stopped = True
        return state

    def _plateaued(self, state: TrainingState) -> bool:
        patience = self.cfg.early_stop_patience
        history = state.reward_history
        if patience is None or len(history) <= patience:
            return False
        before = max(history[:-patience])
        return max(history[-patience:]) <= before + self.cfg.early_stop_min_delta

    def run(self, state: Optional[TrainingState] = None, iterations: Optional[int] = None) -> TrainingState:
        """Run until the configured iteration count, resuming from state when given"""
        state = state or self.initial_state()
        target = self.cfg.iterations if iterations is None else iterations
        self.logger.info(f"Training from iteration {state.iteration} to {target}")
        while state.iteration < target and not state.stopped:
            try:
                state = self.run_iteration(state)
            except IterationError:
                raise
            except Exception as e:
                raise IterationError(str(e), state.iteration) from e
            if self.checkpoint_dir is not None and self.cfg.checkpoint_every and \
                    state.iteration % self.cfg.checkpoint_every == 0:
                self.save(state)

        if self.checkpoint_dir is not None:
            self.save(state)
        self.logger.info(f"Training finished at iteration {state.iteration} with {len(state.population)} prompts")
        return state

    def save(self, state: TrainingState) -> Path:
        path = self.checkpoint_dir / f"checkpoint_{state.iteration:06d}.json"
        save_checkpoint(path, state, self.cfg, self.metrics.path)
        save_checkpoint(self.checkpoint_dir / "latest.json", state, self.cfg, self.metrics.path)
        return path


def run(cfg: EsplConfig, metrics_path: Optional[Union[str, Path]] = None,
        checkpoint_dir: Optional[Union[str, Path]] = None, **trainer_kwargs: Any) -> Tuple[TrainingState, List[Dict]]:
    """Fresh run of cfg.iterations iterations; returns the final state and the metrics records"""
    trainer = EsplTrainer(cfg, MetricsWriter(metrics_path), checkpoint_dir, **trainer_kwargs)
    state = trainer.run()
    return state, trainer.metrics.records


def resume(checkpoint_path: Union[str, Path], iterations: Optional[int] = None,
           checkpoint_dir: Optional[Union[str, Path]] = None, **trainer_kwargs: Any) -> TrainingState:
    """Continue a run from a checkpoint, truncating its metrics stream to the checkpoint's iteration"""
    cfg, state, metrics_path = load_checkpoint(checkpoint_path)
    metrics = MetricsWriter(metrics_path)
    metrics.resume_at(state.iteration)
    out_dir = checkpoint_dir if checkpoint_dir is not None else Path(checkpoint_path).parent
    trainer = EsplTrainer(cfg, metrics, out_dir, **trainer_kwargs)
    return trainer.run(state, iterations=iterations)
