"""scikit-learn style wrapper around one evolutionary run."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .evolve import EvolutionConfig, build_controllers, evaluate_genome, run_experiment


class MultiBrainEvolver(BaseEstimator):
    """Evolve a multi-brain controller for one domain.

    ``fit`` ignores ``X`` and ``y``: the training signal is the domain's
    fitness function.  After fitting, ``predict`` maps sensor vectors to
    action indices (0 left, 1 forward, 2 right) with the champion's first
    controller.

    Fitted attributes: ``champion_``, ``champion_fitness_``, ``log_``.
    """

    def __init__(self, method="MT", domain="dual_task", population_size=0, generations=100,
                 seed=0, jobs=1, target_fitness=None):
        self.method = method
        self.domain = domain
        self.population_size = population_size
        self.generations = generations
        self.seed = seed
        self.jobs = jobs
        self.target_fitness = target_fitness

    def _config(self) -> EvolutionConfig:
        return EvolutionConfig(method=self.method, domain=self.domain,
                               population_size=self.population_size,
                               generations=self.generations, seed=self.seed, jobs=self.jobs,
                               target_fitness=self.target_fitness).validate()

    def fit(self, X=None, y=None):
        result = run_experiment(self._config())
        self.champion_ = result.champion
        self.champion_fitness_ = result.champion_fitness
        self.log_ = result.log
        self._controllers = build_controllers(result.champion, self.method, self.domain)
        self.n_features_in_ = self._controllers[0].packed.w_ih.shape[2]
        return self

    def predict(self, X, tasks=None):
        check_is_fitted(self, "champion_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, controller expects {self.n_features_in_}")
        tasks = np.zeros(len(X), dtype=int) if tasks is None else np.asarray(tasks, dtype=int)
        ctl = self._controllers[0]
        return np.array([ctl.select_action(x, int(t)).action for x, t in zip(X, tasks)])

    def score(self, X=None, y=None) -> float:
        """Champion fitness, re-evaluated in the domain."""
        check_is_fitted(self, "champion_")
        return evaluate_genome(self.champion_, self.method, self.domain).fitness
