"""Python access to the shopping simulator core.

The extension speaks JSON strings; this layer turns them into dicts.
"""

import json

from . import _shopsim
from ._shopsim import (
    BackendError,
    Error,
    NotFoundError,
    ProtocolError,
    StateError,
    ValidationError,
    generate_catalog,
    generate_tasks,
)

__version__ = _shopsim.__version__

SCENARIOS = ("single_turn", "single_turn_pers", "multi_turn", "multi_turn_pers")


def score(target, outcome=None):
    """Reward breakdown for a target spec and an optional purchase (dicts)."""
    return json.loads(_shopsim.score(json.dumps(target), None if outcome is None else json.dumps(outcome)))


class World:
    """A catalog plus its task set, loaded once and shared by episodes."""

    def __init__(self, catalog, tasks):
        self._w = _shopsim.World(str(catalog), str(tasks))

    def task_ids(self):
        return self._w.task_ids()

    def task(self, task_id):
        return json.loads(self._w.task(task_id))

    def __len__(self):
        return self._w.product_count()

    def evaluate(self, policy="oracle", scenarios=(), seed=0, limit=0):
        return json.loads(self._w.evaluate(policy, list(scenarios), seed, limit))

    def replay(self, trace_jsonl):
        return json.loads(self._w.replay(trace_jsonl))

    def episode(self, task_id, scenario="single_turn", seed=0, fixed_time=False):
        return Episode(self, task_id, scenario, seed, fixed_time)


class Episode:
    def __init__(self, world, task_id, scenario="single_turn", seed=0, fixed_time=False):
        self._e = _shopsim.Episode(world._w, task_id, scenario, seed, fixed_time)

    def reset(self):
        return json.loads(self._e.reset())

    def step(self, action):
        return json.loads(self._e.step(action))

    @property
    def terminal(self):
        return self._e.terminal

    @property
    def steps(self):
        return self._e.steps

    def reward(self):
        return json.loads(self._e.reward())

    def trace(self):
        return self._e.trace()


__all__ = [
    "BackendError",
    "Episode",
    "Error",
    "NotFoundError",
    "ProtocolError",
    "SCENARIOS",
    "StateError",
    "ValidationError",
    "World",
    "generate_catalog",
    "generate_tasks",
    "score",
]
