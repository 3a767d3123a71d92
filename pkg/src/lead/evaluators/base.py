"""Black-box reward functions. Higher reward is always better."""
from __future__ import annotations

import threading

from ..diffusion import CdrState


class EvaluatorError(RuntimeError):
    """A reward could not be computed for a candidate."""


class Evaluator:
    """Callable reward ``F(A)`` with an exact call counter.

    Subclasses implement :meth:`_score`; the counter advances once per
    :meth:`evaluate` call whether or not scoring succeeds.
    """

    name = "evaluator"

    def __init__(self):
        self._lock = threading.Lock()
        self._queries = 0

    @property
    def query_counter(self) -> int:
        return self._queries

    def evaluate(self, a: CdrState) -> float:
        with self._lock:
            self._queries += 1
        return float(self._score(a))

    __call__ = evaluate

    def _score(self, a: CdrState) -> float:
        raise NotImplementedError

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_lock", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()
