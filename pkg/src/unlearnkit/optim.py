"""SGD/Adam updates over the flat parameter vector, with boolean masking.

Masking zeroes the gradient at unselected indices before any moment update,
so masked-out parameters (and their Adam moments) never move: the delta
outside the mask is exactly zero, not merely small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Model


@dataclass
class ParamMask:
    """Boolean selector over the model's flat trainable vector."""

    selected: np.ndarray

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=bool).ravel()

    def __len__(self) -> int:
        return self.selected.size

    @classmethod
    def all_true(cls, n: int) -> "ParamMask":
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def top_fraction(cls, scores: np.ndarray, fraction: float) -> "ParamMask":
        """Select the top ``fraction`` of indices by score, ties broken by index."""
        scores = np.asarray(scores, dtype=np.float64).ravel()
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
        k = max(1, int(round(fraction * scores.size)))
        order = np.argsort(-scores, kind="stable")
        mask = np.zeros(scores.size, dtype=bool)
        mask[order[:k]] = True
        return cls(mask)


@dataclass
class OptimizerState:
    """Per-run optimizer state; identical seeds and updates replay bit-identically."""

    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.kind!r} (sgd or adam)")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")

    @classmethod
    def sgd(cls, learning_rate: float) -> "OptimizerState":
        return cls("sgd", learning_rate)

    @classmethod
    def adam(cls, learning_rate: float, **kwargs) -> "OptimizerState":
        return cls("adam", learning_rate, **kwargs)


def optimizer_step(state: OptimizerState, model: Model, gradient: np.ndarray,
                   mask: ParamMask | None = None) -> Model:
    """Apply one descent update in place; pass a negated gradient for ascent."""
    gradient = np.asarray(gradient, dtype=np.float64).ravel()
    n = model.num_trainable()
    if gradient.size != n:
        raise ShapeError(f"gradient has {gradient.size} entries, model has {n}")
    if mask is not None:
        if len(mask) != n:
            raise ShapeError(f"mask has {len(mask)} entries, model has {n}")
        gradient = np.where(mask.selected, gradient, 0.0)

    if state.kind == "sgd":
        state.step += 1
        update = state.learning_rate * gradient
    else:
        if state.m is None:
            state.m = np.zeros(n)
            state.v = np.zeros(n)
        elif state.m.size != n:
            raise ShapeError("optimizer state was created for a different model")
        state.step += 1
        state.m = state.beta1 * state.m + (1.0 - state.beta1) * gradient
        state.v = state.beta2 * state.v + (1.0 - state.beta2) * gradient * gradient
        m_hat = state.m / (1.0 - state.beta1 ** state.step)
        v_hat = state.v / (1.0 - state.beta2 ** state.step)
        update = state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    if mask is not None:
        # Moment history must not leak into masked-out coordinates either.
        update = np.where(mask.selected, update, 0.0)
    model.set_param_vector(model.param_vector() - update)
    return model
