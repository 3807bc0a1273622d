"""Momentum iterative FGSM under an L-infinity budget."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from redvit.config.experiment import AttackSettings
from redvit.errors import ContractError, DimensionError, NumericError
from redvit.model.tokens import AttackContext

logger = logging.getLogger(__name__)

BALL_TOLERANCE = 1e-12

ModsProvider = Callable[[int], AttackContext]
StepCallback = Callable[[int, float], None]


class GradientModel(Protocol):
    def input_gradient(
        self, image: np.ndarray, label: int, context: Optional[AttackContext] = None
    ) -> tuple[float, np.ndarray]: ...


@dataclass
class AttackState:
    x_adv: np.ndarray
    g: np.ndarray
    iteration: int = 0


def clip_project(x_adv: np.ndarray, x: np.ndarray, epsilon: float) -> np.ndarray:
    """Clamp to the epsilon ball around x, then to the valid pixel range."""
    if x_adv.shape != x.shape:
        raise DimensionError("adversarial and clean images differ in shape", x_adv.shape, x.shape)
    return np.clip(np.clip(x_adv, x - epsilon, x + epsilon), 0.0, 1.0)


def check_budget(x_adv: np.ndarray, x: np.ndarray, epsilon: float):
    if np.max(np.abs(x_adv - x), initial=0.0) > epsilon + BALL_TOLERANCE:
        raise ContractError("adversarial image left the epsilon ball")
    if x_adv.size and (x_adv.min() < 0.0 or x_adv.max() > 1.0):
        raise ContractError("adversarial image left [0, 1]")


def mi_fgsm_step(state: AttackState, grad: np.ndarray, x: np.ndarray, settings: AttackSettings) -> AttackState:
    norm = np.abs(grad).sum()
    # a zero gradient contributes nothing, its sign is 0
    direction = grad / norm if norm > 0 else grad
    g = settings.mu * state.g + direction
    x_adv = clip_project(state.x_adv + settings.step_size * np.sign(g), x, settings.epsilon)
    check_budget(x_adv, x, settings.epsilon)
    return AttackState(x_adv, g, state.iteration + 1)


def mi_fgsm_attack(
    x: np.ndarray,
    y: int,
    model: GradientModel,
    settings: AttackSettings,
    mods_provider: Optional[ModsProvider] = None,
    on_step: Optional[StepCallback] = None,
) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    state = AttackState(x.copy(), np.zeros_like(x))
    for t in range(settings.steps):
        context = mods_provider(t) if mods_provider is not None else None
        loss, grad = model.input_gradient(state.x_adv, y, context)
        if not np.all(np.isfinite(grad)) or not np.isfinite(loss):
            raise NumericError(f"non-finite gradient at attack iteration {t}")
        logger.debug("iteration %d loss %.6f", t, loss)
        if on_step is not None:
            on_step(t, loss)
        state = mi_fgsm_step(state, grad, x, settings)
    return state.x_adv
