"""SGD with momentum and the step learning-rate schedule.

lr(epoch) = base_lr * decay_factor ** floor(epoch / decay_period),
defaults 0.001 / 0.9 / 0.1 / 10. The schedule decays periodically;
single_decay=True caps it at one cut for the reading where the rate
drops only once.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import Tensor
from .errors import ConfigError, NumericsError, ShapeError


@dataclass
class OptimizerState:
    base_lr: float = 0.001
    momentum: float = 0.9
    decay_factor: float = 0.1
    decay_period: int = 10
    single_decay: bool = False
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.base_lr > 0.0):
            raise ConfigError(f"optimizer.base_lr must be > 0, got {self.base_lr}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(
                f"optimizer.momentum must lie in [0, 1), got {self.momentum}"
            )
        if not (0.0 < self.decay_factor <= 1.0):
            raise ConfigError(
                f"optimizer.decay_factor must lie in (0, 1], got {self.decay_factor}"
            )
        if int(self.decay_period) != self.decay_period or self.decay_period < 1:
            raise ConfigError(
                f"optimizer.decay_period must be a positive integer, got "
                f"{self.decay_period}"
            )
        self.decay_period = int(self.decay_period)


def learning_rate(state: OptimizerState, epoch: int) -> float:
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    k = epoch // state.decay_period
    if state.single_decay and k > 1:
        k = 1
    return state.base_lr * state.decay_factor**k


def sgd_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    epoch: int,
) -> None:
    """One heavy-ball update of every parameter block, in place.

    v <- momentum*v + g ; p <- p - lr(epoch)*v. Iterates in the params
    dict order, so identical inputs give bit-identical trajectories.
    """
    lr = learning_rate(state, epoch)
    mu = state.momentum
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name} shape {p.data.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient for parameter block {name}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        p_new, v_new = kernels.sgd_update(p.data, g, v, lr, mu)
        p.data = p_new
        state.velocity[name] = v_new
