"""
Adaptive-moment optimizer with decoupled weight decay and per-group learning rates.

Parameters are grouped by their ``group`` label; the backbone usually trains ten times slower
than the rest.
"""
from typing import (  # noqa pylint: disable=unused-import
    Dict,
    List,
    Mapping,
    NamedTuple,
    Sequence,
)

import numpy as np

from .errors import ConfigError
from .tensor import BACKBONE, PARAMETER_GROUPS, TRANSFORMER, Parameter


AdamWConfig = NamedTuple('AdamWConfig', [
    ('lr', Mapping[str, float]),  # Learning rate by parameter group.
    ('weight_decay', float),
    ('betas', Sequence[float]),
    ('eps', float),
])


def adamw_config(lr_transformer, lr_backbone=None, weight_decay=0.02, betas=(0.9, 0.999),
                 eps=1e-8):
    # type: (float, float, float, Sequence[float], float) -> AdamWConfig
    """
    Build an optimizer configuration.

    >>> round(adamw_config(3e-4).lr[BACKBONE], 12)
    3e-05
    """
    if lr_backbone is None:
        lr_backbone = lr_transformer / 10.0
    cfg = AdamWConfig(lr={BACKBONE: lr_backbone, TRANSFORMER: lr_transformer},
                      weight_decay=weight_decay, betas=tuple(betas), eps=eps)
    validate_adamw_config(cfg)
    return cfg


def validate_adamw_config(cfg):
    # type: (AdamWConfig) -> None
    """Raise a ConfigError for negative rates or out-of-range moment decays."""
    for group in PARAMETER_GROUPS:
        if cfg.lr.get(group, -1.0) < 0:
            raise ConfigError('Learning rate of group "{}" must be non-negative'.format(group))
    if cfg.weight_decay < 0:
        raise ConfigError('Weight decay must be non-negative, got {}'.format(cfg.weight_decay))
    if len(cfg.betas) != 2 or not all(0.0 <= b < 1.0 for b in cfg.betas):
        raise ConfigError('Moment decays must lie in [0, 1), got {}'.format(cfg.betas))
    if cfg.eps <= 0:
        raise ConfigError('eps must be positive')


class AdamW(object):
    """
    Adam whose weight decay shrinks parameters directly, scaled by the group learning rate.

    A group with learning rate zero is left untouched: no moment step and no decay.
    """

    def __init__(self, parameters, cfg):
        # type: (Sequence[Parameter], AdamWConfig) -> None
        validate_adamw_config(cfg)
        self.cfg = cfg
        self.parameters = list(parameters)
        self.step_count = 0
        self._first = [np.zeros(p.shape) for p in self.parameters]
        self._second = [np.zeros(p.shape) for p in self.parameters]

    def groups(self):
        # type: () -> Dict[str, List[Parameter]]
        """Return the parameters of every group."""
        grouped = {group: [] for group in PARAMETER_GROUPS}  # type: Dict[str, List[Parameter]]
        for p in self.parameters:
            grouped[p.group].append(p)
        return grouped

    def zero_grad(self):
        # type: () -> None
        """Clear every parameter's gradient."""
        for p in self.parameters:
            p.zero_grad()

    def step(self):
        # type: () -> None
        """Apply one update from the accumulated gradients."""
        self.step_count += 1
        beta1, beta2 = self.cfg.betas
        correction1 = 1.0 - beta1 ** self.step_count
        correction2 = 1.0 - beta2 ** self.step_count

        for p, first, second in zip(self.parameters, self._first, self._second):
            lr = self.cfg.lr[p.group]
            if lr == 0.0:
                continue

            grad = p.grad if p.grad is not None else np.zeros(p.shape)
            first *= beta1
            first += (1.0 - beta1) * grad
            second *= beta2
            second += (1.0 - beta2) * grad * grad

            p.data = p.data * (1.0 - lr * self.cfg.weight_decay)
            p.data = p.data - lr * (first / correction1) / (
                np.sqrt(second / correction2) + self.cfg.eps)

    def max_abs_grad(self):
        # type: () -> float
        """Return the largest gradient magnitude, for diagnostics."""
        values = [float(np.max(np.abs(p.grad))) for p in self.parameters
                  if p.grad is not None and p.grad.size]
        return max(values) if values else 0.0
