"""Denoising score matching objective and Adam training loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, iteration, loss):
        super().__init__(f"training diverged at iteration {iteration} (loss={loss})")
        self.iteration = iteration
        self.loss = loss


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    iterations: int = 1000
    seed: int = 0
    lr_decay: str = "constant"  # or "cosine"
    all_levels: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.lr_decay not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_decay {self.lr_decay!r}")

    def to_dict(self):
        return asdict(self)


def _stack(batch):
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or len(arr) == 0:
        raise ValueError("batch must be a non-empty stack of (height, width, channels) tensors")
    return arr


def dsm_loss(model, batch, schedule, rng, all_levels=False, with_grad=True):
    """Monte Carlo denoising score matching loss.

    Each batch element gets one noise level drawn uniformly from the schedule
    and one perturbation ``z``; its loss is ``0.5 * ||sigma * s(x + sigma z, sigma) + z||^2``.
    With ``all_levels=True`` every element is instead perturbed at every level
    and the per-level losses are averaged.

    Returns
    -------
    loss : float
    grad : ndarray or None
        Gradient with respect to ``model.theta`` when the model is trainable
        and `with_grad` is set.
    """
    x = _stack(batch)
    n = len(x)
    sigmas = schedule.sigmas
    if all_levels:
        levels = np.repeat(np.arange(len(sigmas)), n)
        x = np.tile(x, (len(sigmas), 1, 1, 1))
    else:
        levels = rng.integers(0, len(sigmas), size=n)
    z = rng.standard_normal(x.shape)
    sigma = sigmas[levels]
    s4 = sigma.reshape(-1, 1, 1, 1)
    x_noisy = x + s4 * z
    trainable = with_grad and hasattr(model, "scaled_score_and_vjp")
    if trainable:
        out, vjp = model.scaled_score_and_vjp(x_noisy, sigma)
    else:
        out = s4 * model.score(x_noisy, sigma)
    resid = out + z
    m = len(x)
    loss = 0.5 * float(np.sum(resid ** 2)) / m
    grad = vjp(resid / m) if trainable else None
    return loss, grad


class Adam:
    def __init__(self, size, cfg):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad, lr):
        c = self.cfg
        self.t += 1
        self.m = c.adam_beta1 * self.m + (1 - c.adam_beta1) * grad
        self.v = c.adam_beta2 * self.v + (1 - c.adam_beta2) * grad ** 2
        m_hat = self.m / (1 - c.adam_beta1 ** self.t)
        v_hat = self.v / (1 - c.adam_beta2 ** self.t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + c.adam_eps)


def _lr_at(cfg, it):
    if cfg.lr_decay == "cosine" and cfg.iterations > 1:
        return cfg.learning_rate * 0.5 * (1 + np.cos(np.pi * it / cfg.iterations))
    return cfg.learning_rate


def train(model, dataset, schedule, cfg, callback=None):
    """Fit a trainable score model to `dataset` by Adam on the DSM loss.

    The input model is left untouched; a trained copy is returned together
    with the per-iteration losses.  Everything random is drawn from
    ``numpy.random.default_rng(cfg.seed)``.
    """
    data = _stack(dataset)
    if data.shape[1:] != data[0].shape:
        raise ValueError("all dataset tensors must have equal shape")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.n_params, cfg)
    n = len(data)
    losses = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        if cfg.batch_size >= n:
            batch = data
        else:
            batch = data[rng.choice(n, cfg.batch_size, replace=False)]
        with np.errstate(over="ignore", invalid="ignore"):  # non-finite values are caught just below
            loss, grad = dsm_loss(model, batch, schedule, rng, all_levels=cfg.all_levels)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingError(it, loss)
        opt.step(model.theta, grad, _lr_at(cfg, it))
        losses[it] = loss
        if callback is not None:
            callback(it, loss)
        if log.isEnabledFor(logging.DEBUG) and it % 100 == 0:
            log.debug("iter %d loss %.6f", it, loss)
    return model, losses
