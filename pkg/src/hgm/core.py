"""Image tensors, noise schedules and Gaussian perturbation.

Images are plain ``float64`` numpy arrays laid out as ``(height, width,
channels)``.  Most functions in the package also accept extra leading axes
(``(n, height, width, channels)``) and treat them as a batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_image(x, name="x"):
    """Return `x` as a float64 array with at least three axes, rejecting non-finite data."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim < 3:
        raise ValueError(f"{name} must have shape (..., height, width, channels), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_finite(x, name="result"):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{name} became non-finite")
    return x


@dataclass(frozen=True)
class NoiseSchedule:
    """Geometric ladder of noise levels plus the Langevin base step and steps per level.

    Attributes
    ----------
    sigmas : ndarray
        Strictly decreasing (or constant) noise levels, largest first.
    epsilon : float
        Base Langevin step; the step at level ``i`` is
        ``epsilon * sigmas[i]**2 / sigmas[-1]**2``.
    steps_per_level : int
        Langevin iterations run at every level.
    """

    sigmas: np.ndarray
    epsilon: float
    steps_per_level: int

    def __post_init__(self):
        sigmas = np.array(self.sigmas, dtype=np.float64)
        sigmas.setflags(write=False)
        object.__setattr__(self, "sigmas", sigmas)

    @property
    def levels(self):
        return len(self.sigmas)

    @property
    def sigma_first(self):
        return float(self.sigmas[0])

    @property
    def sigma_last(self):
        return float(self.sigmas[-1])

    def to_dict(self):
        return {
            "sigma_first": self.sigma_first,
            "sigma_last": self.sigma_last,
            "levels": self.levels,
            "epsilon": self.epsilon,
            "steps_per_level": self.steps_per_level,
        }

    @classmethod
    def from_dict(cls, d):
        return make_noise_schedule(
            d["sigma_first"], d["sigma_last"], d["levels"], d["epsilon"], d["steps_per_level"]
        )


def make_noise_schedule(sigma_first=1.0, sigma_last=0.01, levels=10, epsilon=2e-5, steps=80):
    """Build a geometric noise schedule from `sigma_first` down to `sigma_last`.

    Interpolation is done in log space so that every consecutive ratio is the
    same to rounding error.

    >>> make_noise_schedule(2.0, 0.5, 3, 1e-5, 10).sigmas
    array([2. , 1. , 0.5])
    """
    if not (sigma_first > 0 and sigma_last > 0):
        raise ValueError("noise levels must be positive")
    if sigma_last > sigma_first:
        raise ValueError("sigma_last must not exceed sigma_first")
    if int(levels) != levels or levels < 1:
        raise ValueError("levels must be an integer >= 1")
    if levels == 1 and sigma_first != sigma_last:
        raise ValueError("a single level requires sigma_first == sigma_last")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if int(steps) != steps or steps < 1:
        raise ValueError("steps must be a positive integer")
    levels = int(levels)
    if levels == 1:
        sigmas = np.array([float(sigma_first)])
    else:
        frac = np.arange(levels) / (levels - 1)
        sigmas = np.exp(np.log(sigma_first) + frac * (np.log(sigma_last) - np.log(sigma_first)))
        # pin the endpoints exactly
        sigmas[0] = sigma_first
        sigmas[-1] = sigma_last
    return NoiseSchedule(sigmas, float(epsilon), int(steps))


def step_size(schedule, level_index):
    """Langevin step ``alpha_i = epsilon * sigma_i**2 / sigma_L**2`` for a level."""
    if int(level_index) != level_index or not 0 <= level_index < schedule.levels:
        raise ValueError(f"level_index {level_index} out of range [0, {schedule.levels})")
    s = schedule.sigmas
    return schedule.epsilon * (s[int(level_index)] / s[-1]) ** 2


def perturb(x, sigma, rng):
    """Return ``x + sigma * z`` with ``z`` drawn i.i.d. standard normal from `rng`."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = as_image(x)
    z = rng.standard_normal(x.shape)
    if sigma == 0:
        return x.copy()
    return x + sigma * z
