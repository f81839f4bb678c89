"""Oracle experiments behind the ``sweep`` command.

Two studies, both against closed-form answers:

* score error of a linear score head fitted by DSM on ``n`` Gaussian samples,
  measured on held-out perturbed samples against the exact smoothed score;
* restoration of a correlated-Gaussian inpainting task per lifting
  transform, compared with the exact conditional mean.
"""

from __future__ import annotations

import numpy as np

from hgm.core import make_noise_schedule
from hgm.degradation import apply, random_mask
from hgm.metrics import psnr
from hgm.sampler import RestoreConfig, restore
from hgm.score import CorrelatedGaussian, LinearScoreHead, TrainConfig, lift_gaussian, train
from hgm.synthetic import ar1_covariance, conditional_mean, sample_images
from hgm.transforms import Transform


def linear_head_score_error(n, seed, shape=(4, 4, 1), mean=0.5, var=0.25, sigma=0.5,
                            heldout=20000, iterations=3000, batch_size=1000, learning_rate=0.05):
    """Held-out ``E||s_hat(x) - grad log p_sigma(x)||^2`` after DSM on `n` samples.

    ``p_sigma`` is ``N(mean, (var + sigma^2) I)``; its score is linear, so a
    perfectly fitted head has zero error and the error left over measures
    how far `n` samples pin the head down.
    """
    shape = tuple(shape)
    rng = np.random.default_rng([seed, n])
    data = mean + np.sqrt(var) * rng.standard_normal((n,) + shape)
    sched = make_noise_schedule(sigma, sigma, 1, 1e-5, 1)
    cfg = TrainConfig(learning_rate=learning_rate, iterations=iterations,
                      batch_size=min(batch_size, n), lr_decay="cosine", seed=seed)
    head, _ = train(LinearScoreHead(shape), data, sched, cfg)

    test = np.random.default_rng([seed, n, 1])
    total = var + sigma**2
    xt = mean + np.sqrt(total) * test.standard_normal((heldout,) + shape)
    exact = -(xt - mean) / total
    err = head.score(xt, sigma) - exact
    return float(np.mean(np.sum(err**2, axis=(1, 2, 3))))


def sample_sweep(counts, seeds, **kwargs):
    """Rows ``(n, seed, score_error)`` for every count and seed, in input order."""
    return [{"n": int(n), "seed": int(s), "score_error": linear_head_score_error(int(n), int(s), **kwargs)}
            for n in counts for s in seeds]


def summarize_samples(rows):
    out = []
    for n in dict.fromkeys(r["n"] for r in rows):
        errs = np.array([r["score_error"] for r in rows if r["n"] == n])
        out.append({"n": n, "n_seeds": len(errs), "score_error_mean": float(errs.mean()),
                    "score_error_std": float(errs.std(ddof=1)) if len(errs) > 1 else 0.0})
    return out


def gaussian_inpainting_task(size=8, rho=0.9, var=0.01, mean=0.5, keep_fraction=0.3, seed=0):
    """One ground truth, its masked observation and the exact posterior mean.

    Returns a dict with ``prior`` (image space), ``op``, ``truth``, ``y`` and
    ``posterior_mean``.
    """
    rng = np.random.default_rng([seed, 0])
    cov = ar1_covariance(size, size, 1, rho, var)
    truth = sample_images(1, size, size, 1, rho, var, mean, rng=rng)[0]
    op = random_mask(size, size, 1, keep_fraction, rng)
    y = apply(op, truth)
    observed = np.broadcast_to(op.observed, y.shape)
    return {
        "prior": CorrelatedGaussian(np.full((size, size, 1), mean), cov),
        "op": op,
        "truth": truth,
        "y": y,
        "posterior_mean": conditional_mean(mean, cov, y, observed),
    }


def oracle_restoration_error(task, transform, mode="basic", trials=32, seed=0, lambda_dc=1e6, schedule=None):
    """Average `trials` restorations of the task and compare with the posterior mean.

    The trials run as one batch (independent chains, shared seed stream).
    Returns ``(max_abs_error, mean_abs_error, restored_psnr, observation_psnr)``.
    """
    t = Transform.parse(transform)
    shape = task["truth"].shape
    prior = task["prior"]
    cfg = RestoreConfig(transform=t, lambda_dc=lambda_dc, mode=mode, seed=seed,
                        schedule=schedule or make_noise_schedule())
    ys = np.broadcast_to(task["y"], (trials,) + shape)
    lowdim = prior if cfg.mode.value == "progressive" else None
    out = restore(ys, task["op"], cfg, lift_gaussian(prior, shape, t), model_lowdim=lowdim).restored
    avg = out.mean(axis=0)
    err = np.abs(avg - task["posterior_mean"])
    rest = float(np.mean([psnr(np.clip(r, 0, 1), task["truth"]) for r in out]))
    return float(err.max()), float(err.mean()), rest, psnr(task["y"], task["truth"])


def transform_sweep(transforms, modes=("basic",), trials=16, seed=0, **task_kwargs):
    task = gaussian_inpainting_task(seed=seed, **task_kwargs)
    rows = []
    for t in transforms:
        for m in modes:
            mx, mae, rp, op_ = oracle_restoration_error(task, t, m, trials, seed)
            rows.append({"transform": Transform.parse(t).value, "mode": m, "oracle_max_error": mx,
                         "oracle_mae": mae, "restored_psnr_db": rp, "observation_psnr_db": op_})
    return rows

