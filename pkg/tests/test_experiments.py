import numpy as np
import pytest

from hgm.experiments import (gaussian_inpainting_task, linear_head_score_error, oracle_restoration_error,
                             sample_sweep, summarize_samples)

FAST = dict(heldout=2000, iterations=300, batch_size=500, learning_rate=0.05)


class TestSampleSweep:
    def test_repeatable(self):
        a = linear_head_score_error(100, 3, **FAST)
        b = linear_head_score_error(100, 3, **FAST)
        assert a == b

    def test_more_samples_less_error(self):
        rows = sample_sweep([50, 5000], [0, 1], **FAST)
        s = summarize_samples(rows)
        assert [r["n"] for r in s] == [50, 5000]
        assert s[1]["score_error_mean"] < s[0]["score_error_mean"]
        assert all(r["n_seeds"] == 2 for r in s)

    def test_summary_single_seed(self):
        s = summarize_samples([{"n": 10, "seed": 0, "score_error": 1.5}])
        assert s == [{"n": 10, "n_seeds": 1, "score_error_mean": 1.5, "score_error_std": 0.0}]


class TestOracleRestoration:
    def test_task_is_consistent(self):
        task = gaussian_inpainting_task(size=4, seed=1)
        obs = task["op"].mask == 1
        np.testing.assert_array_equal(task["posterior_mean"][obs], task["y"][obs])
        assert task["truth"].shape == (4, 4, 1)

    @pytest.mark.parametrize("t", ["identity", "pool"])
    def test_close_to_posterior_mean(self, t):
        task = gaussian_inpainting_task(size=4, seed=2)
        mx, mae, rest, obs = oracle_restoration_error(task, t, trials=32, seed=1)
        assert mx < 0.06 and mae < mx
        assert rest > obs


class TestMixing:
    def test_bias_shrinks_with_more_steps(self):
        """A sparsely observed draw (10 of 64 pixels kept) keeps a bias at the default
        80 steps per level that longer chains remove: the late, small-step levels are
        too short to relax the weakly constrained smooth modes."""
        from hgm.core import make_noise_schedule

        task = gaussian_inpainting_task(size=8, seed=9)
        assert task["op"].mask.sum() == 10
        short = oracle_restoration_error(task, "identity", trials=64, seed=10)[0]
        long = oracle_restoration_error(task, "identity", trials=64, seed=10,
                                        schedule=make_noise_schedule(steps=1280))[0]
        assert short > 0.05
        assert long < 0.5 * short
