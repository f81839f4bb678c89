"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line with its runtime."""

import csv
import json
import time

import numpy as np
import pytest

from hgm.cli import main, replay
from hgm.core import make_noise_schedule
from hgm.degradation import data_fidelity_update, random_mask
from hgm.experiments import gaussian_inpainting_task, oracle_restoration_error
from hgm.io import load_png, to_uint8
from hgm.metrics import psnr, ssim
from hgm.sampler import generate
from hgm.score import (AnalyticGaussian, AnalyticGmm, ConvScoreNet, LinearScoreHead, TrainConfig, grad_check,
                       train)
from hgm.synthetic import bilinear_fill
from hgm.transforms import Transform, h_forward, h_inverse
from test_metrics import naive_ssim

# transform used by the trained demosaicking smoke test
SMOKE_TRANSFORM = "copy"


def _csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _toml(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_01_transform_round_trips(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    exact, dwt_err = True, 0.0
    for _ in range(100):
        shape = (2 * rng.integers(1, 9), 2 * rng.integers(1, 9), rng.integers(1, 5))
        if rng.random() < 0.3:
            shape = (int(rng.integers(1, 4)),) + shape
        x = rng.standard_normal(shape) * 10 ** rng.uniform(-3, 3)
        for t in (Transform.COPY, Transform.POOL):
            exact &= np.array_equal(h_inverse(h_forward(x, t), t), x)
        dwt_err = max(dwt_err, float(np.max(np.abs(h_inverse(h_forward(x, Transform.DWT), Transform.DWT) - x))))
    elapsed = time.perf_counter() - start
    acceptance(1, "transform round trips", exact and dwt_err <= 1e-12,
               f"copy/pool bit-exact={exact}, max dwt error={dwt_err:.1e}", elapsed, 1.0)


def test_02_data_fidelity_oracle(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        op = random_mask(4, 4, 3, rng.uniform(0.2, 0.9), rng)
        h = rng.standard_normal((4, 4, 3))
        y = op.mask * rng.standard_normal((4, 4, 3))
        M = np.diag(op.mask.ravel())
        for lam in (0.0, 1.0, 1e6):
            dense = np.linalg.solve(lam * M + np.eye(48), lam * M @ y.ravel() + h.ravel())
            got = data_fidelity_update(h, y, op, lam, Transform.IDENTITY).ravel()
            worst = max(worst, float(np.max(np.abs(got - dense))))
    elapsed = time.perf_counter() - start
    acceptance(2, "data-fidelity closed form vs dense solve", worst <= 1e-10,
               f"max abs difference {worst:.1e}", elapsed, 1.0)


def test_03_dsm_recovers_analytic_score(acceptance):
    start = time.perf_counter()
    mu, s2, sigma = 0.5, 0.25, 0.5
    shape = (4, 4, 1)
    rng = np.random.default_rng(2)
    data = mu + np.sqrt(s2) * rng.standard_normal((10_000,) + shape)
    cfg = TrainConfig(learning_rate=0.05, iterations=3000, batch_size=1000, lr_decay="cosine", seed=3)
    head, _ = train(LinearScoreHead(shape), data, make_noise_schedule(sigma, sigma, 1), cfg)
    a_true, b_true = -1 / (s2 + sigma**2), mu / (s2 + sigma**2)
    ra = float(np.max(np.abs(head.a / a_true - 1)))
    rb = float(np.max(np.abs(head.b / b_true - 1)))
    elapsed = time.perf_counter() - start
    acceptance(3, "DSM recovers the Gaussian score", max(ra, rb) <= 0.05,
               f"max relative error A={ra:.3%}, b={rb:.3%}", elapsed, 60.0)


@pytest.mark.parametrize("variant", [{"norm": "instance", "film": True}, {}], ids=["default", "plain"])
def test_04_gradient_check(acceptance, variant):
    start = time.perf_counter()
    X = np.random.default_rng(4).random((2, 8, 8, 6))
    net = ConvScoreNet(6, seed=5, **variant)
    reports = [grad_check(net, X, sigma, 1e-4, n_params=100, seed=6) for sigma in (0.05, 0.5)]
    worst = max(r.max_rel_error for r in reports)
    n = min(r.n_checked for r in reports)
    elapsed = time.perf_counter() - start
    name = "instance norm + FiLM" if variant else "plain"
    acceptance(4, f"gradient check ({name} network)", worst < 1e-4 and n >= 100,
               f"max relative error {worst:.1e} over {n} parameters at two noise levels", elapsed, 60.0)


def test_05_langevin_stationarity(acceptance):
    start = time.perf_counter()
    x = generate(AnalyticGaussian(0.5, 0.01), make_noise_schedule(), (500, 4, 4, 3), np.random.default_rng(7))
    mean_err = abs(float(x.mean()) - 0.5)
    var = float(x.var())
    elapsed = time.perf_counter() - start
    acceptance(5, "Langevin stationarity", mean_err <= 0.02 and abs(var / 0.01 - 1) <= 0.25,
               f"mean error {mean_err:.4f}, variance {var:.5f}", elapsed, 120.0)


def test_06_mode_coverage(acceptance):
    start = time.perf_counter()
    gmm = AnalyticGmm([0.5, 0.5], [1.0, -1.0], [0.01, 0.01])
    x = generate(gmm, make_noise_schedule(), (400, 1, 1, 1), np.random.default_rng(8))
    pos = float(np.mean(x > 0))
    elapsed = time.perf_counter() - start
    acceptance(6, "mode coverage with annealing", 0.4 <= pos <= 0.6 and 0.4 <= 1 - pos <= 0.6,
               f"frequencies {pos:.3f} / {1 - pos:.3f}", elapsed, 120.0)


def test_07_posterior_mean_oracle(acceptance):
    # first task draw, default schedule; about one draw in ten sees fewer observed
    # pixels and misses the tolerance at 80 steps per level (see the mixing test in test_experiments)
    start = time.perf_counter()
    task = gaussian_inpainting_task(size=8, rho=0.9, var=0.01, keep_fraction=0.3, seed=0)
    ok, parts = True, []
    for t in ("identity", "copy", "pool", "dwt"):
        mx, _, rest, obs = oracle_restoration_error(task, t, "basic", trials=32, seed=10)
        good = mx <= 0.05 and rest >= obs + 5
        if t != "dwt":  # dwt is reported, not required
            ok &= good
        parts.append(f"{t}: max err {mx:.3f}, {obs:.1f}->{rest:.1f} dB")
    elapsed = time.perf_counter() - start
    acceptance(7, "posterior-mean oracle", ok, "; ".join(parts), elapsed, 300.0)


def test_08_progressive_vs_basic(acceptance):
    start = time.perf_counter()
    errs = {t: {"basic": [], "progressive": []} for t in ("copy", "pool")}
    for seed in range(16):
        task = gaussian_inpainting_task(size=8, rho=0.9, var=0.01, keep_fraction=0.3, seed=100 + seed)
        for t in errs:
            for mode in ("basic", "progressive"):
                _, mae, _, _ = oracle_restoration_error(task, t, mode, trials=32, seed=seed)
                errs[t][mode].append(mae)
    means = {t: {m: float(np.mean(v)) for m, v in d.items()} for t, d in errs.items()}
    ok = all(m["progressive"] <= m["basic"] + 0.01 for m in means.values())
    elapsed = time.perf_counter() - start
    detail = "; ".join(f"{t}: basic {m['basic']:.4f}, progressive {m['progressive']:.4f}" for t, m in means.items())
    acceptance(8, "progressive vs basic consistency", ok, detail, elapsed, 600.0)


def test_09_sample_count_trend(acceptance, tmp_path):
    start = time.perf_counter()
    cfg = _toml(tmp_path, "sweep.toml", """
[sweep]
sample_counts = [100, 1000, 10000]
seeds = 5
""")
    assert main(["sweep", "--config", cfg, "--out-dir", str(tmp_path / "sweep")]) == 0
    rows = _csv(tmp_path / "sweep" / "sweep_samples.csv")
    err = [float(r["score_error_mean"]) for r in rows]
    ok = [int(r["n"]) for r in rows] == [100, 1000, 10000] and all(b <= 1.05 * a for a, b in zip(err, err[1:]))
    elapsed = time.perf_counter() - start
    acceptance(9, "score error non-increasing in sample count", ok,
               "errors " + ", ".join(f"{e:.4g}" for e in err), elapsed, 300.0)


def test_10_metric_correctness(acceptance):
    start = time.perf_counter()
    ref = np.ones((16, 16, 3))
    p20, p40, pcap = psnr(ref - 0.1, ref), psnr(ref + 0.01, ref), psnr(ref, ref)
    psnr_ok = abs(p20 - 20) <= 1e-9 and abs(p40 - 40) <= 1e-9 and pcap == 99.0
    rng = np.random.default_rng(11)
    ssim_err = 0.0
    for shape in [(11, 11, 1), (16, 16, 3), (13, 19, 2)]:
        u = rng.random(shape)
        r = np.clip(u + 0.2 * rng.standard_normal(shape), 0, 1)
        ssim_err = max(ssim_err, abs(ssim(u, r) - naive_ssim(u, r)))
    x = rng.random((16, 16, 3))
    ident = abs(ssim(x, x) - 1.0)
    elapsed = time.perf_counter() - start
    acceptance(10, "metric correctness", psnr_ok and ssim_err <= 1e-10 and ident <= 1e-10,
               f"psnr {p20:.9f}/{p40:.9f}/{pcap}, ssim vs naive {ssim_err:.1e}, ssim(x,x)-1 {ident:.1e}",
               elapsed, 1.0)


SMOKE_DATA = """
[data]
height = 16
width = 16
channels = 3
rho = 0.8
var = 0.02
channel_corr = 0.95
"""


def test_11_trained_demosaicking_smoke(acceptance, tmp_path):
    start = time.perf_counter()
    train_cfg = _toml(tmp_path, "train.toml", f"""
seed = 0
{SMOKE_DATA}count = 200
seed = 1
[model]
transform = "{SMOKE_TRANSFORM}"
[train]
iterations = 2000
batch_size = 16
learning_rate = 2e-3
lr_decay = "cosine"
""")
    assert main(["train", "--config", train_cfg, "--out-dir", str(tmp_path / "train")]) == 0
    restore_cfg = _toml(tmp_path, "restore.toml", f"""
seed = 5
{SMOKE_DATA}count = 50
seed = 2
[model]
kind = "checkpoint"
checkpoint = "{tmp_path / 'train' / 'checkpoint.json'}"
transform = "{SMOKE_TRANSFORM}"
[degradation]
mask = "bayer"
[restore]
mode = "basic"
lambda = 1e6
""")
    out = tmp_path / "restore"
    assert main(["restore", "--config", restore_cfg, "--out-dir", str(out)]) == 0
    wins, gains = 0, []
    rows = _csv(out / "metrics.csv")
    mask = load_png(out / "mask.png")
    for r in rows:
        truth = load_png(out / "truth" / f"{r['image_id']}.png")
        y = load_png(out / "observation" / f"{r['image_id']}.png")
        restored = load_png(out / "restored" / f"{r['image_id']}.png")
        baseline = to_uint8(bilinear_fill(y, mask)) / 255.0
        pr, pb = psnr(restored, truth), psnr(baseline, truth)
        wins += pr > pb
        gains.append(pr - pb)
    frac = wins / len(rows)
    elapsed = time.perf_counter() - start
    acceptance(11, f"trained demosaicking beats bilinear ({SMOKE_TRANSFORM} lifting)",
               len(rows) == 50 and frac >= 0.8,
               f"wins on {wins}/{len(rows)} images, mean gain {np.mean(gains):.2f} dB", elapsed, 1800.0)


def test_12_determinism(acceptance, tmp_path):
    start = time.perf_counter()
    small = """
seed = 3
[data]
count = 4
height = 8
width = 8
[schedule]
levels = 3
steps = 4
"""
    runs = {
        "train": small + "[model]\ntransform = \"pool\"\nfeatures = 8\n[train]\niterations = 5\nbatch_size = 2\n",
        "generate": small + "[generate]\ncount = 3\nheight = 8\nwidth = 8\n[model]\nkind = \"correlated-gaussian\"\n",
        "sweep": small + "[sweep]\nsample_counts = [50, 100]\nseeds = 2\nheldout = 500\niterations = 100\n"
                         "batch_size = 50\nrestore_size = 4\nrestore_trials = 4\n",
    }
    checked = []
    for cmd, text in runs.items():
        out = tmp_path / cmd
        assert main([cmd, "--config", _toml(tmp_path, f"{cmd}.toml", text), "--out-dir", str(out)]) == 0
        replay(out / "manifest.json", str(tmp_path / f"{cmd}-replay"), verify=True)
        checked.append(cmd)
    ck = tmp_path / "train" / "checkpoint.json"
    for mode in ("basic", "progressive"):
        text = small + "[model]\nkind = \"correlated-gaussian\"\ntransform = \"copy\"\n"
        text += f"[degradation]\nmask = \"bayer\"\n[restore]\nmode = \"{mode}\"\nsnapshots = true\n"
        out = tmp_path / f"restore-{mode}"
        assert main(["restore", "--config", _toml(tmp_path, f"r-{mode}.toml", text), "--out-dir", str(out)]) == 0
        replay(out / "manifest.json", str(tmp_path / f"restore-{mode}-replay"), verify=True)
        checked.append(f"restore/{mode}")
    ck_text = small + (f"[model]\nkind = \"checkpoint\"\ncheckpoint = \"{ck}\"\ntransform = \"pool\"\n"
                       "[degradation]\nmask = \"random\"\n")
    out = tmp_path / "restore-ckpt"
    assert main(["restore", "--config", _toml(tmp_path, "rc.toml", ck_text), "--out-dir", str(out)]) == 0
    replay(out / "manifest.json", str(tmp_path / "restore-ckpt-replay"), verify=True)
    checked.append("restore/checkpoint")
    ev = f"[eval]\nrestored_dir = \"{out / 'restored'}\"\nreference_dir = \"{out / 'truth'}\"\n"
    assert main(["eval", "--config", _toml(tmp_path, "ev.toml", ev), "--out-dir", str(tmp_path / "eval")]) == 0
    replay(tmp_path / "eval" / "manifest.json", str(tmp_path / "eval-replay"), verify=True)
    checked.append("eval")
    n_files = sum(len(json.loads((tmp_path / d / "manifest.json").read_text())["outputs"])
                  for d in ["train", "generate", "sweep", "restore-basic", "restore-progressive", "restore-ckpt",
                            "eval"])
    elapsed = time.perf_counter() - start
    acceptance(12, "rerun from manifest is byte-identical", True,
               f"{len(checked)} runs ({', '.join(checked)}), {n_files} output files matched", elapsed, 600.0)
