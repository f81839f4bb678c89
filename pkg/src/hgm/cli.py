"""Command-line entry point: ``hgm {train,restore,generate,sweep,eval,replay}``.

Every command resolves its configuration (documented defaults, then an
optional TOML file, then flags), writes its outputs under ``out_dir`` and
finishes with ``manifest.json``.  The manifest holds the resolved
configuration, so ``hgm replay out/manifest.json`` reruns the command and
reproduces every other output file byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from hgm import __version__
from hgm import config as config_mod
from hgm.core import make_noise_schedule, step_size
from hgm.degradation import DegradationOp, apply, bayer_mask, block_mask, load_mask, random_mask
from hgm.io import file_sha256, load_image_dir, load_png, save_mask_png, save_png, to_uint8
from hgm.metrics import report
from hgm.sampler import RestoreConfig, generate, restore
from hgm.score import (AnalyticGaussian, AnalyticGmm, ConvScoreNet, CorrelatedGaussian, TrainConfig,
                       TrainingError, lift_gaussian, load_checkpoint, save_checkpoint, train)
from hgm.synthetic import ar1_covariance, sample_images
from hgm.transforms import Transform, h_forward, h_inverse, lifted_shape

log = logging.getLogger("hgm")

METRIC_COLUMNS = ["image_id", "mask_kind", "transform", "mode", "psnr_db", "ssim", "seed"]


class CliError(Exception):
    pass


# -- helpers ---------------------------------------------------------------

def workers():
    try:
        n = int(os.environ.get("HGM_THREADS", "1"))
    except ValueError:
        raise CliError("HGM_THREADS must be an integer") from None
    return max(n, 1)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def image_seed(seed, index):
    # per-image stream, independent of worker count and completion order
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


class Run:
    """Collects outputs, input hashes and timings for one command."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["out_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.inputs = {}
        self.timings = {}
        self.t0 = time.perf_counter()

    def path(self, rel):
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(str(rel))
        return p

    def add_input(self, path):
        self.inputs[str(path)] = file_sha256(path)

    def timed(self, name, start):
        self.timings[name] = round(time.perf_counter() - start, 6)

    def finish(self, seeds):
        self.timings["total_s"] = round(time.perf_counter() - self.t0, 6)
        outputs = {rel: file_sha256(self.out / rel) for rel in sorted(self.outputs)}
        manifest = {
            "command": self.command,
            "hgm_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "config": self.cfg,
            "seeds": seeds,
            "inputs": self.inputs,
            "outputs": outputs,
            "timings": self.timings,
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest


def schedule_from(cfg):
    s = cfg["schedule"]
    return make_noise_schedule(s["sigma_first"], s["sigma_last"], s["levels"], s["epsilon"], s["steps"])


def load_dataset(cfg, run, count=None):
    """Ground-truth images ``(ids, stack)`` from a PNG directory or the synthetic generator."""
    d = cfg["data"]
    if d["source"] == "dir":
        if not d["path"]:
            raise CliError("data.source = 'dir' needs data.path")
        try:
            ids, images = load_image_dir(d["path"], d["channels"])
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read dataset: {exc}") from None
        for p in sorted(Path(d["path"]).glob("*.png")):
            run.add_input(p)
        return ids, images
    if d["source"] != "synthetic":
        raise CliError(f"unknown data.source {d['source']!r}")
    n = d["count"] if count is None else count
    rng = np.random.default_rng(d["seed"])
    images = sample_images(n, d["height"], d["width"], d["channels"], d["rho"], d["var"],
                           d["mean"], d["channel_corr"], rng)
    return [f"img{i:04d}" for i in range(n)], images


def build_mask(cfg, shape, run):
    g = cfg["degradation"]
    h, w, c = shape
    kind = g["mask"]
    if kind == "bayer":
        if c != 3:
            raise CliError("the Bayer mask needs 3-channel images")
        op = bayer_mask(h, w)
    elif kind == "block":
        op = block_mask(h, w, c, g["coverage"])
    elif kind == "random":
        op = random_mask(h, w, c, g["keep_fraction"], np.random.default_rng([cfg["seed"], 2]))
    elif kind == "file":
        if not g["mask_path"]:
            raise CliError("degradation.mask = 'file' needs degradation.mask_path")
        run.add_input(g["mask_path"])
        op = load_mask(g["mask_path"], c, shape=(h, w))
    else:
        raise CliError(f"unknown mask kind {kind!r}")
    if g["noise_std"]:
        op = DegradationOp(op.mask, op.kind, g["noise_std"])
    return op


def build_model(cfg, shape, run):
    """Score model in lifted space plus the image-space model used by progressive mode."""
    m = cfg["model"]
    t = Transform.parse(m["transform"])
    kind = m["kind"]
    if kind == "checkpoint":
        model = _checkpoint(m["checkpoint"], t, lifted_shape(shape, t), run)
        low = None
        if m["checkpoint_lowdim"]:
            low = _checkpoint(m["checkpoint_lowdim"], Transform.IDENTITY, shape, run)
        elif t is Transform.IDENTITY:
            low = model
        return model, low
    if kind == "gaussian":
        base = AnalyticGaussian(m["mean"], m["var"])
    elif kind == "correlated-gaussian":
        d = cfg["data"]
        h, w, c = shape
        base = CorrelatedGaussian(np.full(shape, d["mean"]),
                                  ar1_covariance(h, w, c, d["rho"], d["var"], d["channel_corr"]))
    elif kind == "gmm":
        if t is not Transform.IDENTITY:
            raise CliError("the gmm oracle is only available with transform = identity")
        base = AnalyticGmm(m["weights"], m["means"], m["variances"])
        return base, base
    else:
        raise CliError(f"unknown model.kind {kind!r}")
    return lift_gaussian(base, shape, t), base


def _checkpoint(path, t, lshape, run):
    if not path:
        raise CliError("model.kind = 'checkpoint' needs model.checkpoint")
    try:
        model, meta = load_checkpoint(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint {path}: {exc}") from None
    run.add_input(path)
    if meta.get("transform") != t.value:
        raise CliError(f"checkpoint {path} was trained with transform {meta.get('transform')!r}, "
                       f"config asks for {t.value!r}")
    img = meta.get("image_shape")
    if img is not None and tuple(lifted_shape(tuple(img), t)) != tuple(lshape):
        raise CliError(f"checkpoint {path} expects images of shape {tuple(img)}")
    if getattr(model, "channels", lshape[-1]) != lshape[-1]:
        raise CliError(f"checkpoint {path} has {model.channels} channels, images need {lshape[-1]}")
    return model


# -- commands --------------------------------------------------------------

def cmd_train(cfg):
    run = Run("train", cfg)
    m, tr = cfg["model"], cfg["train"]
    t = Transform.parse(m["transform"])
    sched = schedule_from(cfg)
    ids, images = load_dataset(cfg, run)
    data = h_forward(images, t)
    net = ConvScoreNet(data.shape[-1], features=m["features"], dilations=tuple(m["dilations"]),
                       seed=m["init_seed"], norm=m["norm"], film=m["film"])
    tcfg = TrainConfig(learning_rate=tr["learning_rate"], adam_beta1=tr["adam_beta1"],
                       adam_beta2=tr["adam_beta2"], batch_size=tr["batch_size"],
                       iterations=tr["iterations"], seed=cfg["seed"], lr_decay=tr["lr_decay"],
                       all_levels=tr["all_levels"])
    start = time.perf_counter()
    try:
        model, losses = train(net, data, sched, tcfg)
    except TrainingError as exc:
        raise CliError(str(exc)) from None
    run.timed("train_s", start)

    save_checkpoint(run.path("checkpoint.json"), model, schedule=sched, transform=t,
                    seed=cfg["seed"], image_shape=images.shape[1:], extra={"train": tcfg.to_dict()})
    write_csv(run.path("loss.csv"), ["iteration", "loss"],
              [{"iteration": i + 1, "loss": float(v)} for i, v in enumerate(losses)])
    from hgm.plotting import plot_loss

    if len(losses):
        plot_loss(losses, run.path("loss.png"), baseline=data[0].size / 2)
    log.info("trained %d iterations on %d images; final loss %s", len(losses), len(ids),
             f"{losses[-1]:.4g}" if len(losses) else "n/a")
    return run.finish({"train": cfg["seed"], "init": m["init_seed"], "data": cfg["data"]["seed"]})


def _restore_one(y, op, rcfg, model, low):
    return restore(y, op, rcfg, model, model_lowdim=low)


def cmd_restore(cfg):
    run = Run("restore", cfg)
    r = cfg["restore"]
    t = Transform.parse(cfg["model"]["transform"])
    ids, truths = load_dataset(cfg, run)
    shape = truths.shape[1:]
    op = build_mask(cfg, shape, run)
    model, low = build_model(cfg, shape, run)
    if r["mode"] == "progressive" and low is None:
        raise CliError("progressive mode with a lifting transform needs model.checkpoint_lowdim")
    base = RestoreConfig(transform=t, lambda_dc=r["lambda"], mode=r["mode"], schedule=schedule_from(cfg),
                         clamp_each_step=r["clamp_each_step"], lambda_progressive=r["lambda_progressive"],
                         dc_target=r["dc_target"], snapshots=r["snapshots"])
    seeds = [image_seed(cfg["seed"], i) for i in range(len(ids))]
    # observations are quantised to 8 bits so a restore from the saved PNGs sees identical input
    obs = [np.round(255 * np.clip(apply(op, x, np.random.default_rng([s, 3])), 0, 1)) / 255
           for x, s in zip(truths, seeds)]

    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers()) as pool:
        futures = [pool.submit(_restore_one, y, op, base.with_(seed=s), model, low) for y, s in zip(obs, seeds)]
        results = [f.result() for f in futures]  # input order, whatever the completion order
    run.timed("restore_s", start)
    run.timings["per_image_s"] = [round(res.wall_time, 6) for res in results]

    save_mask_png(run.path("mask.png"), op.mask)
    rows, figure_rows = [], []
    sched = base.schedule
    for i, (image_id, x, y, res, s) in enumerate(zip(ids, truths, obs, results, seeds)):
        restored = np.clip(res.restored, 0.0, 1.0)
        save_png(run.path(f"restored/{image_id}.png"), restored)
        save_png(run.path(f"observation/{image_id}.png"), y)
        save_png(run.path(f"truth/{image_id}.png"), x)
        save_png(run.path(f"diff/{image_id}.png"), 0.5 + (restored - x))
        # metrics on what was written to disk
        stored = to_uint8(restored) / 255.0
        rep = report(stored, x)
        rows.append({"image_id": image_id, "mask_kind": op.kind, "transform": t.value, "mode": r["mode"],
                     "psnr_db": round(rep.psnr_db, 6), "ssim": round(rep.ssim, 6), "seed": s})
        figure_rows.append({"id": image_id, "truth": x, "observation": y, "restored": stored, "psnr": rep.psnr_db})
        if res.per_level_snapshots is not None:
            levels = []
            for k, snap in enumerate(res.per_level_snapshots):
                rel = f"snapshots/{image_id}/level_{k:02d}.png"
                save_png(run.path(rel), snap)
                levels.append({"level": k, "sigma": float(sched.sigmas[k]),
                               "alpha": step_size(sched, k),
                               "iterations": (k + 1) * res.iterations_run // sched.levels, "png": rel})
            with open(run.path(f"snapshots/{image_id}/snapshots.json"), "w") as fh:
                json.dump({"image_id": image_id, "levels": levels}, fh, indent=2)
                fh.write("\n")
    write_csv(run.path("metrics.csv"), METRIC_COLUMNS, rows)
    if figure_rows:
        from hgm.plotting import plot_restorations

        plot_restorations(figure_rows, run.path("report.png"))
    if rows:
        log.info("restored %d images: mean PSNR %.2f dB", len(rows), np.mean([r["psnr_db"] for r in rows]))
    return run.finish({"run": cfg["seed"], "data": cfg["data"]["seed"], "images": seeds})


def cmd_generate(cfg):
    run = Run("generate", cfg)
    g = cfg["generate"]
    t = Transform.parse(cfg["model"]["transform"])
    shape = (g["height"], g["width"], g["channels"])
    model, _ = build_model(cfg, shape, run)
    n = g["count"]
    start = time.perf_counter()
    samples = np.empty((0,) + shape)
    if n > 0:
        lifted = generate(model, schedule_from(cfg), (n,) + lifted_shape(shape, t),
                          np.random.default_rng([cfg["seed"], 0]))
        samples = np.clip(h_inverse(lifted, t), 0.0, 1.0)
    run.timed("generate_s", start)
    for i, x in enumerate(samples):
        save_png(run.path(f"samples/sample_{i:04d}.png"), x)
    if n > 0:
        from hgm.plotting import plot_samples

        plot_samples(samples, run.path("samples.png"))
    return run.finish({"run": cfg["seed"]})


def cmd_sweep(cfg):
    from hgm.experiments import sample_sweep, summarize_samples, transform_sweep
    from hgm.plotting import plot_sweep

    run = Run("sweep", cfg)
    s = cfg["sweep"]
    seeds = [cfg["seed"] + k for k in range(s["seeds"])]
    start = time.perf_counter()
    raw = sample_sweep(s["sample_counts"], seeds, shape=(s["height"], s["width"], 1), mean=s["mean"],
                       var=s["var"], sigma=s["sigma"], heldout=s["heldout"], iterations=s["iterations"],
                       batch_size=s["batch_size"], learning_rate=s["learning_rate"])
    run.timed("sample_sweep_s", start)
    summary = summarize_samples(raw)
    start = time.perf_counter()
    trows = transform_sweep(s["transforms"], tuple(s["modes"]), trials=s["restore_trials"], seed=cfg["seed"],
                            size=s["restore_size"], rho=s["restore_rho"], var=s["restore_var"],
                            keep_fraction=s["keep_fraction"])
    run.timed("transform_sweep_s", start)
    write_csv(run.path("sweep_samples_raw.csv"), ["n", "seed", "score_error"], raw)
    write_csv(run.path("sweep_samples.csv"), ["n", "n_seeds", "score_error_mean", "score_error_std"], summary)
    write_csv(run.path("sweep_transforms.csv"),
              ["transform", "mode", "oracle_max_error", "oracle_mae", "restored_psnr_db", "observation_psnr_db"],
              trows)
    plot_sweep(summary, trows, run.path("sweep.png"))
    return run.finish({"run": cfg["seed"], "sample_seeds": seeds})


def cmd_eval(cfg):
    run = Run("eval", cfg)
    e = cfg["eval"]
    channels = cfg["data"]["channels"]
    if not e["restored_dir"] or not e["reference_dir"]:
        raise CliError("eval needs eval.restored_dir and eval.reference_dir")
    ref_paths = {p.stem: p for p in sorted(Path(e["reference_dir"]).glob("*.png"))}
    res_paths = sorted(Path(e["restored_dir"]).glob("*.png"))
    pairs = [(p, ref_paths[p.stem]) for p in res_paths if p.stem in ref_paths]
    if not pairs:
        raise CliError("no restored image has a reference image with the same name")
    rows = []
    for p, q in pairs:
        run.add_input(p)
        run.add_input(q)
        u, ref = load_png(p, channels), load_png(q, channels)
        if u.shape != ref.shape:
            raise CliError(f"{p.name}: shape {u.shape} differs from reference {ref.shape}")
        rep = report(u, ref)
        rows.append({"image_id": p.stem, "psnr_db": round(rep.psnr_db, 6), "ssim": round(rep.ssim, 6)})
    write_csv(run.path("metrics.csv"), ["image_id", "psnr_db", "ssim"], rows)
    return run.finish({})


COMMANDS = {"train": cmd_train, "restore": cmd_restore, "generate": cmd_generate,
            "sweep": cmd_sweep, "eval": cmd_eval}


def replay(manifest_path, out_dir=None, verify=False):
    """Rerun the command recorded in a manifest; optionally compare output hashes."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cfg = config_mod.resolve(manifest["config"], {"out_dir": out_dir})
    new = COMMANDS[manifest["command"]](cfg)
    if verify:
        bad = sorted(k for k in set(manifest["outputs"]) | set(new["outputs"])
                     if manifest["outputs"].get(k) != new["outputs"].get(k))
        if bad:
            raise CliError(f"replay differs in {len(bad)} output(s): {', '.join(bad[:5])}")
    return new


# -- argument parsing ------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hgm", description="Score-based colour image restoration over lifted tensors.")
    p.add_argument("--version", action="version", version=f"hgm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("train", "fit a score network by denoising score matching"),
                        ("restore", "restore degraded images and report PSNR/SSIM"),
                        ("generate", "draw unconditional samples"),
                        ("sweep", "oracle sweeps over sample count and transform"),
                        ("eval", "PSNR/SSIM of existing image pairs")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("-v", "--verbose", action="store_true")
        sp.add_argument("--config", help="TOML file; flags override its values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir")
        sp.add_argument("--transform", choices=[t.value for t in Transform])
        sp.add_argument("--mode", choices=["basic", "progressive"])
        sp.add_argument("--lambda", dest="lam", type=float, help="data-fidelity weight")
        sp.add_argument("--mask", choices=["bayer", "block", "random", "file"])
        sp.add_argument("--keep-fraction", type=float)
        sp.add_argument("--snapshots", action="store_true", default=None,
                        help="dump per-level snapshots (restore only)")
    rp = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    rp.add_argument("-v", "--verbose", action="store_true")
    rp.add_argument("manifest")
    rp.add_argument("--out-dir", help="write outputs here instead of the recorded out_dir")
    rp.add_argument("--verify", action="store_true", help="fail unless every output hash matches")
    return p


def resolve_args(args):
    file_values = config_mod.load_file(args.config) if args.config else None
    return config_mod.resolve(file_values, {
        "seed": args.seed,
        "out_dir": args.out_dir,
        "model.transform": args.transform,
        "restore.mode": args.mode,
        "restore.lambda": args.lam,
        "degradation.mask": args.mask,
        "degradation.keep_fraction": args.keep_fraction,
        "restore.snapshots": args.snapshots,
    })


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            replay(args.manifest, args.out_dir, args.verify)
        else:
            COMMANDS[args.command](resolve_args(args))
    except (CliError, config_mod.ConfigError) as exc:
        print(f"hgm: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, TypeError, KeyError, FloatingPointError) as exc:
        print(f"hgm: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
