"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
The LFDK_THREADS environment variable bounds per-sample parallelism during
evaluation; --seed controls every source of randomness.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import figures, io
from .config import load_config
from .lightfield import LightField, SubspacePair, extract_epi, upsample_bilinear
from .losses import LossConfig, make_extractor, make_loss
from .metrics import evaluate
from .network import DivergenceError, build_srnet, super_resolve, train_step
from .ops import Adam

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

_EPI_PAIRS = {
    "ux": SubspacePair.EPI_UX,
    "vy": SubspacePair.EPI_VY,
    "uy": SubspacePair.EPI_UY,
    "vx": SubspacePair.EPI_VX,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _threads() -> int:
    raw = os.environ.get("LFDK_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _build_parser() -> _Parser:
    p = _Parser(prog="lfdk", description="Light-field super-resolution toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("info", help="describe a model archive or LFT file")
    q.add_argument("path")

    q = sub.add_parser("downsample", help="bilinear-downsample a light field")
    q.add_argument("--scale", type=int, required=True, choices=(2, 3, 4))
    q.add_argument("input")
    q.add_argument("output")

    q = sub.add_parser("train", help="train a model on a dataset manifest")
    q.add_argument("--config", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--loss", choices=("mse", "lfvgg", "combined"), default="mse")
    q.add_argument("--lambda", dest="lam", type=float, default=5e-4)
    q.add_argument("--extractor", choices=("identity", "standin-small", "vgg19-relu5_4"),
                   default="standin-small")
    q.add_argument("--vgg-weights", default=None)
    q.add_argument("--init", default=None, help="warm-start from a model archive")
    q.add_argument("--seed", type=int, default=None, help="override the config seed")
    q.add_argument("--log", default=None, help="loss log CSV; a curve figure is "
                   "written alongside")

    q = sub.add_parser("sr", help="super-resolve a light field with a model")
    q.add_argument("--model", required=True)
    q.add_argument("--tile", type=int, default=None)
    q.add_argument("input")
    q.add_argument("output")

    q = sub.add_parser("eval", help="score a model over a dataset manifest")
    q.add_argument("--model", required=True, help="model archive, or 'bilinear'")
    q.add_argument("--data", required=True)
    q.add_argument("--scale", type=int, required=True, choices=(2, 3, 4))
    q.add_argument("--luma", action="store_true")
    q.add_argument("--out", default=None, help="CSV path; a score figure is "
                   "written alongside (default: CSV to stdout)")

    q = sub.add_parser("epi", help="render an epipolar slice to an image")
    q.add_argument("--pair", required=True, choices=tuple(_EPI_PAIRS))
    q.add_argument("--fix", required=True, help="the two fixed coordinates, e.g. 3,10")
    q.add_argument("--channel", type=int, default=0)
    q.add_argument("input")
    q.add_argument("output")

    q = sub.add_parser("grid-import", help="decode a grid-of-views image to LFT")
    q.add_argument("--u", type=int, required=True, help="vertical view count")
    q.add_argument("--v", type=int, required=True, help="horizontal view count")
    q.add_argument("input")
    q.add_argument("output")

    q = sub.add_parser("grid-export", help="encode an LFT as a grid-of-views image")
    q.add_argument("input")
    q.add_argument("output")
    return p


def _sniff_magic(path) -> bytes:
    with open(path, "rb") as f:
        return f.read(4)


def _cmd_info(args) -> int:
    magic = _sniff_magic(args.path)
    if magic == io.LFT_MAGIC:
        lf = io.read_lft(args.path)
        print(f"LFT light field: {lf.u_res}x{lf.v_res} views, {lf.channels} channels, "
              f"{lf.height}x{lf.width} pixels")
        print(f"samples: {lf.data.size} (f32)")
        return EXIT_OK
    if magic == io.LFW_MAGIC:
        net = io.load_model(args.path)
        cfg = net.cfg
        print(f"model: scale={cfg.scale} angular={cfg.angular_u}x{cfg.angular_v} "
              f"channels={cfg.channels} feat={cfg.feat_ch} depth={cfg.depth} "
              f"kernels={cfg.kind.name} dense={'on' if cfg.use_dense else 'off'} "
              f"raw={'on' if cfg.use_raw else 'off'}")
        for label, count in net.layer_param_counts():
            print(f"{label:<12} {count}")
        print(f"{'total':<12} {net.param_count()}")
        return EXIT_OK
    raise io.BadMagicError(f"unrecognized magic {magic!r}")


def _cmd_downsample(args) -> int:
    from .lightfield import downsample_bilinear

    lf = io.read_lft(args.input)
    io.write_lft(args.output, downsample_bilinear(lf, args.scale))
    return EXIT_OK


def _make_loss_cfg(args, channels: int) -> LossConfig:
    if args.loss == "mse":
        return LossConfig(mode="mse", lam=args.lam)
    entries = io.read_archive(args.vgg_weights) if args.vgg_weights else None
    name = "vgg19-relu5_4" if args.vgg_weights else args.extractor
    phi = make_extractor(name, channels=channels, archive_entries=entries)
    return LossConfig(mode=args.loss, lam=args.lam, extractor=phi)


def _cmd_train(args) -> int:
    cfg, settings = load_config(args.config)
    seed = settings.seed if args.seed is None else args.seed
    if args.init:
        net = io.load_model(args.init)
        if net.cfg != cfg:
            raise io.DataFormatError("--init model configuration differs from --config")
    else:
        net = build_srnet(cfg, seed=seed)
    loss_fn = make_loss(_make_loss_cfg(args, cfg.channels))
    opt = Adam(lr=settings.lr)
    rng = np.random.default_rng(seed)

    paths = io.read_manifest(args.data)
    if not paths:
        raise io.DataFormatError(f"manifest {args.data} lists no samples")
    cache: dict[str, LightField] = {}

    def sample(path) -> LightField:
        if path not in cache:
            cache[path] = io.load_sample(path, (cfg.angular_u, cfg.angular_v))
        return cache[path]

    log_steps, log_losses = [], []
    for step in range(1, settings.steps + 1):
        lf = sample(paths[int(rng.integers(len(paths)))])
        batch = io.sample_patches(lf, cfg.scale, patch=settings.patch,
                                  batch=settings.batch, rng=rng)
        loss = train_step(net, opt, batch, loss_fn)
        if step == 1 or step % 50 == 0 or step == settings.steps:
            print(f"step {step}/{settings.steps} loss {loss:.6g}")
        log_steps.append(step)
        log_losses.append(loss)
    io.save_model(args.out, net)
    print(f"saved model to {args.out}")
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            f.write("step,loss\n")
            for s, l in zip(log_steps, log_losses):
                f.write(f"{s},{l:.8g}\n")
        fig_path = str(Path(args.log).with_suffix(".png"))
        figures.save_loss_curve(log_steps, log_losses, fig_path)
        print(f"wrote loss log to {args.log} and curve to {fig_path}")
    return EXIT_OK


def _cmd_sr(args) -> int:
    net = io.load_model(args.model)
    lf = io.read_lft(args.input)
    out = super_resolve(net, lf, tile=args.tile)
    io.write_lft(args.output, out)
    return EXIT_OK


def _cmd_eval(args) -> int:
    if args.model == "bilinear":
        angular = None

        def sr_fn(lr):
            return upsample_bilinear(lr, args.scale)
    else:
        net = io.load_model(args.model)
        if net.cfg.scale != args.scale:
            raise io.DataFormatError(
                f"model was built for scale {net.cfg.scale}, asked for {args.scale}"
            )
        angular = (net.cfg.angular_u, net.cfg.angular_v)

        def sr_fn(lr):
            return super_resolve(net, lr)

    paths = io.read_manifest(args.data)
    report = evaluate(sr_fn, lambda p: io.load_sample(p, angular), paths,
                      scale=args.scale, luma=args.luma, threads=_threads())
    for name, msg in report.errors:
        print(f"error: {name}: {msg}", file=sys.stderr)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(report.to_csv())
        fig_path = str(Path(args.out).with_suffix(".png"))
        figures.save_eval_figure(report, fig_path)
        print(report.to_text(), end="")
        print(f"wrote report to {args.out} and figure to {fig_path}")
    else:
        print(report.to_csv(), end="")
    return EXIT_OK


def _cmd_epi(args) -> int:
    lf = io.read_lft(args.input)
    try:
        a, b = (int(part) for part in args.fix.split(","))
    except ValueError:
        raise io.DataFormatError(f"--fix wants two comma-separated ints, got {args.fix!r}")
    pair = _EPI_PAIRS[args.pair]
    sl = extract_epi(lf, pair, (a, b), args.channel)
    figures.save_epi_figure(sl, args.pair, (a, b), args.channel, args.output)
    print(f"wrote {sl.shape[0]}x{sl.shape[1]} EPI to {args.output}")
    return EXIT_OK


def _cmd_grid_import(args) -> int:
    lf = io.import_sai_grid(args.input, args.u, args.v)
    io.write_lft(args.output, lf)
    return EXIT_OK


def _cmd_grid_export(args) -> int:
    lf = io.read_lft(args.input)
    io.export_sai_grid(lf, args.output)
    return EXIT_OK


_COMMANDS = {
    "info": _cmd_info,
    "downsample": _cmd_downsample,
    "train": _cmd_train,
    "sr": _cmd_sr,
    "eval": _cmd_eval,
    "epi": _cmd_epi,
    "grid-import": _cmd_grid_import,
    "grid-export": _cmd_grid_export,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DivergenceError as exc:
        print(f"lfdk: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (io.DataFormatError, OSError, ValueError, IndexError, KeyError) as exc:
        print(f"lfdk: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
