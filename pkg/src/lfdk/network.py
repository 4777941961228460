"""Full network assembly: feature extraction and image generation.

Feature extraction is an initial spatial stage followed by L decomposition
kernels.  With dense connections on, kernel i consumes every previous kernel
output (newest first); with raw connections on, the LR input is appended to
every kernel input and to the final aggregation.  The initial stage output
feeds only kernel 1 and is never re-concatenated.

Image generation reshapes the aggregated features to the angular view,
reduces the angular extent to 1x1 (a strided ReLU convolution when the
angular extent is larger than 4x4 and even, then a full-extent linear
convolution), folds the output channels back per view, and pixel-shuffles
each view up by the scale factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import GAMMA, DecompositionKernel, KernelKind, SubspaceStage
from .lightfield import LightField, SubspacePair, ViewTensor, from_view, to_view
from .ops import (
    Adam,
    Conv2D,
    concat_channels,
    conv_out_size,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    relu_backward,
    split_channels,
)


class DivergenceError(RuntimeError):
    """Raised when training or inference produces non-finite values."""


@dataclass(frozen=True)
class SRNetConfig:
    scale: int = 4
    angular_u: int = 8
    angular_v: int = 8
    channels: int = 3
    feat_ch: int = 32
    depth: int = 18
    kind: KernelKind = field(default_factory=lambda: GAMMA)
    use_dense: bool = True
    use_raw: bool = True

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.angular_u < 1 or self.angular_v < 1:
            raise ValueError("angular extents must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.feat_ch < 1 or self.depth < 1:
            raise ValueError("feat_ch and depth must be >= 1")

    @property
    def shuffle_ch(self) -> int:
        return self.channels * self.scale * self.scale

    @property
    def has_reduce1(self) -> bool:
        u, v = self.angular_u, self.angular_v
        return min(u, v) > 4 and u % 2 == 0 and v % 2 == 0

    def kernel_in_ch(self, i: int) -> int:
        """Input channels of kernel i (1-based)."""
        raw = self.channels if self.use_raw else 0
        if i == 1 or not self.use_dense:
            return self.feat_ch + raw
        return self.feat_ch * (i - 1) + raw

    @property
    def aggregate_ch(self) -> int:
        feats = self.feat_ch * self.depth if self.use_dense else self.feat_ch
        return feats + (self.channels if self.use_raw else 0)


class SRNet:
    """The assembled network.  Weights are deterministic in the build seed."""

    def __init__(self, cfg: SRNetConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.initial = SubspaceStage(SubspacePair.SPATIAL, cfg.channels, cfg.feat_ch, rng, dtype)
        self.kernels = [
            DecompositionKernel(cfg.kind, cfg.kernel_in_ch(i), cfg.feat_ch, rng, dtype)
            for i in range(1, cfg.depth + 1)
        ]
        if cfg.has_reduce1:
            self.reduce1 = Conv2D(cfg.aggregate_ch, cfg.feat_ch, kernel=3, stride=2, pad=1,
                                  rng=rng, dtype=dtype)
            au = conv_out_size(cfg.angular_u, 3, 2, 1)
            av = conv_out_size(cfg.angular_v, 3, 2, 1)
            r2_in = cfg.feat_ch
        else:
            self.reduce1 = None
            au, av = cfg.angular_u, cfg.angular_v
            r2_in = cfg.aggregate_ch
        self.reduce2 = Conv2D(r2_in, cfg.angular_u * cfg.angular_v * cfg.shuffle_ch,
                              kernel=(au, av), stride=1, pad=0, rng=rng, dtype=dtype)
        self._cache = None

    # ---- parameter plumbing -------------------------------------------------

    def _named_convs(self):
        yield "initial", self.initial.conv
        for i, k in enumerate(self.kernels, 1):
            for j, stage in enumerate(k.stages, 1):
                yield f"kernel.{i:02d}.stage.{j}", stage.conv
        if self.reduce1 is not None:
            yield "reduce1", self.reduce1
        yield "reduce2", self.reduce2

    def parameters(self):
        """Ordered (name, param, grad) triples; arrays are live references."""
        out = []
        for name, conv in self._named_convs():
            out.append((f"{name}.weight", conv.w, conv.gw))
            out.append((f"{name}.bias", conv.b, conv.gb))
        return out

    def param_count(self) -> int:
        return sum(p.size for _, p, _ in self.parameters())

    def layer_param_counts(self):
        """Per-block counts in network order: initial, each kernel, reductions."""
        rows = [("initial", self.initial.conv.param_count)]
        for i, k in enumerate(self.kernels, 1):
            rows.append((f"kernel.{i:02d}", k.param_count))
        if self.reduce1 is not None:
            rows.append(("reduce1", self.reduce1.param_count))
        rows.append(("reduce2", self.reduce2.param_count))
        return rows

    def zero_grad(self):
        for _, conv in self._named_convs():
            conv.zero_grad()

    # ---- forward / backward -------------------------------------------------

    def _kernel_inputs(self, i: int, f0, outs, x):
        """Concatenation parts feeding kernel i (1-based), newest first."""
        if i == 1:
            parts, tags = [f0], [("f0",)]
        elif self.cfg.use_dense:
            parts = [outs[j] for j in range(i - 2, -1, -1)]
            tags = [("out", j) for j in range(i - 2, -1, -1)]
        else:
            parts, tags = [outs[i - 2]], [("out", i - 2)]
        if self.cfg.use_raw:
            parts.append(x)
            tags.append(("x",))
        return parts, tags

    def forward(self, x: np.ndarray, train: bool = False, trace=None) -> np.ndarray:
        """Super-resolve one (U, V, C, H, W) tensor to (U, V, C, rH, rW)."""
        cfg = self.cfg
        if x.ndim != 5:
            raise ValueError(f"expected a 5D input, got shape {x.shape}")
        u, v, c, h, w = x.shape
        if (u, v, c) != (cfg.angular_u, cfg.angular_v, cfg.channels):
            raise ValueError(
                f"input dims {u}x{v} views, {c} channels do not match the "
                f"configured {cfg.angular_u}x{cfg.angular_v}, {cfg.channels}"
            )
        x = np.ascontiguousarray(x, dtype=self.dtype)

        def note(label, arr):
            if trace is not None:
                trace.append((label, tuple(arr.shape)))

        note("input", x)
        f0 = self.initial.forward(x, train=train, trace=trace, label="initial")
        note("initial", f0)

        outs = []
        tag_lists = []
        for i, kernel in enumerate(self.kernels, 1):
            parts, tags = self._kernel_inputs(i, f0, outs, x)
            inp = concat_channels(parts)
            note(f"kernel.{i:02d}.concat", inp)
            out = kernel.forward(inp, train=train, trace=trace, label=f"kernel.{i:02d}")
            note(f"kernel.{i:02d}.out", out)
            outs.append(out)
            tag_lists.append((tags, [p.shape[2] for p in parts]))

        if cfg.use_dense:
            gen_parts = outs[::-1]
            gen_tags = [("out", j) for j in range(cfg.depth - 1, -1, -1)]
        else:
            gen_parts = [outs[-1]]
            gen_tags = [("out", cfg.depth - 1)]
        if cfg.use_raw:
            gen_parts.append(x)
            gen_tags.append(("x",))
        agg = concat_channels(gen_parts)
        note("aggregate", agg)

        av = to_view(agg, SubspacePair.ANGULAR)
        note("aggregate.angular", av.data)
        if self.reduce1 is not None:
            z1 = self.reduce1.forward(av.data, train=train)
            t1 = relu(z1)
        else:
            z1, t1 = None, av.data
        note("reduce1", t1)
        z2 = self.reduce2.forward(t1, train=train)
        note("reduce2", z2)

        # fold (H*W, U*V*S, 1, 1) back to per-view shuffle channels (U, V, S, H, W)
        s = cfg.shuffle_ch
        folded = z2.reshape(h, w, u, v, s).transpose(2, 3, 4, 0, 1)
        folded = np.ascontiguousarray(folded)
        note("fold", folded)
        shuffled = pixel_shuffle(folded.reshape(u * v, s, h, w), cfg.scale)
        y = shuffled.reshape(u, v, c, h * cfg.scale, w * cfg.scale)
        note("output", y)
        if not np.all(np.isfinite(y)):
            raise DivergenceError("non-finite activations in network output")

        if train:
            self._cache = {
                "x_shape": x.shape, "tag_lists": tag_lists,
                "gen_tags": gen_tags, "gen_widths": [p.shape[2] for p in gen_parts],
                "agg_dims": agg.shape, "z1": z1,
                "out_shapes": [o.shape for o in outs], "f0_shape": f0.shape,
            }
        else:
            self._cache = None
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Backpropagate d(loss)/d(output); accumulates parameter gradients
        and returns d(loss)/d(input)."""
        if self._cache is None:
            raise RuntimeError("backward without a preceding forward(train=True)")
        cfg = self.cfg
        cache = self._cache
        u, v, c, h, w = cache["x_shape"]
        r, s = cfg.scale, cfg.shuffle_ch

        g = pixel_unshuffle(grad_out.reshape(u * v, c, h * r, w * r), r)
        g = g.reshape(u, v, s, h, w).transpose(3, 4, 0, 1, 2)
        gz2 = np.ascontiguousarray(g).reshape(h * w, u * v * s, 1, 1)

        gt1 = self.reduce2.backward(gz2)
        if self.reduce1 is not None:
            gz1 = relu_backward(cache["z1"], gt1)
            gav = self.reduce1.backward(gz1)
        else:
            gav = gt1
        g_agg = from_view(ViewTensor(gav, SubspacePair.ANGULAR, cache["agg_dims"]))

        g_outs = [np.zeros(shape, dtype=self.dtype) for shape in cache["out_shapes"]]
        g_f0 = np.zeros(cache["f0_shape"], dtype=self.dtype)
        g_x = np.zeros(cache["x_shape"], dtype=self.dtype)

        def scatter(grad, tags, widths):
            for tag, piece in zip(tags, split_channels(grad, widths)):
                if tag[0] == "out":
                    g_outs[tag[1]] += piece
                elif tag[0] == "f0":
                    g_f0[...] += piece
                else:
                    g_x[...] += piece

        scatter(g_agg, cache["gen_tags"], cache["gen_widths"])
        for i in range(cfg.depth, 0, -1):
            g_in = self.kernels[i - 1].backward(g_outs[i - 1])
            tags, widths = cache["tag_lists"][i - 1]
            scatter(g_in, tags, widths)
        g_x[...] += self.initial.backward(g_f0)
        return g_x


def build_srnet(cfg: SRNetConfig, seed: int = 0, dtype=np.float32) -> SRNet:
    return SRNet(cfg, seed=seed, dtype=dtype)


def srnet_forward(net: SRNet, x: np.ndarray, trace=None) -> np.ndarray:
    return net.forward(x, trace=trace)


def srnet_param_count(net: SRNet) -> int:
    return net.param_count()


def train_step(net: SRNet, opt: Adam, batch, loss_fn) -> float:
    """Forward, loss, full backward and one optimizer step over a batch of
    (lr_input, hr_target) pairs.  A non-finite loss aborts the step with no
    parameter update."""
    if not batch:
        raise ValueError("empty batch")
    net.zero_grad()
    total = 0.0
    inv = 1.0 / len(batch)
    for x_lr, y_hr in batch:
        y_hat = net.forward(x_lr, train=True)
        value, grad = loss_fn(y_hr, y_hat)
        if not np.isfinite(value):
            net.zero_grad()
            raise DivergenceError(f"non-finite training loss {value!r}")
        total += value * inv
        net.backward((grad * inv).astype(net.dtype))
    params = net.parameters()
    opt.step([p for _, p, _ in params], [g for _, _, g in params])
    return total


def _estimated_forward_bytes(cfg: SRNetConfig, h: int, w: int) -> int:
    # dominant cost: the dense concat inputs plus im2col scratch per stage
    views = cfg.angular_u * cfg.angular_v
    per_plane = views * h * w * 4
    return per_plane * (cfg.aggregate_ch * 2 + cfg.feat_ch * cfg.depth + 9 * cfg.aggregate_ch)


def super_resolve(net: SRNet, lf: LightField, tile: int | None = None,
                  overlap: int = 8, memory_budget: int = 2 << 30) -> LightField:
    """Whole-image inference.

    Runs a single forward pass when the estimated working set fits the
    budget; otherwise tiles the spatial plane with ``overlap`` LR pixels of
    context, discarding each tile's outer overlap*r HR pixels except at frame
    borders.  The output is clamped to [0, 1].
    """
    cfg = net.cfg
    if (lf.u_res, lf.v_res) != (cfg.angular_u, cfg.angular_v):
        raise ValueError(
            f"angular dims {lf.u_res}x{lf.v_res} do not match the model "
            f"({cfg.angular_u}x{cfg.angular_v})"
        )
    h, w, r = lf.height, lf.width, cfg.scale
    x = lf.data.astype(net.dtype, copy=False)

    if tile is None and _estimated_forward_bytes(cfg, h, w) <= memory_budget:
        y = net.forward(x)
        return LightField(np.clip(y, 0.0, 1.0))

    if tile is None:
        tile = max(2 * overlap + 8, 48)
    tile = min(tile, h, w)
    if tile <= 2 * overlap and tile < min(h, w):
        raise ValueError(f"tile size {tile} must exceed twice the overlap {overlap}")

    def starts(extent):
        if tile >= extent:
            return [0]
        step = tile - 2 * overlap
        pos = list(range(0, extent - tile, step))
        pos.append(extent - tile)
        return pos

    out = np.zeros((lf.u_res, lf.v_res, lf.channels, h * r, w * r), dtype=net.dtype)
    for y0 in starts(h):
        for x0 in starts(w):
            patch = np.ascontiguousarray(x[:, :, :, y0:y0 + tile, x0:x0 + tile])
            sr = net.forward(patch)
            ty0 = 0 if y0 == 0 else overlap
            tx0 = 0 if x0 == 0 else overlap
            ty1 = tile if y0 + tile == h else tile - overlap
            tx1 = tile if x0 + tile == w else tile - overlap
            out[:, :, :, (y0 + ty0) * r:(y0 + ty1) * r, (x0 + tx0) * r:(x0 + tx1) * r] = \
                sr[:, :, :, ty0 * r:ty1 * r, tx0 * r:tx1 * r]
    return LightField(np.clip(out, 0.0, 1.0))
