"""Training losses: pixel-wise MSE, the SAI-wise feature-space loss, and
their weighted combination.

The feature loss runs a fixed extractor over every sub-aperture image and
measures the mean squared feature difference, normalized by view count and
feature-map size.  The extractor is pluggable: an identity map (for testing,
where the feature loss reduces exactly to MSE), a small seeded conv stack
that keeps the loss self-contained, or a VGG-19 feature trunk loaded from a
weight archive.  Inputs reach the extractor unnormalized, as the network
produces them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import Conv2D, maxpool2, maxpool2_backward, relu, relu_backward

# fixed seed of the self-contained extractor preset; documented so that
# feature-loss runs are reproducible everywhere
STANDIN_SEED = 101


def _as5d(a) -> np.ndarray:
    data = a.data if hasattr(a, "data") and not isinstance(a, np.ndarray) else a
    data = np.asarray(data)
    if data.ndim != 5:
        raise ValueError(f"expected a 5D light-field tensor, got shape {data.shape}")
    return data


def mse_loss(y, y_hat):
    """Mean squared error over all elements; gradient w.r.t. y_hat."""
    y = _as5d(y)
    y_hat = _as5d(y_hat)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    diff = y_hat.astype(np.float64) - y.astype(np.float64)
    value = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return value, grad.astype(y_hat.dtype)


class FeatureExtractor:
    """Deterministic map from a batch of images to feature maps.

    ``features`` consumes (n, c, h, w); ``features_grad`` backpropagates a
    feature-space gradient through the most recent ``features`` call.
    """

    name = "abstract"
    out_channels: int
    reduction: int

    def features(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def features_grad(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class IdentityExtractor(FeatureExtractor):
    name = "identity"
    reduction = 1

    def __init__(self, channels: int = 3):
        self.out_channels = channels

    def features(self, x):
        return x

    def features_grad(self, grad):
        return grad


class StandinExtractor(FeatureExtractor):
    """Three seeded conv/ReLU layers, the first two with stride 2.

    Self-contained stand-in for a pretrained trunk: deterministic weights
    from STANDIN_SEED, spatial reduction 4, 16 output channels.
    """

    name = "standin-small"
    reduction = 4

    def __init__(self, channels: int = 3, dtype=np.float32):
        rng = np.random.default_rng(STANDIN_SEED)
        self.convs = [
            Conv2D(channels, 8, kernel=3, stride=2, pad=1, rng=rng, dtype=dtype),
            Conv2D(8, 16, kernel=3, stride=2, pad=1, rng=rng, dtype=dtype),
            Conv2D(16, 16, kernel=3, stride=1, pad=1, rng=rng, dtype=dtype),
        ]
        self.out_channels = 16
        self._pre = None

    def features(self, x):
        pre = []
        for conv in self.convs:
            z = conv.forward(x, train=True)
            pre.append(z)
            x = relu(z)
        self._pre = pre
        return x

    def features_grad(self, grad):
        for conv, z in zip(reversed(self.convs), reversed(self._pre)):
            grad = conv.backward(relu_backward(z, grad))
        return grad


# VGG-19 trunk up to the fourth activation of the fifth block: per block,
# (conv count, output channels); a 2x2 max pool sits between blocks
_VGG19_BLOCKS = ((2, 64), (2, 128), (4, 256), (4, 512), (4, 512))

VGG19_ENTRY_NAMES = tuple(
    f"conv{bi}_{ci}.{leaf}"
    for bi, (count, _) in enumerate(_VGG19_BLOCKS, 1)
    for ci in range(1, count + 1)
    for leaf in ("weight", "bias")
)


class Vgg19Features(FeatureExtractor):
    """VGG-19 convolutional trunk through relu5_4, weights from an archive.

    The archive must hold entries named conv<block>_<idx>.weight / .bias with
    shapes (out, in, 3, 3) and (out,).  No input normalization is applied.
    """

    name = "vgg19-relu5_4"
    reduction = 16
    out_channels = 512

    def __init__(self, entries: dict, channels: int = 3, dtype=np.float32):
        rng = np.random.default_rng(0)
        self.convs = []
        self._pool_after = set()
        in_ch = channels
        layer = 0
        for bi, (count, out_ch) in enumerate(_VGG19_BLOCKS, 1):
            for ci in range(1, count + 1):
                conv = Conv2D(in_ch, out_ch, kernel=3, stride=1, pad=1, rng=rng, dtype=dtype)
                wname, bname = f"conv{bi}_{ci}.weight", f"conv{bi}_{ci}.bias"
                if wname not in entries or bname not in entries:
                    raise KeyError(f"weight archive is missing {wname} / {bname}")
                w = np.asarray(entries[wname], dtype=dtype)
                b = np.asarray(entries[bname], dtype=dtype)
                if w.shape != conv.w.shape or b.shape != conv.b.shape:
                    raise ValueError(f"{wname}: expected {conv.w.shape}, got {w.shape}")
                conv.w, conv.b = w, b
                self.convs.append(conv)
                in_ch = out_ch
                layer += 1
            if bi < len(_VGG19_BLOCKS):
                self._pool_after.add(layer - 1)
        self._cache = None

    def features(self, x):
        pre, pools = [], {}
        for i, conv in enumerate(self.convs):
            z = conv.forward(x, train=True)
            pre.append(z)
            x = relu(z)
            if i in self._pool_after:
                shape = x.shape
                x, arg = maxpool2(x)
                pools[i] = (arg, shape)
        self._cache = (pre, pools)
        return x

    def features_grad(self, grad):
        pre, pools = self._cache
        for i in range(len(self.convs) - 1, -1, -1):
            if i in pools:
                arg, shape = pools[i]
                grad = maxpool2_backward(grad, arg, shape)
            grad = self.convs[i].backward(relu_backward(pre[i], grad))
        return grad


def make_extractor(name: str, channels: int = 3, archive_entries: dict | None = None,
                   dtype=np.float32) -> FeatureExtractor:
    if name == "identity":
        return IdentityExtractor(channels)
    if name == "standin-small":
        return StandinExtractor(channels, dtype=dtype)
    if name == "vgg19-relu5_4":
        if archive_entries is None:
            raise ValueError("vgg19-relu5_4 needs a weight archive")
        return Vgg19Features(archive_entries, channels, dtype=dtype)
    raise ValueError(f"unknown feature extractor {name!r}")


def lfvgg_loss(y, y_hat, phi: FeatureExtractor):
    """SAI-wise squared error in the extractor's feature space.

    Value: sum over all U*V views of ||phi(view(y)) - phi(view(y_hat))||^2,
    divided by U * V * C_l * H_l * W_l.  Gradient w.r.t. y_hat flows back
    through phi.
    """
    y = _as5d(y)
    y_hat = _as5d(y_hat)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    u, v, c, h, w = y.shape
    ref = phi.features(np.ascontiguousarray(y.reshape(u * v, c, h, w)))
    ref = np.array(ref, copy=True)
    feat = phi.features(np.ascontiguousarray(y_hat.reshape(u * v, c, h, w)))
    diff = feat.astype(np.float64) - ref.astype(np.float64)
    norm = u * v * feat.shape[1] * feat.shape[2] * feat.shape[3]
    value = float(np.sum(diff * diff) / norm)
    gfeat = ((2.0 / norm) * diff).astype(y_hat.dtype)
    grad = phi.features_grad(gfeat).reshape(y.shape)
    return value, grad


@dataclass
class LossConfig:
    """Loss selection: mode in {mse, lfvgg, combined}; lam weights the
    feature term in combined mode."""

    mode: str = "mse"
    lam: float = 5e-4
    extractor: FeatureExtractor | None = None

    def __post_init__(self):
        if self.mode not in ("mse", "lfvgg", "combined"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


def combined_loss(y, y_hat, cfg: LossConfig):
    """mse + lambda * feature loss; gradient is the same linear combination."""
    phi = cfg.extractor
    if phi is None:
        raise ValueError("combined/lfvgg loss needs an extractor")
    mv, mg = mse_loss(y, y_hat)
    fv, fg = lfvgg_loss(y, y_hat, phi)
    return mv + cfg.lam * fv, mg + np.asarray(cfg.lam * fg, dtype=mg.dtype)


def make_loss(cfg: LossConfig):
    """Bind a LossConfig into a (y, y_hat) -> (value, grad) callable."""
    if cfg.mode == "mse":
        return mse_loss
    if cfg.mode == "lfvgg":
        if cfg.extractor is None:
            raise ValueError("lfvgg loss needs an extractor")
        return lambda y, y_hat: lfvgg_loss(y, y_hat, cfg.extractor)
    return lambda y, y_hat: combined_loss(y, y_hat, cfg)
