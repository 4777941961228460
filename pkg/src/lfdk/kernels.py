"""Decomposition kernels: ordered sub-space convolution stages.

A kernel is a fixed sequence of stages, each of which reshapes the 5D tensor
into one sub-space view, applies a same-padded 3x3 convolution plus ReLU, and
reshapes back.  The stage order follows the innermost-first composition of
each kernel definition; duplicated stages carry independent weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lightfield import SubspacePair, ViewTensor, from_view, to_view
from .ops import Conv2D, relu, relu_backward

_P = SubspacePair

_FIXED_SEQUENCES: dict[str, tuple[SubspacePair, ...]] = {
    "sas": (_P.SPATIAL, _P.ANGULAR),
    "epi1": (_P.EPI_UX, _P.EPI_VY),
    "epi2": (_P.EPI_UY, _P.EPI_VX),
    "epi3": (_P.EPI_UX, _P.EPI_VY, _P.EPI_UY, _P.EPI_VX),
    "alpha": (_P.SPATIAL, _P.ANGULAR, _P.EPI_UX, _P.EPI_VY),
    "beta": (_P.SPATIAL, _P.ANGULAR, _P.EPI_UY, _P.EPI_VX),
    "gamma": (_P.SPATIAL, _P.ANGULAR, _P.EPI_UX, _P.EPI_VY, _P.EPI_UY, _P.EPI_VX),
}


@dataclass(frozen=True)
class KernelKind:
    """One of the nine kernel families; dup families carry the duplication
    count n >= 2 (n duplicated stages plus one single stage)."""

    family: str
    dup: int = 0

    def __post_init__(self):
        if self.family in _FIXED_SEQUENCES:
            if self.dup:
                raise ValueError(f"{self.family} carries no duplication count")
        elif self.family in ("dup1", "dup2"):
            if self.dup < 2:
                raise ValueError("duplication count must be >= 2")
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")

    @property
    def name(self) -> str:
        """Config/CLI string; dup names carry the connection count suffix."""
        if self.family in ("dup1", "dup2"):
            return f"{self.family}-{self.dup + 1}"
        return self.family

    def __str__(self) -> str:
        return self.name


SAS = KernelKind("sas")
EPI1 = KernelKind("epi1")
EPI2 = KernelKind("epi2")
EPI3 = KernelKind("epi3")
ALPHA = KernelKind("alpha")
BETA = KernelKind("beta")
GAMMA = KernelKind("gamma")


def dup1(n: int) -> KernelKind:
    return KernelKind("dup1", n)


def dup2(n: int) -> KernelKind:
    return KernelKind("dup2", n)


def parse_kind(name: str) -> KernelKind:
    """Parse a kernel kind string such as "gamma" or "dup1-4"."""
    name = name.strip().lower()
    if name in _FIXED_SEQUENCES:
        return KernelKind(name)
    for fam in ("dup1", "dup2"):
        if name.startswith(fam + "-"):
            try:
                conns = int(name[len(fam) + 1:])
            except ValueError:
                raise ValueError(f"bad kernel kind {name!r}") from None
            return KernelKind(fam, conns - 1)
    raise ValueError(f"unknown kernel kind {name!r}")


def stage_pairs(kind: KernelKind) -> tuple[SubspacePair, ...]:
    """The ordered sub-space pairs of one kernel, first applied first."""
    if kind.family in _FIXED_SEQUENCES:
        return _FIXED_SEQUENCES[kind.family]
    if kind.family == "dup1":
        return (_P.SPATIAL,) * kind.dup + (_P.ANGULAR,)
    return (_P.SPATIAL,) + (_P.ANGULAR,) * kind.dup


def connection_count(kind: KernelKind) -> int:
    return len(stage_pairs(kind))


class SubspaceStage:
    """Reshape to one sub-space view, 3x3 same-padded conv, ReLU, reshape back."""

    def __init__(self, pair: SubspacePair, in_ch: int, out_ch: int, rng, dtype=np.float32):
        self.pair = pair
        self.conv = Conv2D(in_ch, out_ch, kernel=3, stride=1, pad=1, rng=rng, dtype=dtype)
        self._pre = None
        self._dims = None

    def forward(self, t: np.ndarray, train: bool = False, trace=None,
                label: str = "stage") -> np.ndarray:
        vt = to_view(t, self.pair)
        if trace is not None:
            d1, d2 = self.pair.conv_axes
            trace.append((f"{label}.view({d1},{d2})", vt.data.shape))
        z = self.conv.forward(vt.data, train=train)
        if trace is not None:
            trace.append((f"{label}.conv", z.shape))
        if train:
            self._pre = z
            self._dims = t.shape
        y = relu(z)
        out_dims = (*t.shape[:2], self.conv.out_ch, *t.shape[3:])
        return from_view(ViewTensor(y, self.pair, out_dims))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        gv = to_view(grad_out, self.pair).data
        gz = relu_backward(self._pre, gv)
        gx = self.conv.backward(gz)
        src = (*self._dims[:2], self.conv.in_ch, *self._dims[3:])
        return from_view(ViewTensor(gx, self.pair, src))

    def zero_grad(self):
        self.conv.zero_grad()


def subspace_stage_forward(stage: SubspaceStage, t: np.ndarray) -> np.ndarray:
    return stage.forward(t)


class DecompositionKernel:
    """An ordered stage sequence realizing one kernel kind.

    The first stage maps in_ch -> feat_ch; every later stage feat_ch -> feat_ch.
    """

    def __init__(self, kind: KernelKind, in_ch: int, feat_ch: int, rng, dtype=np.float32):
        if in_ch < 1 or feat_ch < 1:
            raise ValueError("channel counts must be >= 1")
        self.kind = kind
        self.in_ch = in_ch
        self.feat_ch = feat_ch
        self.stages = []
        prev = in_ch
        for pair in stage_pairs(kind):
            self.stages.append(SubspaceStage(pair, prev, feat_ch, rng, dtype))
            prev = feat_ch

    def forward(self, t: np.ndarray, train: bool = False, trace=None,
                label: str = "kernel") -> np.ndarray:
        if t.shape[2] != self.in_ch:
            raise ValueError(f"kernel expects {self.in_ch} channels, got {t.shape[2]}")
        for j, stage in enumerate(self.stages, 1):
            t = stage.forward(t, train=train, trace=trace, label=f"{label}.stage.{j}")
        return t

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for stage in reversed(self.stages):
            grad_out = stage.backward(grad_out)
        return grad_out

    def zero_grad(self):
        for stage in self.stages:
            stage.zero_grad()

    @property
    def param_count(self) -> int:
        return sum(s.conv.param_count for s in self.stages)


def build_kernel(kind: KernelKind, in_ch: int, feat_ch: int, rng=None,
                 dtype=np.float32) -> DecompositionKernel:
    if rng is None:
        rng = np.random.default_rng(0)
    return DecompositionKernel(kind, in_ch, feat_ch, rng, dtype)


def kernel_forward(k: DecompositionKernel, t: np.ndarray) -> np.ndarray:
    return k.forward(t)


def kernel_param_count(k: DecompositionKernel) -> int:
    return k.param_count
