"""Key = value configuration files for network builds and training runs.

Recognized keys: scale, angular_u, angular_v, channels, feat_ch, kernels
(kind string), depth, dense, raw, seed, lr, batch, patch, steps.  Unknown
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kernels import parse_kind
from .network import SRNetConfig

_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}

_KEYS = {"scale", "angular_u", "angular_v", "channels", "feat_ch", "kernels",
         "depth", "dense", "raw", "seed", "lr", "batch", "patch", "steps"}


@dataclass(frozen=True)
class TrainSettings:
    seed: int = 0
    lr: float = 1e-4
    batch: int = 2
    patch: int = 32
    steps: int = 1000


def parse_config_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ValueError(f"line {ln}: unknown key {key!r}")
        entries[key] = value
    return entries


def _bool(value: str) -> bool:
    try:
        return _BOOL[value.lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {value!r}") from None


def load_config(path) -> tuple[SRNetConfig, TrainSettings]:
    with open(path, "r", encoding="utf-8") as f:
        entries = parse_config_text(f.read())
    cfg = SRNetConfig(
        scale=int(entries.get("scale", 4)),
        angular_u=int(entries.get("angular_u", 8)),
        angular_v=int(entries.get("angular_v", 8)),
        channels=int(entries.get("channels", 3)),
        feat_ch=int(entries.get("feat_ch", 32)),
        depth=int(entries.get("depth", 18)),
        kind=parse_kind(entries.get("kernels", "gamma")),
        use_dense=_bool(entries.get("dense", "true")),
        use_raw=_bool(entries.get("raw", "true")),
    )
    settings = TrainSettings(
        seed=int(entries.get("seed", 0)),
        lr=float(entries.get("lr", 1e-4)),
        batch=int(entries.get("batch", 2)),
        patch=int(entries.get("patch", 32)),
        steps=int(entries.get("steps", 1000)),
    )
    return cfg, settings
