"""Per-dataset hyperparameters for the node-clustering benchmarks."""

from __future__ import annotations

from .trainer import TrainConfig

# name: (beta, gamma, k, time, hidden, epochs)
_TABLE = {
    "cora": (3.0, 1.0, 21, 100, 512, 50),
    "citeseer": (7.0, 1.0, 111, 150, 512, 20),
    "amap": (5.0, 1.0, 19, 40, 512, 20),
    "bat": (0.7, 1.0, 21, 200, 64, 25),
    "eat": (6.0, 1.5, 155, 15, 512, 30),
    "corafull": (2.0, 1.0, 73, 5, 1024, 12),
}

# dense n x n trainable matrices do not fit desk-scale memory for these
OVERSIZED = frozenset({"corafull"})

PRESETS: dict[str, TrainConfig] = {
    name: TrainConfig(beta=b, gamma=g, k=k, time=float(t), hidden=h, epochs=e)
    for name, (b, g, k, t, h, e) in _TABLE.items()
}


def get_preset(name: str) -> TrainConfig:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
