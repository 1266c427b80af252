"""Denoising architectures, training loop, and inference.

Three builders share the nn layer vocabulary:

* ``dae``: asymmetric denoising autoencoder. Three stride-2 convolutions
  compress to a 1/8-resolution latent map quickly; six decoder blocks then
  upsample gradually, with bilinear x2 steps at blocks 1, 3 and 5 and pure
  refinement convolutions between them (bilinear-then-conv instead of
  transposed convolutions, which tend to checkerboard). No skips.
* ``unet``: four double-conv+BN+ReLU downsampling levels with max pooling,
  a double-conv bottleneck, and a mirrored decoder of stride-2 transposed
  convolutions that halve the channel depth followed by skip concatenation
  and two more conv+BN+ReLU stages.
* ``plaincnn``: DnCNN-style baseline; a stack of conv+BN+ReLU feature
  layers and a linear head that predicts a residual subtracted from the
  input.

All three end in a sigmoid so outputs always lie in [0, 1]. Training is
plain shuffled mini-batch Adam on MSE; PSNR is a monotone function of MSE
for fixed peak, so this optimizes the reported metric directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, InvalidInputError
from .image import as_image, load_imf1
from .metrics import psnr
from .nn.layers import (BatchNorm, BilinearUp2, ConcatSkip, Conv2D, MaxPool2, ReLU,
                        ResidualSubtract, Sigmoid, TransposedConv2D, mse_loss)
from .nn.net import Network, Node
from .nn.optim import Adam
from .noise import DatasetManifest

ARCHITECTURES = ("dae", "unet", "plaincnn")


@dataclass(frozen=True)
class ArchConfig:
    arch: str
    base_channels: int = 16
    height: int = 128
    width: int = 128
    depth: int | None = None  # plaincnn stack depth

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.arch!r}; choose from {ARCHITECTURES}")
        if self.height % 16 or self.width % 16:
            raise ConfigError(f"dims must be multiples of 16, got {self.height}x{self.width}")
        if self.base_channels < 4:
            raise ConfigError("base_channels must be >= 4")
        if self.depth is not None and self.depth < 2:
            raise ConfigError("plaincnn depth must be >= 2")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 16
    lr: float = 1e-4
    seed: int = 0
    val_fraction: float = 0.1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("epochs must be >= 0, batch_size >= 1, lr > 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")


class _GraphBuilder:
    def __init__(self, dtype):
        self.nodes: list[Node] = []
        self.dtype = dtype

    def add(self, layer, *inputs: int) -> int:
        if not inputs:
            inputs = (len(self.nodes) - 1,)
        self.nodes.append(Node(layer, tuple(inputs)))
        return len(self.nodes) - 1

    def network(self) -> Network:
        return Network(self.nodes, dtype=self.dtype)


def build_dae(cfg: ArchConfig, rng: np.random.Generator | None = None, dtype=np.float32) -> Network:
    bc = cfg.base_channels
    g = _GraphBuilder(dtype)
    ch = 1
    prev = -1
    for width in (bc, 2 * bc, 4 * bc):
        prev = g.add(Conv2D(3, ch, width, stride=2, pad=1, rng=rng, dtype=dtype), prev)
        prev = g.add(ReLU())
        ch = width
    dec_widths = (3 * bc, 2 * bc, (3 * bc) // 2, bc, bc // 2, max(bc // 4, 1))
    for j, width in enumerate(dec_widths):
        if j % 2 == 0:  # x2 at blocks 1, 3, 5 -> net x8 back to input resolution
            prev = g.add(BilinearUp2())
        prev = g.add(Conv2D(3, ch, width, stride=1, pad=1, rng=rng, dtype=dtype))
        prev = g.add(ReLU())
        ch = width
    g.add(Conv2D(3, ch, 1, stride=1, pad=1, rng=rng, dtype=dtype))
    g.add(Sigmoid())
    return g.network()


def build_unet(cfg: ArchConfig, rng: np.random.Generator | None = None, dtype=np.float32) -> Network:
    bc = cfg.base_channels
    widths = (bc, 2 * bc, 4 * bc, 8 * bc)
    g = _GraphBuilder(dtype)

    def conv_bn_relu(ci, co, prev):
        i = g.add(Conv2D(3, ci, co, stride=1, pad=1, rng=rng, dtype=dtype), prev)
        g.add(BatchNorm(co, dtype=dtype), i)
        return g.add(ReLU())

    prev = -1
    ch = 1
    skips: list[tuple[int, int]] = []
    for width in widths:
        prev = conv_bn_relu(ch, width, prev)
        prev = conv_bn_relu(width, width, prev)
        skips.append((prev, width))
        prev = g.add(MaxPool2(), prev)
        ch = width
    prev = conv_bn_relu(ch, 2 * ch, prev)
    prev = conv_bn_relu(2 * ch, 2 * ch, prev)
    ch = 2 * ch
    for skip_id, width in reversed(skips):
        prev = g.add(TransposedConv2D(2, ch, width, stride=2, rng=rng, dtype=dtype), prev)
        prev = g.add(ConcatSkip(), prev, skip_id)
        prev = conv_bn_relu(2 * width, width, prev)
        prev = conv_bn_relu(width, width, prev)
        ch = width
    g.add(Conv2D(1, ch, 1, stride=1, pad=0, rng=rng, dtype=dtype))
    g.add(Sigmoid())
    return g.network()


def build_plain_cnn(cfg: ArchConfig, rng: np.random.Generator | None = None, dtype=np.float32) -> Network:
    bc = cfg.base_channels
    depth = cfg.depth if cfg.depth is not None else 10
    width = 3 * bc
    g = _GraphBuilder(dtype)
    prev = -1
    ch = 1
    for _ in range(depth):
        prev = g.add(Conv2D(3, ch, width, stride=1, pad=1, rng=rng, dtype=dtype), prev)
        prev = g.add(BatchNorm(width, dtype=dtype))
        prev = g.add(ReLU())
        ch = width
    head = g.add(Conv2D(3, ch, 1, stride=1, pad=1, rng=rng, dtype=dtype))
    g.add(ResidualSubtract(), -1, head)
    g.add(Sigmoid())
    return g.network()


_BUILDERS = {"dae": build_dae, "unet": build_unet, "plaincnn": build_plain_cnn}


def build_network(cfg: ArchConfig, rng: np.random.Generator | None = None, dtype=np.float32) -> Network:
    return _BUILDERS[cfg.arch](cfg, rng=rng, dtype=dtype)


def load_pairs(manifest: DatasetManifest, root, shard: str, kind: str | None = None):
    """Load one shard into memory as (noisy, clean) arrays of shape (N,1,H,W)."""
    root = Path(root)
    items = [it for it in manifest.shard_items(shard) if kind is None or it["kind"] == kind]
    if not items:
        raise InvalidInputError(f"no items in shard {shard!r} (kind={kind!r})")
    items.sort(key=lambda it: it["index"])
    noisy = np.stack([load_imf1(root / it["noisy"]) for it in items])[:, None]
    clean = np.stack([load_imf1(root / it["clean"]) for it in items])[:, None]
    return noisy, clean, items


def _batches(indices: np.ndarray, size: int):
    for i in range(0, len(indices), size):
        yield indices[i : i + size]


def dataset_psnr(net: Network, noisy: np.ndarray, clean: np.ndarray, batch_size: int = 16) -> float:
    """Mean per-image PSNR of the network over an in-memory array pair."""
    vals = []
    for b in _batches(np.arange(len(noisy)), batch_size):
        pred = net.forward(noisy[b], training=False)
        for j in range(len(b)):
            v = psnr(clean[b][j, 0], pred[j, 0])
            if np.isfinite(v):
                vals.append(v)
    return float(np.mean(vals)) if vals else float("inf")


def train(
    net: Network,
    noisy: np.ndarray,
    clean: np.ndarray,
    cfg: TrainConfig,
    out_dir=None,
) -> list[dict]:
    """Shuffled mini-batch Adam training; returns per-epoch history rows.

    Deterministic for a fixed seed: the validation split draws from
    ``default_rng((seed, 2))`` and epoch e shuffles with
    ``default_rng((seed, 1, e))``. A non-finite loss aborts with
    DivergenceError after writing the last epoch-end state to
    ``last_good.nnc1`` (when ``out_dir`` is given).
    """
    n = len(noisy)
    if n == 0 or len(clean) != n:
        raise InvalidInputError("noisy/clean arrays must be non-empty and parallel")
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    n_val = int(round(cfg.val_fraction * n))
    perm = np.random.default_rng((cfg.seed, 2)).permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if len(train_idx) == 0:
        raise ConfigError("validation split leaves no training items")
    if cfg.batch_size > len(train_idx):
        raise ConfigError(
            f"batch_size {cfg.batch_size} exceeds training-set size {len(train_idx)}"
        )

    opt = Adam(net.params(), lr=cfg.lr)
    snapshot = net.copy_state()
    history: list[dict] = []
    steps = 0
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng((cfg.seed, 1, epoch)).permutation(train_idx)
        tot = 0.0
        cnt = 0
        for b in _batches(order, cfg.batch_size):
            tape: dict = {}
            # divergence is detected explicitly; silence the float warnings
            # that precede a non-finite loss
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                pred = net.forward(noisy[b], training=True, tape=tape)
                loss, dpred = mse_loss(pred, clean[b])
                if not np.isfinite(loss):
                    if out is not None:
                        net.load_state(snapshot)
                        net.save(out / "last_good.nnc1")
                    raise DivergenceError(f"non-finite loss at epoch {epoch} step {steps + 1}")
                _, grads = net.backward(dpred, tape)
                opt.step(grads)
            steps += 1
            tot += loss * len(b)
            cnt += len(b)
        row = {"epoch": epoch, "steps": steps, "train_loss": tot / cnt,
               "val_loss": None, "val_psnr": None}
        if n_val:
            vtot = 0.0
            vals = []
            for b in _batches(val_idx, cfg.batch_size):
                pred = net.forward(noisy[b], training=False)
                vloss, _ = mse_loss(pred, clean[b])
                vtot += vloss * len(b)
                for j in range(len(b)):
                    v = psnr(clean[b][j, 0], pred[j, 0])
                    if np.isfinite(v):
                        vals.append(v)
            row["val_loss"] = vtot / n_val
            row["val_psnr"] = float(np.mean(vals)) if vals else None
        history.append(row)
        snapshot = net.copy_state()
        if out is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            net.save(out / f"epoch_{epoch:04d}.nnc1")
    return history


def save_history(history: list[dict], path) -> None:
    cols = ("epoch", "steps", "train_loss", "val_loss", "val_psnr")
    lines = [",".join(cols)]
    for row in history:
        lines.append(",".join("" if row[c] is None else repr(row[c]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def denoise(net: Network, img) -> np.ndarray:
    """Run a trained network over one image of arbitrary size.

    Dims that are not multiples of 16 are symmetric-padded up, inferred,
    and cropped back.
    """
    img = as_image(img)
    h, w = img.shape
    ph = (-h) % 16
    pw = (-w) % 16
    x = np.pad(img, ((0, ph), (0, pw)), mode="symmetric") if ph or pw else img
    y = net.forward(x[None, None], training=False)[0, 0]
    return np.ascontiguousarray(y[:h, :w], dtype=np.float32)


def save_checkpoint(net: Network, path) -> None:
    net.save(path)


def load_checkpoint(path) -> Network:
    return Network.load(path)
