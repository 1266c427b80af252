"""Finite-difference verification of every layer's backward pass.

Central differences in float64 with step h = 1e-4, compared against the
analytic gradients at relative tolerance 1e-4. Inputs for kinked layers
(ReLU, max pooling) are nudged away from their non-differentiable sets so
the checks are deterministic, and every configuration uses a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (BatchNorm, BilinearUp2, ConcatSkip, Conv2D, MaxPool2, ReLU,
                     ResidualSubtract, Sigmoid, TransposedConv2D, mse_loss)
from .net import Network, Node

FD_STEP = 1e-4


@dataclass
class CheckResult:
    name: str
    config: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def grad_check_network(net: Network, x: np.ndarray, target: np.ndarray,
                       tol: float = 1e-4, rng: np.random.Generator | None = None,
                       max_entries: int = 8, step: float = FD_STEP) -> float:
    """Max relative error between analytic and numeric gradients.

    Checks the input gradient and a random subset of entries of every
    parameter tensor. Batch-norm running buffers are restored afterwards so
    repeated loss evaluations do not leak state.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    saved_buffers = {k: v.copy() for k, v in net.buffers().items()}

    def loss_value() -> float:
        pred = net.forward(x, training=True)
        return mse_loss(pred, target)[0]

    tape: dict = {}
    pred = net.forward(x, training=True, tape=tape)
    _, dpred = mse_loss(pred, target)
    dx, grads = net.backward(dpred, tape)

    tensors: list[tuple[np.ndarray, np.ndarray]] = [(x, dx)]
    for key, p in net.params().items():
        tensors.append((p, grads[key]))

    worst = 0.0
    for arr, ana in tensors:
        flat = arr.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + step
            lp = loss_value()
            flat[idx] = orig - step
            lm = loss_value()
            flat[idx] = orig
            num = (lp - lm) / (2.0 * step)
            a = float(ana.reshape(-1)[idx])
            rel = abs(num - a) / max(abs(num), abs(a), 1e-8)
            worst = max(worst, rel)

    for k, v in net.buffers().items():
        v[...] = saved_buffers[k]
    return worst


def _away_from_kinks(x: np.ndarray, margin: float = 5e-3) -> np.ndarray:
    x = x.copy()
    small = np.abs(x) < margin
    x[small] += np.where(x[small] >= 0, margin, -margin)
    return x


def _distinct_pool_input(rng: np.random.Generator, shape) -> np.ndarray:
    vals = rng.permutation(np.prod(shape)).astype(np.float64)
    return (vals * 0.01).reshape(shape)


def _single(layer_factory, seed):
    rng = np.random.default_rng(seed)
    layer = layer_factory(rng)
    return Network([Node(layer, (-1,))], dtype=np.float64), rng


def standard_layer_checks(tol: float = 1e-4, seeds=range(5)) -> list[CheckResult]:
    """The fixed verification suite: every layer type, several configurations."""
    results: list[CheckResult] = []

    conv_cfgs = [(1, 2, 3, 1, 0), (3, 1, 4, 1, 1), (3, 3, 2, 2, 1), (2, 2, 3, 2, 0), (3, 2, 2, 1, 0)]
    for seed, (k, ci, co, st, pad) in zip(seeds, conv_cfgs):
        net, rng = _single(lambda r: Conv2D(k, ci, co, st, pad, rng=r, dtype=np.float64), seed)
        x = rng.standard_normal((2, ci, 6, 7))
        t = rng.standard_normal(net.forward(x).shape)
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("conv", f"k{k} c{ci}->{co} s{st} p{pad}", err, tol))

    tconv_cfgs = [(2, 2, 2, 2), (2, 4, 2, 2), (3, 2, 3, 2), (2, 3, 1, 2), (3, 1, 2, 1)]
    for seed, (k, ci, co, st) in zip(seeds, tconv_cfgs):
        net, rng = _single(lambda r: TransposedConv2D(k, ci, co, st, rng=r, dtype=np.float64), seed)
        x = rng.standard_normal((2, ci, 4, 5))
        t = rng.standard_normal(net.forward(x).shape)
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("tconv", f"k{k} c{ci}->{co} s{st}", err, tol))

    for seed in seeds:
        net, rng = _single(lambda r: ReLU(), seed)
        x = _away_from_kinks(rng.standard_normal((2, 3, 5, 4)))
        t = rng.standard_normal(x.shape)
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("relu", f"seed{seed}", err, tol))

    for seed in seeds:
        net, rng = _single(lambda r: Sigmoid(), seed)
        x = rng.standard_normal((2, 3, 5, 4))
        t = rng.standard_normal(x.shape)
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("sigmoid", f"seed{seed}", err, tol))

    for seed in seeds:
        net, rng = _single(lambda r: MaxPool2(), seed)
        x = _distinct_pool_input(rng, (2, 2, 6, 6))
        t = rng.standard_normal((2, 2, 3, 3))
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("maxpool2", f"seed{seed}", err, tol))

    for seed in seeds:
        net, rng = _single(lambda r: BatchNorm(3, dtype=np.float64), seed)
        net.nodes[0].layer.params["gamma"][...] = rng.uniform(0.5, 1.5, 3)
        net.nodes[0].layer.params["beta"][...] = rng.standard_normal(3)
        x = rng.standard_normal((4, 3, 4, 4))
        t = rng.standard_normal(x.shape)
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("batchnorm", f"seed{seed}", err, tol))

    for seed in seeds:
        net, rng = _single(lambda r: BilinearUp2(), seed)
        x = rng.standard_normal((2, 2, 3, 4))
        t = rng.standard_normal((2, 2, 6, 8))
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("up2", f"seed{seed}", err, tol))

    for seed in seeds:
        rng = np.random.default_rng(1000 + seed)
        nodes = [
            Node(Conv2D(1, 2, 2, rng=rng, dtype=np.float64), (-1,)),
            Node(Conv2D(1, 2, 3, rng=rng, dtype=np.float64), (-1,)),
            Node(ConcatSkip(), (0, 1)),
        ]
        net = Network(nodes, dtype=np.float64)
        x = rng.standard_normal((2, 2, 4, 4))
        t = rng.standard_normal((2, 5, 4, 4))
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("concat", f"seed{seed}", err, tol))

    for seed in seeds:
        rng = np.random.default_rng(2000 + seed)
        nodes = [
            Node(Conv2D(3, 2, 2, 1, 1, rng=rng, dtype=np.float64), (-1,)),
            Node(ResidualSubtract(), (-1, 0)),
        ]
        net = Network(nodes, dtype=np.float64)
        x = rng.standard_normal((2, 2, 4, 4))
        t = rng.standard_normal((2, 2, 4, 4))
        err = grad_check_network(net, x, t, tol, rng)
        results.append(CheckResult("subtract", f"seed{seed}", err, tol))

    return results


def format_report(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status}  {r.name:<10s} {r.config:<22s} max_rel_err={r.max_rel_err:.3e} tol={r.tol:g}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} layer configurations passed")
    return "\n".join(lines)
