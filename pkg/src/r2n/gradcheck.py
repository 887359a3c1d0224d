"""Finite-difference verification of every backward pass.

Each suite builds seeded float64 inputs, projects the operator output onto a
fixed random direction to get a scalar, and compares the analytic gradient
with central differences.  Kernels must agree to 1e-4 relative error, the
end-to-end network to 1e-3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import gp_pooling as gp
from . import layers as L
from . import tensor_core
from . import warp as W

KERNEL_TOL = 1e-4
END_TO_END_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    threshold: float
    worst_tensor: str
    worst_index: tuple

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.threshold

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name:<22} max_rel_err={self.max_rel_error:.3e} threshold={self.threshold:.0e} "
                f"{status} worst={self.worst_tensor}{list(self.worst_index)}")


def finite_diff_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-5,
                     indices=None) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` w.r.t. ``x`` (perturbed in place).

    ``indices`` restricts the probe to a subset of flat positions; other
    entries of the result stay 0.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in (range(flat.size) if indices is None else indices):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    a = np.asarray(analytic, np.float64)
    n = np.asarray(numeric, np.float64)
    return np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)


def _compare(name, threshold, pairs) -> CheckResult:
    """``pairs``: (tensor label, analytic, numeric, probed flat indices or None)."""
    worst = (0.0, "", ())
    for label, a, n, idx in pairs:
        err = relative_error(a, n)
        if idx is not None:
            mask = np.zeros(err.size, bool)
            mask[np.asarray(idx)] = True
            err = np.where(mask.reshape(err.shape), err, 0.0)
        k = int(np.argmax(err))
        if err.reshape(-1)[k] >= worst[0]:
            worst = (float(err.reshape(-1)[k]), label, np.unravel_index(k, err.shape))
    return CheckResult(name, worst[0], threshold, worst[1], tuple(int(i) for i in worst[2]))


def _layer_check(name, layer, x, rng, train=False, sample=None):
    out = layer.forward(x, train)
    proj = rng.standard_normal(out.shape)
    layer.forward(x, train)
    dx = layer.backward(proj)

    def f():
        return float(np.sum(layer.forward(x, train) * proj))

    pairs = [("input", dx, finite_diff_grad(f, x), None)]
    for pname, p in layer.params.items():
        idx = None
        if sample is not None and p.size > sample:
            idx = rng.choice(p.size, sample, replace=False)
        pairs.append((pname, layer.grads[pname], finite_diff_grad(f, p, indices=idx), idx))
    return _compare(name, KERNEL_TOL, pairs)


def check_conv(rng):
    layer = L.Conv2d(2, 3, 3, 1, 1, rng)
    return _layer_check("conv", layer, rng.standard_normal((1, 2, 5, 5)), rng)


def check_conv_strided(rng):
    layer = L.Conv2d(2, 2, 3, 2, 0, rng)
    return _layer_check("conv.strided", layer, rng.standard_normal((2, 2, 7, 7)), rng)


def check_maxpool(rng):
    return _layer_check("maxpool", L.MaxPool2d(2, 2), rng.standard_normal((2, 2, 6, 6)), rng)


def check_fc(rng):
    return _layer_check("fc", L.Linear(7, 4, rng), rng.standard_normal((3, 7)), rng)


def check_relu(rng):
    x = rng.standard_normal((4, 9))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    return _layer_check("relu", L.ReLU(), x, rng)


def check_sigmoid(rng):
    return _layer_check("sigmoid", L.Sigmoid(), 3 * rng.standard_normal((4, 6)), rng)


def check_dropout(rng):
    layer = L.Dropout(0.5, rng)
    x = rng.standard_normal((4, 10))
    layer.fixed_mask = rng.random(x.shape) >= 0.5
    return _layer_check("dropout", layer, x, rng, train=True)


def check_euclidean(rng):
    pred, target = rng.random((6, 1)), rng.random((6, 1))
    _, g = L.euclidean_loss(pred, target)
    num = finite_diff_grad(lambda: L.euclidean_loss(pred, target)[0], pred)
    return _compare("euclidean_loss", KERNEL_TOL, [("pred", g, num, None)])


def check_cross_entropy(rng):
    logits, labels = rng.standard_normal((5, 10)), rng.integers(0, 10, 5)
    _, g = L.cross_entropy_loss(logits, labels)
    num = finite_diff_grad(lambda: L.cross_entropy_loss(logits, labels)[0], logits)
    return _compare("cross_entropy_loss", KERNEL_TOL, [("logits", g, num, None)])


def check_gp_pool(rng):
    spec = gp.PolarGridSpec.uniform(math.radians(5), 1.0)
    x = rng.standard_normal((1, 1, 12, 12))
    binning = gp.plan_binning(12, 12, spec)
    out, switches = gp.gp_pool_forward(x, binning)
    proj = rng.standard_normal(out.shape)
    dx = gp.gp_pool_backward(proj, switches, x.shape)

    def f():
        return float(np.sum(gp.gp_pool_forward(x, binning)[0] * proj))

    return _compare("gp_pool", KERNEL_TOL, [("input", dx, finite_diff_grad(f, x), None)])


def _warp_setup(rng):
    x = rng.standard_normal((1, 1, 8, 8))
    theta = np.array([rng.uniform(-math.pi, math.pi)])
    warp = W.RotationWarp()
    proj = rng.standard_normal(x.shape)
    warp.forward(x, theta)
    dx, dtheta = warp.backward(proj)

    def f():
        return float(np.sum(W.RotationWarp().forward(x, theta) * proj))

    return x, theta, dx, dtheta, f


def check_warp_input(rng):
    x, _, dx, _, f = _warp_setup(rng)
    return _compare("warp.input", KERNEL_TOL, [("input", dx, finite_diff_grad(f, x), None)])


def check_warp_theta(rng):
    _, theta, _, dtheta, f = _warp_setup(rng)
    return _compare("warp.theta", KERNEL_TOL, [("theta", dtheta, finite_diff_grad(f, theta), None)])


def check_end_to_end(rng, variant: str = "cnn-gp", sample: int = 12):
    """Whole-network check with dropout off on two images; parameters are sampled."""
    from .models import ModelSpec, build_model

    model = build_model(ModelSpec(variant, seed=int(rng.integers(1 << 30))))
    x = rng.random((2, 1, 28, 28))
    if variant.startswith("stn") or variant == "classifier":
        labels = rng.integers(0, 10, 2)
        if variant.startswith("stn"):
            # move the localisation head off its identity initialisation
            model.loc.head.params["weight"][...] = 0.5 * rng.standard_normal(model.loc.head.params["weight"].shape)

        def loss():
            return L.cross_entropy_loss(model.forward(x, train=False), labels)
    else:
        target = rng.random((2, 1))

        def loss():
            return L.euclidean_loss(model.forward(x, train=False), target)

    _, g = loss()
    model.backward(g)
    grads = dict(model.named_gradients())
    pairs = []
    for name, p in model.named_parameters():
        idx = rng.choice(p.size, min(sample, p.size), replace=False)
        # sample where the analytic gradient is non-zero too, so the check bites
        nz = np.flatnonzero(grads[name])
        if len(nz):
            idx = np.union1d(idx, rng.choice(nz, min(sample, len(nz)), replace=False))
        num = finite_diff_grad(lambda: loss()[0], p, h=1e-6, indices=idx)
        pairs.append((name, grads[name], num, idx))
    return _compare(f"end_to_end.{variant}", END_TO_END_TOL, pairs)


SUITES: dict[str, Callable] = {
    "conv": check_conv,
    "conv.strided": check_conv_strided,
    "maxpool": check_maxpool,
    "fc": check_fc,
    "relu": check_relu,
    "sigmoid": check_sigmoid,
    "dropout": check_dropout,
    "euclidean_loss": check_euclidean,
    "cross_entropy_loss": check_cross_entropy,
    "gp_pool": check_gp_pool,
    "warp.input": check_warp_input,
    "warp.theta": check_warp_theta,
    "end_to_end.cnn-gp": check_end_to_end,
    "end_to_end.stn-cnn-gp": lambda rng: check_end_to_end(rng, "stn-cnn-gp"),
}


def select(only: list[str] | None) -> list[str]:
    """Suite names matching ``only`` (exact name or dotted group prefix)."""
    if not only:
        return list(SUITES)
    chosen = [n for n in SUITES if any(n == o or n.startswith(o + ".") for o in only)]
    unknown = [o for o in only if not any(n == o or n.startswith(o + ".") for n in SUITES)]
    if unknown:
        raise KeyError(f"unknown gradcheck scope: {', '.join(unknown)}")
    return chosen


def run(only: list[str] | None = None, seed: int = 0) -> list[CheckResult]:
    """Run the selected suites at float64 and restore the previous precision."""
    names = select(only)
    previous = tensor_core.precision()
    tensor_core.set_precision("float64")
    try:
        return [SUITES[n](np.random.default_rng([seed, i])) for i, n in enumerate(names)]
    finally:
        tensor_core.set_precision(previous)
