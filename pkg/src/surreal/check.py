"""Numerical property suites: isometry, equivariance, oracle agreement,
invariance and gradient checks.

Every suite is a pure function of ``(trials, seed)``.  Trial ``i`` usually draws its
inputs from ``default_rng([seed, i])``, so the worst trial reported in a
failure is reproducible by rerunning with the same seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .layers import Dense, DistanceFC, TReLU, WFMConv
from .manifold import ComplexField, GroupElement, PolarComplex, act, distance
from .network import BaselineMLP, BaselineSpec, ComplexNet, ConvLayer, DistanceFCLayer, ModelSpec, TReLULayer
from .train import loss_ce
from .wfm import ConvexWeights, step_fractions, wfm_field, wfm_incremental, wfm_oracle

TOLERANCES = {
    "isometry": 1e-10,
    "equivariance": 1e-9,
    "oracle": 1e-3,
    "invariance": 1e-9,
    "gradcheck": 1e-4,
}
DEFAULT_TRIALS = {
    "isometry": 10_000,
    "equivariance": 1_000,
    "oracle": 100,
    "invariance": 1_000,
    "gradcheck": 50,
}


@dataclass(frozen=True)
class SuiteResult:
    name: str
    trials: int
    max_err: float
    tol: float
    worst_trial: int
    seed: int
    seconds: float
    checked: int = 0

    @property
    def passed(self) -> bool:
        return self.trials > 0 and self.max_err < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else f"FAIL (reproduce: --seed {self.seed}, worst trial {self.worst_trial})"
        extra = f" comparisons={self.checked}" if self.checked else ""
        return (
            f"{self.name}: trials={self.trials}{extra} max_err={self.max_err:.3e} "
            f"tol={self.tol:.0e} {status} ({self.seconds:.2f}s)"
        )


def random_group(rng) -> GroupElement:
    return GroupElement(rng.normal(0.0, 2.0), rng.uniform(-math.pi, math.pi))


def random_field(rng, shape) -> ComplexField:
    return ComplexField(rng.normal(0.0, 1.0, shape), rng.uniform(-math.pi, math.pi, shape))


def _run(name, trials, seed, trial_fn: Callable[[np.random.Generator], float | tuple]):
    start = time.perf_counter()
    worst, worst_i, checked = -np.inf, -1, 0
    for i in range(trials):
        out = trial_fn(np.random.default_rng([seed, i]))
        err, n = out if isinstance(out, tuple) else (out, 0)
        checked += n
        if not err <= worst:
            worst, worst_i = err, i
    return SuiteResult(name, trials, float(worst), TOLERANCES[name], worst_i, seed, time.perf_counter() - start, checked)


def isometry(trials: int = DEFAULT_TRIALS["isometry"], seed: int = 0) -> SuiteResult:
    """All draws come from one ``default_rng(seed)`` stream; trial ``i`` uses row ``i``."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    lr = rng.normal(0.0, 1.0, (trials, 2))
    th = rng.uniform(-math.pi, math.pi, (trials, 2))
    gs = np.column_stack([rng.normal(0.0, 2.0, trials), rng.uniform(-math.pi, math.pi, trials)])
    err = np.empty(trials)
    for i in range(trials):
        z1, z2 = PolarComplex(lr[i, 0], th[i, 0]), PolarComplex(lr[i, 1], th[i, 1])
        g = GroupElement(gs[i, 0], gs[i, 1])
        err[i] = abs(distance(act(g, z1), act(g, z2)) - distance(z1, z2))
    worst = int(np.argmax(err)) if trials else -1
    return SuiteResult(
        "isometry", trials, float(err[worst]) if trials else -np.inf, TOLERANCES["isometry"], worst, seed,
        time.perf_counter() - start,
    )


def _window(rng, k):
    return [PolarComplex(a, b) for a, b in zip(rng.normal(0, 1, k), rng.uniform(-math.pi, math.pi, k))]


def _kernel_wfm(points, logits):
    lr = np.array([[p.log_r for p in points]])
    th = np.array([[p.theta for p in points]])
    idx = np.arange(len(points))[None, :]
    r, t = kernels.wfm_forward(lr, th, idx, step_fractions(logits)[None, :])
    return PolarComplex(r[0, 0, 0], t[0, 0, 0])


def equivariance(trials: int = DEFAULT_TRIALS["equivariance"], seed: int = 0) -> SuiteResult:
    def trial(rng):
        k = int(rng.integers(1, 26))
        window = _window(rng, k)
        w = ConvexWeights(rng.normal(0, 1, k))
        g = random_group(rng)
        moved = [act(g, z) for z in window]
        e1 = distance(wfm_field(moved, w), act(g, wfm_field(window, w)))
        e2 = distance(_kernel_wfm(moved, w.logits), act(g, _kernel_wfm(window, w.logits)))
        return max(e1, e2)

    return _run("equivariance", trials, seed, trial)


def oracle(trials: int = DEFAULT_TRIALS["oracle"], seed: int = 0) -> SuiteResult:
    def trial(rng):
        k = int(rng.integers(1, 6))
        centre = rng.uniform(-math.pi, math.pi)
        # angular diameter strictly below pi/2
        thetas = centre + rng.uniform(-0.999, 0.999, k) * math.pi / 4
        points = [PolarComplex(a, b) for a, b in zip(rng.normal(0, 1, k), thetas)]
        w = ConvexWeights(rng.normal(0, 1, k))
        return distance(wfm_incremental(points, w), wfm_oracle(points, w))

    return _run("oracle", trials, seed, trial)


def invariance(trials: int = DEFAULT_TRIALS["invariance"], seed: int = 0) -> SuiteResult:
    def trial(rng):
        m = int(rng.integers(1, 7))
        spatial = tuple(rng.integers(1, 4, size=int(rng.integers(1, 3))))
        o = int(rng.integers(1, 5))
        layer = DistanceFC(m, o, logits=rng.normal(0, 1, (o, m)))
        x = random_field(rng, (2, m, *spatial))
        g = random_group(rng)
        u0 = layer.forward(x)[0]
        u1 = layer.forward(act(g, x))[0]
        return float(np.abs(u1 - u0).max())

    return _run("invariance", trials, seed, trial)


# gradient checks -------------------------------------------------------------


def rel_error(a, b, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def fd_compare(loss_fn, arrays, grads, h: float = 1e-5, signature_fn=None, limit: int | None = None, rng=None):
    """Compare ``grads`` with central differences of ``loss_fn`` over ``arrays``.

    ``arrays`` are perturbed in place.  Entries whose +-h perturbation
    changes ``signature_fn()`` (a kink pattern) are skipped.  Returns
    ``(max_rel_err, n_compared)``.
    """
    base_sig = signature_fn() if signature_fn else None
    worst, n = 0.0, 0
    for arr, grad in zip(arrays, grads):
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        assert np.shares_memory(flat, arr)
        idx = np.arange(flat.size)
        if limit is not None and flat.size > limit:
            idx = np.sort(rng.choice(flat.size, size=limit, replace=False))
        for j in idx:
            old = flat[j]
            flat[j] = old + h
            lp = loss_fn()
            sp = signature_fn() if signature_fn else None
            flat[j] = old - h
            lm = loss_fn()
            sm = signature_fn() if signature_fn else None
            flat[j] = old
            if signature_fn and not (np.array_equal(sp, base_sig) and np.array_equal(sm, base_sig)):
                continue
            worst = max(worst, float(rel_error(gflat[j], (lp - lm) / (2 * h))))
            n += 1
    return worst, n


def _complex_layer_case(rng, layer, x, out_fn):
    """Gradcheck one complex-input layer against a random linear read-out."""
    y, _ = layer.forward(x)
    readout = [rng.normal(size=a.shape) for a in out_fn(y)]
    lr = x.log_r.copy()
    th = x.theta.copy()

    def forward():
        xf = ComplexField(lr, th)
        out, cache = layer.forward(xf)
        return out, cache

    def loss():
        return sum(float((r * a).sum()) for r, a in zip(readout, out_fn(forward()[0])))

    def signature():
        out, cache = forward()
        if isinstance(layer, TReLU):
            return np.concatenate([cache[0].ravel(), cache[1].ravel()])
        if isinstance(layer, DistanceFC):
            return (cache[6] > 0).ravel()
        return np.zeros(0)

    _, cache = forward()
    gy = tuple(readout) if len(readout) == 2 else readout[0]
    (gx_r, gx_t), pgrads = layer.backward(cache, gy)
    return fd_compare(loss, [*layer.params, lr, th], [*pgrads, gx_r, gx_t], signature_fn=signature, limit=40, rng=rng)


def _case_conv1d(rng):
    c, o, k = (int(v) for v in rng.integers(1, 4, 3))
    k = int(rng.integers(1, 5))
    stride = int(rng.integers(1, k + 1))
    length = k + int(rng.integers(0, 6))
    layer = WFMConv(c, o, k, stride, logits=rng.normal(0, 1, (o, c * k)))
    x = random_field(rng, (2, c, length))
    return _complex_layer_case(rng, layer, x, lambda y: (y.log_r, y.theta))


def _case_conv2d(rng):
    c, o = (int(v) for v in rng.integers(1, 4, 2))
    kernel = tuple(int(v) for v in rng.integers(1, 4, 2))
    stride = tuple(int(rng.integers(1, kk + 1)) for kk in kernel)
    spatial = tuple(kk + int(rng.integers(0, 3)) for kk in kernel)
    layer = WFMConv(c, o, kernel, stride, logits=rng.normal(0, 1, (o, c * math.prod(kernel))))
    x = random_field(rng, (2, c, *spatial))
    return _complex_layer_case(rng, layer, x, lambda y: (y.log_r, y.theta))


def _case_trelu(rng):
    x = random_field(rng, (2, 3, 4))
    return _complex_layer_case(rng, TReLU(), x, lambda y: (y.log_r, y.theta))


def _case_distance_fc(rng):
    m, o = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    layer = DistanceFC(m, o, logits=rng.normal(0, 1, (o, m)))
    x = random_field(rng, (2, m, int(rng.integers(1, 4)), int(rng.integers(1, 4))))
    return _complex_layer_case(rng, layer, x, lambda u: (u,))


def _case_dense(rng):
    fan_in, fan_out = int(rng.integers(1, 8)), int(rng.integers(1, 5))
    layer = Dense(fan_in, fan_out, rng=rng)
    x = rng.normal(size=(3, fan_in))
    readout = rng.normal(size=(3, fan_out))
    loss = lambda: float((readout * layer.forward(x)[0]).sum())
    _, cache = layer.forward(x)
    gx, pgrads = layer.backward(cache, readout)
    return fd_compare(loss, [*layer.params, x], [*pgrads, gx])


def _model_case(rng, model, x, labels):
    def loss():
        return loss_ce(model.forward(x)[0], labels)

    def signature():
        return model.branch_signature(model.forward(x)[1])

    probs, cache = model.forward(x)
    grads = model.backward(cache, labels)
    return fd_compare(loss, model.params, grads, signature_fn=signature, limit=60, rng=rng)


def _case_complex_net(rng):
    hidden = (5,) if rng.integers(0, 2) else ()
    spec = ModelSpec(
        input_shape=(1, 6, 6),
        classes=3,
        layers=(
            ConvLayer(3, (2, 2), (2, 2)),
            TReLULayer(),
            ConvLayer(4, (2, 2), (1, 1)),
            TReLULayer(),
            DistanceFCLayer(2),
        ),
        head_hidden=hidden,
    )
    model = ComplexNet(spec, seed=int(rng.integers(1 << 31)))
    for p in model.params:
        p += rng.normal(0, 1, p.shape)
    x = random_field(rng, (4, 1, 6, 6))
    return _model_case(rng, model, x, rng.integers(0, 3, 4))


def _case_baseline(rng):
    model = BaselineMLP(BaselineSpec((1, 3, 3), (5,), 3), seed=int(rng.integers(1 << 31)))
    x = random_field(rng, (4, 1, 3, 3))
    return _model_case(rng, model, x, rng.integers(0, 3, 4))


GRAD_CASES = [_case_conv1d, _case_conv2d, _case_trelu, _case_distance_fc, _case_dense, _case_complex_net, _case_baseline]


def gradcheck(trials: int = DEFAULT_TRIALS["gradcheck"], seed: int = 0) -> SuiteResult:
    """Trial ``i`` runs case ``i % len(GRAD_CASES)``, so every layer type is covered."""
    counter = iter(range(trials))
    return _run("gradcheck", trials, seed, lambda rng: GRAD_CASES[next(counter) % len(GRAD_CASES)](rng))


SUITES = {
    "isometry": isometry,
    "equivariance": equivariance,
    "oracle": oracle,
    "invariance": invariance,
    "gradcheck": gradcheck,
}


def run_suites(names=None, trials: int | None = None, seed: int = 0) -> list[SuiteResult]:
    names = list(SUITES) if not names else names
    return [SUITES[n](DEFAULT_TRIALS[n] if trials is None else trials, seed) for n in names]
