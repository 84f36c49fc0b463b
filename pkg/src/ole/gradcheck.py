"""Finite-difference and fixed-point check suites.

Each suite draws its own random, well-conditioned test points, compares an
analytic gradient against central differences, and reports the worst
relative error. ``corrupt`` perturbs one analytic entry to prove a suite can
fail.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .classifier_losses import LogitsBatch, softmax_cross_entropy
from .network import NetworkSpec, backward, forward, init_params
from .ole_loss import FeatureBatch, OleConfig, ole_forward, ole_value_and_grad
from .tensor_core import DEFAULT_SV_THRESHOLD, nuclear_norm, nuclear_subgradient

FD_STEP = 1e-6


@dataclass
class SuiteResult:
    name: str
    trials: int
    worst: float
    tolerance: float
    seconds: float
    failures: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and self.worst <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.trials} trials, worst {self.worst:.3e} (tol {self.tolerance:.0e}), {self.seconds:.2f}s"


def rel_error(a, b, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def central_difference(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Entrywise central-difference gradient of scalar ``f`` at ``x``."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f(x)
        flat[i] = keep - h
        down = f(x)
        flat[i] = keep
        gflat[i] = (up - down) / (2 * h)
    return g


def well_conditioned(s: np.ndarray, sv_threshold: float, min_gap: float = 1e-3) -> bool:
    """All singular values clear of the threshold and pairwise separated."""
    return bool(np.all(s > 10 * sv_threshold) and np.all(np.abs(np.diff(s)) > min_gap))


def random_conditioned_matrix(rng, m: int, n: int, sv_threshold: float = DEFAULT_SV_THRESHOLD) -> np.ndarray:
    while True:
        a = rng.standard_normal((m, n))
        if well_conditioned(np.linalg.svd(a, compute_uv=False), sv_threshold):
            return a


def batch_conditioned(features, labels, cfg: OleConfig, margin: float = 0.1) -> bool:
    if not well_conditioned(np.linalg.svd(features, compute_uv=False), cfg.sv_threshold):
        return False
    for c in np.unique(labels):
        s = np.linalg.svd(features[:, labels == c], compute_uv=False)
        if not well_conditioned(s, cfg.sv_threshold) or s.sum() <= cfg.delta_clamp + margin:
            return False
    return True


def random_conditioned_batch(rng, cfg: OleConfig = OleConfig()) -> FeatureBatch:
    """A random feature batch where the OLE loss is differentiable with room to spare."""
    while True:
        D = int(rng.integers(3, 9))
        C = int(rng.integers(2, 5))
        N = int(rng.integers(C + 1, 17))
        labels = rng.permutation(np.arange(N) % C)
        X = rng.standard_normal((D, N)) * rng.uniform(0.5, 2.0)
        if batch_conditioned(X, labels, cfg):
            return FeatureBatch(X, labels, C)


def block_orthogonal_batch(rng, cfg: OleConfig = OleConfig()) -> FeatureBatch:
    """Class blocks living in mutually orthogonal coordinate subspaces, each above the clamp."""
    C = int(rng.integers(2, 6))
    dims = rng.integers(1, 4, size=C)
    D = int(dims.sum() + rng.integers(0, 3))
    Q, _ = np.linalg.qr(rng.standard_normal((D, D)))
    blocks, labels, start = [], [], 0
    for c, k in enumerate(dims):
        n = int(rng.integers(1, 6))
        basis = Q[:, start : start + k]
        start += k
        coeffs = rng.standard_normal((k, n))
        block = basis @ coeffs
        norm = np.linalg.svd(block, compute_uv=False).sum()
        block *= (cfg.delta_clamp + rng.uniform(0.5, 3.0)) / norm
        blocks.append(block)
        labels += [c] * n
    X = np.concatenate(blocks, axis=1)
    perm = rng.permutation(X.shape[1])
    return FeatureBatch(X[:, perm], np.array(labels)[perm], C)


def check_nuclear(seed: int = 0, trials: int = 100, tol: float = 1e-5, corrupt: float = 0.0) -> SuiteResult:
    """Directional derivative of the nuclear norm against the projected subgradient."""
    rng = np.random.default_rng([seed, 1])
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for k in range(trials):
        m, n = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        A = random_conditioned_matrix(rng, m, n)
        E = rng.standard_normal((m, n))
        g = nuclear_subgradient(A)
        if corrupt and k == 0:
            g[0, 0] += corrupt
        analytic = float(np.sum(g * E))
        fd = (nuclear_norm(A + FD_STEP * E) - nuclear_norm(A - FD_STEP * E)) / (2 * FD_STEP)
        err = abs(analytic - fd) / max(abs(fd), abs(analytic), 1e-8)
        worst = max(worst, err)
        if err > tol:
            failures.append(k)
    return SuiteResult("nuclear-norm subgradient", trials, worst, tol, time.perf_counter() - t0, failures)


def check_ole(seed: int = 0, trials: int = 100, tol: float = 1e-4, corrupt: float = 0.0, cfg: OleConfig = OleConfig()) -> SuiteResult:
    """Full OLE feature gradient against entrywise central differences."""
    rng = np.random.default_rng([seed, 2])
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for k in range(trials):
        batch = random_conditioned_batch(rng, cfg)
        _, g = ole_value_and_grad(batch, cfg)
        if corrupt and k == 0:
            g[0, 0] += corrupt
        X = batch.features.copy()
        fd = central_difference(lambda Z: ole_forward(FeatureBatch(Z, batch.labels), cfg), X)
        err = rel_error(g, fd)
        worst = max(worst, err)
        if err > tol:
            failures.append(k)
    return SuiteResult("OLE gradient", trials, worst, tol, time.perf_counter() - t0, failures)


def check_orthogonal_optimum(seed: int = 0, trials: int = 50, tol: float = 1e-8, cfg: OleConfig = OleConfig()) -> SuiteResult:
    """Orthogonal class blocks above the clamp: zero loss and zero gradient."""
    rng = np.random.default_rng([seed, 3])
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for k in range(trials):
        batch = block_orthogonal_batch(rng, cfg)
        value, g = ole_value_and_grad(batch, cfg)
        err = max(abs(value), float(np.linalg.norm(g)))
        worst = max(worst, err)
        if value > tol or np.linalg.norm(g) > tol:
            failures.append(k)
    return SuiteResult("zero loss at orthogonal blocks", trials, worst, tol, time.perf_counter() - t0, failures)


GRADCHECK_SPEC = NetworkSpec(input_dim=4, hidden=(6,), feature_dim=5, class_count=3, use_batchnorm=False)


def network_loss_and_grads(params, x, y, lam, cfg: OleConfig):
    trace = forward(params, x, "train")
    ls, logit_grad = softmax_cross_entropy(LogitsBatch(trace.logits, y))
    lo, ole_grad = ole_value_and_grad(FeatureBatch(trace.features, y), cfg)
    grads = backward(params, trace, lam * ole_grad, logit_grad)
    return ls + lam * lo, grads, trace


def _network_point(rng, seed, cfg, n=12, spec=GRADCHECK_SPEC):
    """Parameters and data whose features are well conditioned and clear of ReLU kinks."""
    for attempt in range(1000):
        params = init_params(spec, int(rng.integers(2**31)))
        for k, v in params.trainable.items():
            if k.endswith(".b"):
                v[:] = 0.1 * rng.standard_normal(v.shape)
        x = rng.standard_normal((spec.input_dim, n)) * 1.5
        y = rng.permutation(np.arange(n) % spec.class_count)
        trace = forward(params, x, "eval")
        p = params.trainable
        pre = [p[f"dense{i}.W"] @ c["h_in"] + p[f"dense{i}.b"][:, None] for i, c in enumerate(trace.caches)]
        kinks_clear = all(np.min(np.abs(z)) > 1e-3 for z in pre)
        if kinks_clear and batch_conditioned(trace.features, y, cfg):
            return params, x, y
    raise RuntimeError(f"no well-conditioned network point found for seed {seed}")


def check_network(
    seed: int = 0,
    trials: int = 20,
    lams=(0.0, 0.25),
    tol: float = 1e-4,
    corrupt: float = 0.0,
    cfg: OleConfig = OleConfig(),
) -> SuiteResult:
    """Backprop through a small MLP against central differences of the scalar loss."""
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for k in range(trials):
        rng = np.random.default_rng([seed, 4, k])
        params, x, y = _network_point(rng, seed, cfg)
        for lam in lams:
            _, grads, _ = network_loss_and_grads(params, x, y, lam, cfg)
            if corrupt and k == 0:
                grads["dense0.W"][0, 0] += corrupt
            for name, theta in params.trainable.items():
                fd = central_difference(lambda _: network_loss_and_grads(params, x, y, lam, cfg)[0], theta)
                err = rel_error(grads[name], fd)
                worst = max(worst, err)
                if err > tol and k not in failures:
                    failures.append(k)
    return SuiteResult("network backprop", trials, worst, tol, time.perf_counter() - t0, failures)


def run_all(seed: int = 0, trials: int | None = None, corrupt: float = 0.0) -> list[SuiteResult]:
    """Every suite at its default size, or ``trials`` points each when given."""
    n = (lambda default: trials or default)
    return [
        check_nuclear(seed, n(100), corrupt=corrupt),
        check_ole(seed, n(100), corrupt=corrupt),
        check_orthogonal_optimum(seed, n(50)),
        check_network(seed, n(20), corrupt=corrupt),
    ]
