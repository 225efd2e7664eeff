"""Oracle checks run by ``cltta verify``.

Each check compares the library against an independent route (naive sort,
dense matrix algebra, finite differences, Monte Carlo) and returns a
:class:`CheckResult`. ``fast`` runs everything except the 1e5-sample
Monte Carlo bound check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .. import labeling, netcore as nc, risk
from ..numerics import percentile, seeded_rng, softmax

FD_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b| / max(|a|, |b|)`` over flattened arrays; 0 when both vanish."""
    a = np.ravel(a)
    b = np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + h
        up = fn(x)
        x[i] = orig - h
        down = fn(x)
        x[i] = orig
        grad[i] = (up - down) / (2 * h)
    return grad


def naive_percentile(values, t: float) -> float:
    v = sorted(float(x) for x in values)
    r = (t / 100.0) * (len(v) - 1)
    lo, hi = math.floor(r), math.ceil(r)
    return v[lo] + (v[hi] - v[lo]) * (r - lo)


def random_theta(rng: np.random.Generator, c: int, lo: float = 0.05, hi: float = 0.3) -> np.ndarray:
    """theta_c in (lo, hi) with sum(theta) < 1.

    A uniform draw whose sum reaches 1 has its excess over ``lo`` shrunk
    towards a random total below 1, so no rejection loop is needed.
    """
    th = rng.uniform(lo, hi, size=c)
    if th.sum() >= 1.0:
        total = rng.uniform(c * lo, 1.0)
        th = lo + (th - lo) * (total - c * lo) / (th.sum() - c * lo)
    return th


def check_percentile(n: int = 1000, seed: int = 0) -> CheckResult:
    rng = seeded_rng(seed, 11)
    mismatches = 0
    for _ in range(n):
        vals = rng.random(int(rng.integers(1, 50)))
        t = float(rng.uniform(0, 100))
        if percentile(vals, t) != naive_percentile(vals, t):
            mismatches += 1
    return CheckResult("percentile-oracle", mismatches == 0, f"{mismatches}/{n} mismatches")


def check_roundtrip(n: int = 1000, seed: int = 0) -> CheckResult:
    rng = seeded_rng(seed, 12)
    worst = 0.0
    for _ in range(n):
        c = int(rng.integers(2, 11))
        p = rng.dirichlet(np.ones(c), size=int(rng.integers(1, 6)))
        th = random_theta(rng, c)
        back = risk.inverse_transform(risk.complementary_transform(p, th), th)
        worst = max(worst, float(np.abs(back - p).max()))
    return CheckResult("sherman-morrison-roundtrip", worst <= 1e-10, f"max |error| = {worst:.3g}")


def dense_inverse(signed: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """``-(I - theta e^T)^{-1} Theta eta`` via an explicit linear solve."""
    c = theta.size
    a = np.eye(c) - np.outer(theta, np.ones(c))
    return -np.linalg.solve(a, (theta[:, None] * signed.T)).T


def check_inverse_vs_solve(n: int = 200, seed: int = 0) -> CheckResult:
    rng = seeded_rng(seed, 13)
    worst = 0.0
    for _ in range(n):
        c = int(rng.integers(2, 11))
        th = random_theta(rng, c)
        eta = rng.normal(size=(3, c))
        worst = max(worst, float(np.abs(risk.inverse_transform(eta, th) - dense_inverse(eta, th)).max()))
    return CheckResult("sherman-morrison-vs-solve", worst <= 1e-10, f"max |error| = {worst:.3g}")


def check_equivalence(n: int = 100, seed: int = 0, ecl=risk.ecl_risk) -> CheckResult:
    """ECL with unclipped transformed labels must reproduce the ordinary risk."""
    rng = seeded_rng(seed, 14)
    worst = 0.0
    for _ in range(n):
        c = int(rng.integers(2, 11))
        rows = int(rng.integers(1, 6))
        p_hat = rng.dirichlet(np.ones(c), size=rows)
        f_test = rng.dirichlet(np.ones(c), size=rows)
        th = random_theta(rng, c)
        signed = risk.complementary_transform(p_hat, th)
        worst = max(worst, abs(ecl(signed, f_test, th).value - risk.ordinary_risk(p_hat, f_test)))
    return CheckResult("risk-equivalence", worst <= 1e-8, f"max residual = {worst:.3g}")


def _loss_cases(rng: np.random.Generator):
    """(name, loss-of-logits, analytic grad) for random well-separated instances."""
    c = int(rng.integers(3, 11))
    n = int(rng.integers(2, 7))
    while True:
        z = rng.normal(scale=1.5, size=(n, c))
        f = softmax(z)
        th = random_theta(rng, c) * 0.8
        top2 = np.sort(f, axis=1)[:, -2:]
        if np.abs(f - th).min() > 1e-3 and np.min(top2[:, 1] - top2[:, 0]) > 1e-3:
            break
    w = labeling.soft_complementary(f, th)
    yield "BCL", (lambda zz: risk.bcl_loss(softmax(zz), th).value), risk.bcl_loss(f, th).grad_logits, z
    yield "ECL", (lambda zz: risk.ecl_risk(w, softmax(zz), th).value), risk.ecl_risk(w, f, th).grad_logits, z
    yield "NPL", (lambda zz: risk.npl_loss(softmax(zz)).value), risk.npl_loss(f).grad_logits, z
    yield "ENTROPY", (lambda zz: risk.entropy_loss(softmax(zz)).value), risk.entropy_loss(f).grad_logits, z


def check_loss_gradients(n: int = 20, seed: int = 0, tol: float = 1e-5) -> CheckResult:
    rng = seeded_rng(seed, 15)
    worst = {}
    for _ in range(n):
        for name, fn, analytic, z in _loss_cases(rng):
            err = rel_error(analytic, central_difference(fn, z))
            worst[name] = max(worst.get(name, 0.0), err)
    detail = ", ".join(f"{k} {v:.2g}" for k, v in worst.items())
    return CheckResult("loss-logit-gradients", max(worst.values()) < tol, f"max rel err: {detail}")


def model_loss_fns(f0: np.ndarray, theta: np.ndarray):
    w = labeling.soft_complementary(f0, theta)
    flags = labeling.hard_complementary(f0, theta)
    pseudo = labeling.pseudo_label(f0)
    return {
        "BCL": lambda f: risk.bcl_loss_flags(f, flags),
        "ECL": lambda f: risk.ecl_risk(w, f, theta),
        "NPL": lambda f: risk.cross_entropy(f, pseudo),
        "ENTROPY": risk.entropy_loss,
    }


def model_gradient_error(model: nc.MlpModel, x: np.ndarray, loss_fn, mode: str = nc.TRAIN_STATS) -> float:
    """Global relative error between backward() and central differences over all parameters."""
    probe = model.copy()
    logits, cache = nc.forward(probe, x, mode)
    analytic = nc.backward(probe, cache, loss_fn(softmax(logits)).grad_logits, "all")
    params = model.params()
    a_all, n_all = [], []
    for name, arr in params.items():
        def value(v, name=name):
            m = model.copy()
            m.params()[name][...] = v
            lg, _ = nc.forward(m, x, mode)
            return loss_fn(softmax(lg)).value
        n_all.append(central_difference(value, arr).ravel())
        a_all.append(analytic[name].ravel())
    return rel_error(np.concatenate(a_all), np.concatenate(n_all))


def small_model(seed: int = 0) -> nc.MlpModel:
    """158-parameter net with non-trivial batch-norm affine parameters."""
    rng = seeded_rng(seed, 16)
    m = nc.mlp_new([5, 8, 6, 4], seed)
    for bn in m.norms:
        bn.gamma[:] = rng.uniform(0.5, 1.5, bn.gamma.shape)
        bn.beta[:] = rng.normal(0.0, 0.3, bn.beta.shape)
        bn.running_mean[:] = rng.normal(0.0, 0.2, bn.gamma.shape)
        bn.running_var[:] = rng.uniform(0.5, 2.0, bn.gamma.shape)
    return m


def check_model_gradients(seed: int = 0, tol: float = 1e-4) -> CheckResult:
    rng = seeded_rng(seed, 17)
    model = small_model(seed)
    x = rng.normal(size=(8, 5))
    f0 = nc.predict_proba(model, x)
    theta = np.full(4, 0.2)
    worst = {}
    for mode in (nc.TRAIN_STATS, nc.RUNNING_STATS):
        for name, fn in model_loss_fns(f0, theta).items():
            worst[f"{name}/{mode}"] = model_gradient_error(model, x, fn, mode)
    top = max(worst.values())
    return CheckResult("model-parameter-gradients", top < tol,
                       f"{model.param_count()} params, max rel err {top:.2g}")


def check_bound_closed_form() -> CheckResult:
    ok = True
    for f_max in (0.5, 0.7, 0.9, 0.99):
        for c in (2, 3, 10, 100):
            cross = labeling.threshold_crossover(f_max, c)
            ok &= abs(labeling.cl_bound(cross, c) - f_max) < 1e-12
            ok &= labeling.cl_bound(cross * 0.999, c) > f_max
    return CheckResult("cl-bound-crossover", bool(ok), "bound(crossover) = f_max and strict above it")


def calibrated_stream(n: int, c: int, seed: int, alpha: float = 0.3):
    """Prediction rows plus labels drawn from those rows (a perfectly calibrated model)."""
    rng = seeded_rng(seed, 18)
    probs = rng.dirichlet(np.full(c, alpha), size=n)
    u = rng.random(n)[:, None]
    truth = np.minimum((probs.cumsum(axis=1) < u).sum(axis=1), c - 1)
    return probs, truth


def check_bound_empirical(n: int = 100_000, seed: int = 0) -> CheckResult:
    c = 10
    probs, truth = calibrated_stream(n, c, seed)
    acc = labeling.cl_correctness(labeling.hard_complementary(probs, 0.05), truth)
    bound = labeling.cl_bound(0.05, c)
    se = math.sqrt(bound * (1 - bound) / n)
    top1 = float(probs.max(axis=1).mean())
    theta = 0.5 * labeling.threshold_crossover(top1, c)
    cl = labeling.cl_correctness(labeling.hard_complementary(probs, theta), truth)
    pl = labeling.pl_accuracy(labeling.pseudo_label(probs), truth)
    passed = acc >= bound - 3 * se and cl > pl
    return CheckResult("cl-bound-empirical", passed,
                       f"CL acc {acc:.4f} vs bound {bound:.4f} (-3se {bound - 3 * se:.4f}); "
                       f"theta {theta:.4f}: CL {cl:.4f} > PL {pl:.4f}")


FAST_CHECKS = (check_percentile, check_roundtrip, check_inverse_vs_solve, check_equivalence,
               check_loss_gradients, check_model_gradients, check_bound_closed_form)
FULL_CHECKS = FAST_CHECKS + (check_bound_empirical,)


def run_checks(level: str = "fast") -> List[CheckResult]:
    if level not in ("fast", "full"):
        raise ValueError(f"level must be 'fast' or 'full', got {level!r}")
    results = []
    for check in FAST_CHECKS if level == "fast" else FULL_CHECKS:
        t0 = time.perf_counter()
        res = check()
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
