"""Fitters that estimate forward-problem parameters from observed decisions.

All first-order fitters share one driver: epoch-shuffled without-replacement
minibatches, constant or 1/sqrt(t) step size, optional projection of the
iterate onto a parameter space, a gradient-norm stopping rule, and a
divergence guard.  The driver checkpoints the full-data risk every
``eval_every`` updates (plus the start and the end) and returns the best
checkpoint, which makes the "risk at theta_hat <= risk at theta0" contract
hold by construction even for nonsmooth objectives.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DegenerateKernelError, DivergedError
from .losses import _fy_batch, _subopt_batch, kka_dual_dim, kka_grad, kka_objective
from .model import Dataset, ForwardProblem, Parameter, as_parameter, rng_stream
from .solvers import FwConfig, _project_region_batch

_DIVERGE_NORM = 1e6


@dataclass(frozen=True)
class UnitL2Sphere:
    """Normalize the iterate to unit Euclidean norm (zero maps to e_1)."""


@dataclass(frozen=True)
class ThetaBox:
    """Clip the iterate into [lo, hi] coordinatewise."""

    lo: float
    hi: float


ParamSpace = Union[UnitL2Sphere, ThetaBox]


@dataclass(frozen=True)
class SgdConfig:
    """Hyperparameters shared by the first-order fitters.

    ``lam`` only matters to the Fenchel-Young fitter.  ``step_decay`` of
    "inv_sqrt" scales the step by 1/sqrt(t+1), useful for the nonsmooth
    subgradient objectives; the default constant step mirrors the plain
    SGD recipe.
    """

    learning_rate: float = 0.05
    batch_size: int = 32
    max_iters: int = 10_000
    tolerance: float = 1e-6
    lam: float = 0.1
    seed: int = 0
    theta0: np.ndarray | None = None
    param_space: ParamSpace | None = None
    step_decay: str | None = None
    eval_every: int = 50
    fw: FwConfig | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_iters < 0:
            raise ValueError("batch_size must be >= 1 and max_iters >= 0")
        if self.step_decay not in (None, "inv_sqrt"):
            raise ValueError(f"unknown step_decay {self.step_decay!r}")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass(frozen=True)
class FitResult:
    theta: Parameter
    iterations: int
    grad_norm: float
    loss_trace: np.ndarray
    wall_time: float
    meta: dict = field(default_factory=dict)


def _apply_space(theta: np.ndarray, space: ParamSpace | None) -> np.ndarray:
    if space is None:
        return theta
    if isinstance(space, UnitL2Sphere):
        nrm = float(np.linalg.norm(theta))
        if nrm < 1e-12:
            out = np.zeros_like(theta)
            out[0] = 1.0
            return out
        return theta / nrm
    return np.clip(theta, space.lo, space.hi)


def _run_sgd(
    fp: ForwardProblem,
    ds: Dataset,
    cfg: SgdConfig,
    batch_step: Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]],
    full_risk: Callable[[np.ndarray], float],
) -> FitResult:
    n = len(ds)
    p = fp.cost_map.p
    if cfg.theta0 is None:
        theta = np.zeros(p)
    else:
        theta = np.ravel(np.asarray(cfg.theta0, dtype=float)).copy()
        if theta.size != p:
            raise ValueError(f"theta0 must have {p} entries")
    theta = _apply_space(theta, cfg.param_space)

    rng = rng_stream(cfg.seed)
    b = min(cfg.batch_size, n)
    order = rng.permutation(n)
    pos = 0

    start = time.perf_counter()
    best_theta = theta.copy()
    best_risk = full_risk(theta)
    trace: list[float] = []
    grad_norm = np.inf
    t = 0
    last_eval = -1
    while t < cfg.max_iters:
        if pos + b > n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos : pos + b]
        pos += b

        loss, grad = batch_step(theta, idx)
        trace.append(loss)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= cfg.tolerance:
            break

        step = cfg.learning_rate
        if cfg.step_decay == "inv_sqrt":
            step /= np.sqrt(t + 1.0)
        theta = _apply_space(theta - step * grad, cfg.param_space)
        if np.linalg.norm(theta) > _DIVERGE_NORM:
            raise DivergedError(f"parameter norm exceeded {_DIVERGE_NORM:g}")
        t += 1
        if t % cfg.eval_every == 0:
            risk = full_risk(theta)
            last_eval = t
            if risk < best_risk:
                best_risk, best_theta = risk, theta.copy()

    if t != last_eval:
        risk = full_risk(theta)
        if risk < best_risk:
            best_risk, best_theta = risk, theta.copy()
    return FitResult(
        theta=as_parameter(best_theta, fp.cost_map),
        iterations=t,
        grad_norm=grad_norm,
        loss_trace=np.asarray(trace),
        wall_time=time.perf_counter() - start,
        meta={"risk": best_risk},
    )


def fy_sgd_fit(fp: ForwardProblem, ds: Dataset, cfg: SgdConfig | None = None) -> FitResult:
    """Minimize the empirical Fenchel-Young risk by minibatch SGD."""
    cfg = cfg or SgdConfig()

    def batch_step(theta, idx):
        loss, grad, _ = _fy_batch(
            fp, theta, ds.contexts[idx], ds.decisions[idx], cfg.lam, fw=cfg.fw
        )
        return loss, grad

    def full_risk(theta):
        loss, _, _ = _fy_batch(
            fp, theta, ds.contexts, ds.decisions, cfg.lam, fw=cfg.fw, want_grad=False
        )
        return loss

    return _run_sgd(fp, ds, cfg, batch_step, full_risk)


def subopt_fit(fp: ForwardProblem, ds: Dataset, cfg: SgdConfig | None = None) -> FitResult:
    """Subgradient descent on the hinged suboptimality risk.

    Per-point losses are clamped at zero before averaging: with infeasible
    noisy observations the raw duality gap is unbounded below, and the
    clamp restores the degenerate-but-bounded objective the baseline is
    known for (any theta scaling a zero-loss fit stays zero-loss, and
    multiplicative cost maps admit the trivial minimizer theta = 0).
    """
    cfg = cfg or SgdConfig()

    def batch_step(theta, idx):
        loss, grad, _ = _subopt_batch(
            fp, theta, ds.contexts[idx], ds.decisions[idx], hinge=True
        )
        return loss, grad

    def full_risk(theta):
        loss, _, _ = _subopt_batch(fp, theta, ds.contexts, ds.decisions, hinge=True)
        return loss

    return _run_sgd(fp, ds, cfg, batch_step, full_risk)


def kka_fit(fp: ForwardProblem, ds: Dataset, cfg: SgdConfig | None = None) -> FitResult:
    """Projected gradient descent on the mean KKT-residual objective.

    Joint descent over (theta, per-point duals) with the duals clamped to
    stay nonnegative after every step.  Stepping uses the per-point mean so
    the step size does not have to shrink with the sample count; reported
    trace values are on the same mean scale.  The best-objective duals are
    returned in ``meta["duals"]``.
    """
    cfg = cfg or SgdConfig()
    n = len(ds)
    p = fp.cost_map.p
    q = kka_dual_dim(fp)
    if cfg.theta0 is None:
        theta = np.zeros(p)
    else:
        theta = np.ravel(np.asarray(cfg.theta0, dtype=float)).copy()
        if theta.size != p:
            raise ValueError(f"theta0 must have {p} entries")
    theta = _apply_space(theta, cfg.param_space)
    duals = np.zeros((n, q))

    start = time.perf_counter()
    best = (kka_objective(fp, theta, duals, ds) / n, theta.copy(), duals.copy())
    trace: list[float] = []
    grad_norm = np.inf
    t = 0
    while t < cfg.max_iters:
        obj = kka_objective(fp, theta, duals, ds) / n
        trace.append(obj)
        if obj < best[0]:
            best = (obj, theta.copy(), duals.copy())
        g_theta, g_duals = kka_grad(fp, theta, duals, ds)
        g_theta = g_theta / n
        g_duals = g_duals / n
        grad_norm = float(np.sqrt(np.sum(g_theta**2) + np.sum(g_duals**2)))
        if grad_norm <= cfg.tolerance:
            break
        step = cfg.learning_rate
        if cfg.step_decay == "inv_sqrt":
            step /= np.sqrt(t + 1.0)
        theta = _apply_space(theta - step * g_theta, cfg.param_space)
        duals = np.maximum(duals - step * g_duals, 0.0)
        if np.linalg.norm(theta) > _DIVERGE_NORM:
            raise DivergedError(f"parameter norm exceeded {_DIVERGE_NORM:g}")
        t += 1

    obj = kka_objective(fp, theta, duals, ds) / n
    if obj < best[0]:
        best = (obj, theta.copy(), duals.copy())
    return FitResult(
        theta=as_parameter(best[1], fp.cost_map),
        iterations=t,
        grad_norm=grad_norm,
        loss_trace=np.asarray(trace),
        wall_time=time.perf_counter() - start,
        meta={"risk": best[0], "duals": best[2]},
    )


# ---------------------------------------------------------------------------
# kernel denoising and the two-stage SPA baseline


def _nw_weights(train_ctxs: np.ndarray, eval_ctxs: np.ndarray, bandwidth: float) -> np.ndarray:
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    d2 = np.sum((eval_ctxs[:, None, :] - train_ctxs[None, :, :]) ** 2, axis=2)
    return np.exp(-d2 / (2.0 * bandwidth**2))


def nw_denoise(ds: Dataset, bandwidth: float) -> np.ndarray:
    """Nadaraya-Watson smoothing of the decisions with a Gaussian kernel.

    Each point keeps its own unit self-weight, so the estimate interpolates
    as bandwidth -> 0 and tends to the sample mean as bandwidth -> infinity.
    Raises DegenerateKernelError when the bandwidth is so small that no
    point receives any neighbor mass at all (the kernel carries no
    information beyond the identity).
    """
    w = _nw_weights(ds.contexts, ds.contexts, bandwidth)
    off_mass = w.sum(axis=1) - np.diag(w)
    if np.max(off_mass) == 0.0:
        raise DegenerateKernelError(
            f"bandwidth {bandwidth:g} leaves every point isolated"
        )
    return (w @ ds.decisions) / w.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class SpaConfig:
    """Denoise-project-fit pipeline configuration.

    The bandwidth is chosen by k-fold cross-validation on held-out
    reconstruction error; folds come from a seeded shuffle so the whole
    pipeline is deterministic.
    """

    bandwidths: tuple[float, ...] = (0.1, 0.25, 0.5, 1.0, 2.0)
    folds: int = 5
    inner: SgdConfig = field(default_factory=SgdConfig)

    def __post_init__(self):
        if len(self.bandwidths) == 0 or any(b <= 0 for b in self.bandwidths):
            raise ValueError("bandwidths must be a nonempty tuple of positives")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")


def _cv_bandwidth(ds: Dataset, cfg: SpaConfig) -> float:
    n = len(ds)
    folds = min(cfg.folds, n)
    assign = rng_stream(cfg.inner.seed, 7).permutation(n) % folds
    scores = []
    for bw in cfg.bandwidths:
        sse, count = 0.0, 0
        for f in range(folds):
            hold = assign == f
            if not np.any(hold) or np.all(hold):
                continue
            w = _nw_weights(ds.contexts[~hold], ds.contexts[hold], bw)
            mass = w.sum(axis=1)
            if np.any(mass == 0.0):
                sse = np.inf
                break
            pred = (w @ ds.decisions[~hold]) / mass[:, None]
            sse += float(np.sum((pred - ds.decisions[hold]) ** 2))
            count += int(hold.sum())
        scores.append(sse / max(count, 1))
    if not np.isfinite(min(scores)):
        raise DegenerateKernelError("every candidate bandwidth isolated some fold")
    return cfg.bandwidths[int(np.argmin(scores))]


def spa_fit(fp: ForwardProblem, ds: Dataset, cfg: SpaConfig | None = None) -> FitResult:
    """Denoise decisions, project them feasible, then fit by suboptimality.

    Stage one replaces each decision with its kernel-smoothed neighbor
    average (bandwidth by cross-validation); stage two projects the
    smoothed decisions onto the feasible region so the suboptimality loss
    is meaningful; stage three runs subopt_fit on the cleaned dataset.
    """
    cfg = cfg or SpaConfig()
    bw = _cv_bandwidth(ds, cfg)
    smoothed = nw_denoise(ds, bw)
    projected = _project_region_batch(fp.region, smoothed, cfg.inner.fw)
    cleaned = Dataset(ds.contexts, projected, truth=ds.truth)
    result = subopt_fit(fp, cleaned, cfg.inner)
    meta = dict(result.meta)
    meta["bandwidth"] = bw
    return FitResult(
        theta=result.theta,
        iterations=result.iterations,
        grad_norm=result.grad_norm,
        loss_trace=result.loss_trace,
        wall_time=result.wall_time,
        meta=meta,
    )
