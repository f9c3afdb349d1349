"""Evaluation metrics and theorem-shaped diagnostic checks.

Decision error and regret are averages over a fixed bank of evaluation
contexts, always computed through the deterministic exact solver so that
tie-breaks cancel between the estimate and the truth.  Regret is the gap in
the full canonical objective (linear term plus any base_quad curvature), so
it is nonnegative by optimality of the truth and reduces to the usual
linear-cost regret when base_quad is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import shortest_path_batch
from .model import (
    FlowPolytope,
    ForwardProblem,
    Parameter,
    _cost_batch,
    as_parameter,
)
from .solvers import FwConfig, _solve_exact_batch, _solve_reg_batch


def parameter_error(theta_hat, theta_star) -> float:
    """l1 distance between flattened parameter vectors."""
    a = theta_hat.values if isinstance(theta_hat, Parameter) else np.ravel(theta_hat)
    b = theta_star.values if isinstance(theta_star, Parameter) else np.ravel(theta_star)
    if a.size != b.size:
        raise ValueError("parameter dimensions disagree")
    return float(np.abs(a - b).sum())


def _exact_batch(fp: ForwardProblem, theta, ctxs: np.ndarray, fw=None) -> np.ndarray:
    theta = as_parameter(theta, fp.cost_map)
    hcs = fp.canonical_sign * _cost_batch(fp.cost_map, theta, ctxs)
    return _solve_exact_batch(fp, hcs, fw)


def decision_error(fp: ForwardProblem, theta_hat, theta_star, ctxs, *, fw=None) -> float:
    """Mean squared distance between estimated and true exact decisions."""
    ctxs = np.atleast_2d(np.asarray(ctxs, dtype=float))
    xs_hat = _exact_batch(fp, theta_hat, ctxs, fw)
    xs_star = _exact_batch(fp, theta_star, ctxs, fw)
    return float(np.mean(np.sum((xs_hat - xs_star) ** 2, axis=1)))


def regret(fp: ForwardProblem, theta_hat, theta_star, ctxs, *, fw=None) -> float:
    """Mean true-objective gap of the estimated decisions.

    Positive when the decisions induced by theta_hat cost more (under the
    true parameter) than the optimal ones; zero iff they are equally good.
    """
    ctxs = np.atleast_2d(np.asarray(ctxs, dtype=float))
    theta_star = as_parameter(theta_star, fp.cost_map)
    hcs = fp.canonical_sign * _cost_batch(fp.cost_map, theta_star, ctxs)
    xs_hat = _exact_batch(fp, theta_hat, ctxs, fw)
    xs_star = _solve_exact_batch(fp, hcs, fw)

    def value(z):
        return np.einsum("ij,ij->i", hcs, z) - 0.5 * fp.base_quad * np.einsum(
            "ij,ij->i", z, z
        )

    return float(np.mean(value(xs_star) - value(xs_hat)))


def relative_regret_ratio(fp: ForwardProblem, theta_hat, ctxs, times) -> float:
    """Percent excess realized cost of predicted paths over clairvoyant ones.

    ``times`` holds the realized edge costs of each evaluation record; the
    clairvoyant benchmark re-solves the shortest path under those costs.
    """
    if not isinstance(fp.region, FlowPolytope):
        raise ValueError("relative regret is defined for flow regions")
    ctxs = np.atleast_2d(np.asarray(ctxs, dtype=float))
    times = np.atleast_2d(np.asarray(times, dtype=float))
    if times.shape[0] != ctxs.shape[0]:
        raise ValueError("times and contexts disagree on record count")
    g = fp.region.graph
    xs_hat = _exact_batch(fp, theta_hat, ctxs)
    realized = float(np.mean(np.einsum("ij,ij->i", times, xs_hat)))
    ys = shortest_path_batch(g, times)
    clair = float(np.mean(np.einsum("ij,ij->i", times, ys)))
    if clair <= 0:
        raise ValueError("clairvoyant cost must be positive")
    return 100.0 * (realized - clair) / clair


@dataclass(frozen=True)
class MetricsReport:
    parameter_error: float
    decision_error: float
    regret: float
    relative_regret_ratio: float | None
    n_test: int
    wall_time: float


# ---------------------------------------------------------------------------
# calibration bound check


@dataclass(frozen=True)
class CalibrationReport:
    lhs: float
    reg_error_term: float
    excess_risk_term: float
    rhs: float
    holds: bool


def calibration_check(
    fp: ForwardProblem,
    theta,
    theta_star,
    lam: float,
    ctxs,
    candidates=(),
    *,
    slack: float = 1e-8,
    fw: FwConfig | None = None,
) -> CalibrationReport:
    """Check the calibration inequality relating decision error to excess risk.

    On a noiseless conditional-mean surrogate (observations replaced by the
    true exact decisions) the decision error of theta is bounded by twice
    the regularization error plus 4/lam times its excess risk.  The infimum
    in the excess-risk term is approximated from below by the best candidate
    (theta_star is always included), which only shrinks the right-hand side,
    so the check is conservative and reported as a soft holds flag.
    """
    from .losses import _fy_batch

    ctxs = np.atleast_2d(np.asarray(ctxs, dtype=float))
    theta = as_parameter(theta, fp.cost_map)
    theta_star = as_parameter(theta_star, fp.cost_map)

    lhs = decision_error(fp, theta, theta_star, ctxs, fw=fw)

    hcs = fp.canonical_sign * _cost_batch(fp.cost_map, theta, ctxs)
    x_reg = _solve_reg_batch(fp, hcs, lam, fw)
    x_exact = _solve_exact_batch(fp, hcs, fw)
    reg_term = float(np.mean(np.sum((x_reg - x_exact) ** 2, axis=1)))

    surrogate = _exact_batch(fp, theta_star, ctxs, fw)

    def risk(t):
        loss, _, _ = _fy_batch(fp, t, ctxs, surrogate, lam, fw=fw, want_grad=False)
        return loss

    pool = [theta_star] + [as_parameter(c, fp.cost_map) for c in candidates]
    best = min(risk(t) for t in pool)
    excess = risk(theta) - best
    rhs = 2.0 * reg_term + (4.0 / lam) * max(excess, 0.0)
    return CalibrationReport(
        lhs=lhs,
        reg_error_term=reg_term,
        excess_risk_term=excess,
        rhs=rhs,
        holds=bool(lhs <= rhs + slack),
    )


# ---------------------------------------------------------------------------
# regret bound check


@dataclass(frozen=True)
class RegretBoundReport:
    regret: float
    cost_second_moment: float
    decision_error: float
    bound: float
    holds: bool


def regret_bound_check(
    fp: ForwardProblem,
    theta_hat,
    theta_star,
    ctxs,
    *,
    slack: float = 1e-8,
) -> RegretBoundReport:
    """Cauchy-Schwarz regret bound: regret <= sqrt(mean ||h||^2 * decision error).

    Both moments are empirical means over the same contexts, which is what
    makes the inequality an identity-level consequence of Cauchy-Schwarz
    for linear objectives.
    """
    ctxs = np.atleast_2d(np.asarray(ctxs, dtype=float))
    theta_star = as_parameter(theta_star, fp.cost_map)
    hcs = _cost_batch(fp.cost_map, theta_star, ctxs)
    b_hat = float(np.mean(np.sum(hcs**2, axis=1)))
    d_hat = decision_error(fp, theta_hat, theta_star, ctxs)
    reg = regret(fp, theta_hat, theta_star, ctxs)
    bound = float(np.sqrt(b_hat * d_hat))
    return RegretBoundReport(
        regret=reg,
        cost_second_moment=b_hat,
        decision_error=d_hat,
        bound=bound,
        holds=bool(reg <= bound + slack),
    )
