"""Forward solvers: closed-form projections and Frank-Wolfe for flow regions.

Everything here works on the canonical max form

    max_{x in region}  hc^T x - (lam_eff / 2) ||x||^2

whose solution for lam_eff > 0 is the Euclidean projection of hc / lam_eff
onto the region, and for lam_eff = 0 an extreme point chosen by a
deterministic tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergenceError
from .graphs import Graph, shortest_path, shortest_path_batch
from .model import (
    Ball,
    Box,
    FlowPolytope,
    ForwardProblem,
    NonNegL1Cap,
    Region,
    as_parameter,
)

__all__ = [
    "FwConfig",
    "fw_project",
    "project_box",
    "project_ball",
    "project_nonneg_l1cap",
    "shortest_path",
    "solve_exact",
    "solve_regularized",
]


# ---------------------------------------------------------------------------
# projections (each accepts a single vector; batch variants are internal)


def project_box(v, lo, hi) -> np.ndarray:
    """Clip v into the box [lo, hi]."""
    return np.clip(np.asarray(v, dtype=float), lo, hi)


def project_ball(v, radius: float) -> np.ndarray:
    """Scale v back onto the centered ball when it sticks out."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm <= radius:
        return v.copy()
    return (radius / nrm) * v


def project_nonneg_l1cap(v, cap: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= cap}.

    When the clipped point already satisfies the cap it is the answer;
    otherwise the sum constraint is tight and the projection is the usual
    sorted-threshold shift max(v - tau, 0) with tau chosen so the coordinates
    sum to cap.  O(d log d).
    """
    return _project_nonneg_l1cap_batch(np.asarray(v, dtype=float)[None, :], cap)[0]


def _project_box_batch(vs: np.ndarray, lo, hi) -> np.ndarray:
    return np.clip(vs, lo, hi)


def _project_ball_batch(vs: np.ndarray, radius: float) -> np.ndarray:
    nrm = np.linalg.norm(vs, axis=1)
    scale = np.ones_like(nrm)
    outside = nrm > radius
    scale[outside] = radius / nrm[outside]
    return vs * scale[:, None]


def _project_nonneg_l1cap_batch(vs: np.ndarray, cap: float) -> np.ndarray:
    clipped = np.maximum(vs, 0.0)
    sums = clipped.sum(axis=1)
    out = clipped
    over = sums > cap
    if np.any(over):
        out = clipped.copy()
        v = vs[over]
        d = v.shape[1]
        u = -np.sort(-v, axis=1)
        css = np.cumsum(u, axis=1)
        j = np.arange(1, d + 1)
        cond = u - (css - cap) / j > 0
        # cond is True on a prefix; rho is the largest feasible j
        rho = cond.sum(axis=1)
        tau = (css[np.arange(v.shape[0]), rho - 1] - cap) / rho
        out[over] = np.maximum(v - tau[:, None], 0.0)
    return out


def _project_region_batch(region: Region, vs: np.ndarray, fw: "FwConfig | None") -> np.ndarray:
    if isinstance(region, Box):
        return _project_box_batch(vs, region.lo, region.hi)
    if isinstance(region, Ball):
        return _project_ball_batch(vs, region.radius)
    if isinstance(region, NonNegL1Cap):
        return _project_nonneg_l1cap_batch(vs, region.cap)
    cfg = fw if fw is not None else FwConfig()
    return _fw_project_batch(region.graph, np.asarray(vs, dtype=float), cfg)


# ---------------------------------------------------------------------------
# linear maximization over a region (the lam_eff = 0 branch)


def _linear_argmax(region: Region, hc: np.ndarray) -> np.ndarray:
    """argmax of hc^T x over the region with a deterministic tie-break.

    Box ties sit at the coordinate midpoint, the cap region breaks argmax
    ties toward the lowest index, and flow regions inherit the shortest-path
    edge-order rule.  Zero cost is not an error, it just lands on the
    tie-broken point.
    """
    return _linear_argmax_batch(region, np.asarray(hc, dtype=float)[None, :])[0]


def _linear_argmax_batch(region: Region, hcs: np.ndarray) -> np.ndarray:
    if isinstance(region, Box):
        mid = 0.5 * (region.lo + region.hi)
        return np.where(hcs > 0, region.hi, np.where(hcs < 0, region.lo, mid))
    if isinstance(region, Ball):
        nrm = np.linalg.norm(hcs, axis=1)
        safe = np.where(nrm > 0, nrm, 1.0)
        return np.where(nrm[:, None] > 0, (region.radius / safe)[:, None] * hcs, 0.0)
    if isinstance(region, NonNegL1Cap):
        k = np.argmax(hcs, axis=1)  # lowest index on ties
        x = np.zeros_like(hcs)
        rows = np.arange(hcs.shape[0])
        x[rows, k] = np.where(hcs[rows, k] > 0, region.cap, 0.0)
        return x
    return shortest_path_batch(region.graph, -hcs)


# ---------------------------------------------------------------------------
# forward solves


def solve_exact(
    fp: ForwardProblem,
    theta,
    u,
    *,
    cost_override: np.ndarray | None = None,
    fw: "FwConfig | None" = None,
) -> np.ndarray:
    """Optimal decision of the forward problem at (theta, u).

    With base_quad = 0 this is a tie-broken extreme point; with base_quad > 0
    the objective is strongly concave and the optimum is the projection of
    hc / base_quad onto the region.  ``cost_override`` substitutes a
    canonical cost vector directly (used by objective-noise sampling).
    """
    if cost_override is not None:
        hc = np.asarray(cost_override, dtype=float)
    else:
        hc = fp.canonical_cost(as_parameter(theta, fp.cost_map), u)
    if fp.base_quad > 0:
        return _project_region_batch(fp.region, hc[None, :] / fp.base_quad, fw)[0]
    return _linear_argmax(fp.region, hc)


def solve_regularized(
    fp: ForwardProblem,
    theta,
    u,
    lam: float,
    *,
    fw: "FwConfig | None" = None,
) -> np.ndarray:
    """Unique optimum of the quadratically regularized forward problem.

    Solves max hc^T x - ((base_quad + lam)/2)||x||^2 over the region, i.e.
    projects hc / (base_quad + lam).  Requires lam > 0.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    hc = fp.canonical_cost(as_parameter(theta, fp.cost_map), u)
    lam_eff = fp.base_quad + lam
    return _project_region_batch(fp.region, hc[None, :] / lam_eff, fw)[0]


def _solve_exact_batch(fp: ForwardProblem, hcs: np.ndarray, fw=None) -> np.ndarray:
    if fp.base_quad > 0:
        return _project_region_batch(fp.region, hcs / fp.base_quad, fw)
    return _linear_argmax_batch(fp.region, hcs)


def _solve_reg_batch(fp: ForwardProblem, hcs: np.ndarray, lam: float, fw=None) -> np.ndarray:
    lam_eff = fp.base_quad + lam
    return _project_region_batch(fp.region, hcs / lam_eff, fw)


# ---------------------------------------------------------------------------
# Frank-Wolfe projection onto the path polytope


@dataclass(frozen=True)
class FwConfig:
    """Knobs for fw_project.

    The duality gap <= gap_tol certifies ||x - projection||^2 <= 2 * gap.
    Plain line-search Frank-Wolfe stalls at O(1/t) once the solution lies on
    a face, so every ``correct_every`` iterations the weights over the
    vertices discovered so far are re-solved exactly; with the optimal face's
    vertices in hand that snaps the iterate onto the true projection and the
    gap collapses to roundoff.
    """

    max_iters: int = 2000
    gap_tol: float = 1e-6
    step_rule: str = "exact_line_search"
    correct_every: int = 8

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.gap_tol <= 0:
            raise ValueError("gap_tol must be positive")
        if self.step_rule != "exact_line_search":
            raise ValueError(f"unknown step rule {self.step_rule!r}")


def fw_project(g: Graph, target, cfg: FwConfig | None = None) -> np.ndarray:
    """Euclidean projection of ``target`` onto the graph's path polytope.

    Frank-Wolfe with shortest_path as the linear oracle and exact line search
    on the quadratic objective f(x) = 0.5 ||x - target||^2, plus periodic
    exact re-solves over the visited vertices (see FwConfig).  Deterministic.

    Raises NonConvergenceError (carrying the final gap) if the budget runs
    out before the gap certificate reaches cfg.gap_tol.
    """
    cfg = cfg or FwConfig()
    target = np.asarray(target, dtype=float)
    if target.shape != (g.num_edges,):
        raise ValueError(f"target must have shape ({g.num_edges},)")
    return _fw_project_batch(g, target[None, :], cfg)[0]


def _fw_project_batch(g: Graph, targets: np.ndarray, cfg: FwConfig) -> np.ndarray:
    """fw_project across a batch, sharing each relaxation sweep.

    Per-row state (visited vertices, their weights, the iterate) lives in
    padded arrays; rows whose duality gap certificate is met drop out of the
    working set.  The gap is checked before stepping, so a row whose very
    first vertex is optimal is returned untouched, same as the scalar story.
    """
    nb = targets.shape[0]
    x = shortest_path_batch(g, -targets)
    cap = 8
    verts = np.zeros((nb, cap, targets.shape[1]))
    verts[:, 0] = x
    counts = np.ones(nb, dtype=np.int64)
    weights = np.zeros((nb, cap))
    weights[:, 0] = 1.0
    active = np.ones(nb, dtype=bool)

    for it in range(cfg.max_iters):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            return x
        grad = x[rows] - targets[rows]
        s = shortest_path_batch(g, grad)
        gap = np.einsum("ij,ij->i", grad, x[rows] - s)
        done = gap <= cfg.gap_tol
        if done.any():
            active[rows[done]] = False
            keep = ~done
            if not keep.any():
                continue
            rows, grad, s, gap = rows[keep], grad[keep], s[keep], gap[keep]

        d = s - x[rows]
        denom = np.einsum("ij,ij->i", d, d)
        gamma = np.where(denom > 0, np.clip(gap / np.maximum(denom, 1e-300), 0.0, 1.0), 1.0)
        x[rows] += gamma[:, None] * d

        kmax = int(counts[rows].max())
        if kmax == cap:
            cap *= 2
            verts = np.concatenate([verts, np.zeros_like(verts)], axis=1)
            weights = np.concatenate([weights, np.zeros_like(weights)], axis=1)
        sub = verts[rows, :kmax]
        hit = (sub == s[:, None, :]).all(axis=2)
        hit &= np.arange(kmax)[None, :] < counts[rows, None]
        found = hit.any(axis=1)
        slot = np.where(found, hit.argmax(axis=1), counts[rows])
        fresh = rows[~found]
        verts[fresh, counts[fresh]] = s[~found]
        counts[fresh] += 1
        weights[rows] *= (1.0 - gamma)[:, None]
        weights[rows, slot] += gamma

        if (it + 1) % cfg.correct_every == 0:
            _correct_rows(verts, counts, weights, x, targets, rows)

    # Last chance: correct, then re-certify before giving up.
    rows = np.flatnonzero(active)
    _correct_rows(verts, counts, weights, x, targets, rows)
    grad = x[rows] - targets[rows]
    s = shortest_path_batch(g, grad)
    gap = np.einsum("ij,ij->i", grad, x[rows] - s)
    if np.any(gap > cfg.gap_tol):
        raise NonConvergenceError(float(gap.max()), cfg.max_iters)
    return x


def _correct_rows(verts, counts, weights, x, targets, rows) -> None:
    """Exact projection onto each row's visited-vertex hull, in place.

    Rows sharing a vertex count are solved as one stacked KKT system over
    their full vertex sets; with every vertex in the support there is no
    dual-feasibility phase, so a solution that is already nonnegative is the
    hull optimum.  Rows whose stacked solution is infeasible or degenerate
    fall back to the scalar active-set routine.  A candidate only replaces
    the iterate when it does not worsen the objective, so a garbage solve
    from a singular system can never hurt.
    """
    for k in np.unique(counts[rows]):
        grp = rows[counts[rows] == k]
        if k == 1:
            continue
        P = verts[grp, :k]
        G = P @ P.transpose(0, 2, 1)
        c = np.einsum("mke,me->mk", P, targets[grp])
        kkt = np.zeros((grp.size, k + 1, k + 1))
        kkt[:, :k, :k] = G
        kkt[:, :k, k] = 1.0
        kkt[:, k, :k] = 1.0
        rhs = np.concatenate([c, np.ones((grp.size, 1))], axis=1)
        try:
            sol = np.linalg.solve(kkt, rhs[:, :, None])[:, :, 0]
            ws = sol[:, :k]
            good = (ws >= -1e-12).all(axis=1)
        except np.linalg.LinAlgError:
            ws = np.zeros((grp.size, k))
            good = np.zeros(grp.size, dtype=bool)
        for i, r in enumerate(grp):
            r = int(r)
            if good[i]:
                w = np.maximum(ws[i], 0.0)
            else:
                w = _simplex_lsq(verts[r, :k], targets[r], w0=weights[r, :k])
            x_new = verts[r, :k].T @ w
            if (
                0.5 * np.sum((x_new - targets[r]) ** 2)
                > 0.5 * np.sum((x[r] - targets[r]) ** 2) + 1e-15
            ):
                continue
            keep = w > 1e-14
            if not np.any(keep):
                keep[int(np.argmax(w))] = True
            nk = int(keep.sum())
            verts[r, :nk] = verts[r, :k][keep]
            weights[r, :nk] = w[keep]
            weights[r, nk:] = 0.0
            counts[r] = nk
            x[r] = x_new


def _simplex_lsq(
    P: np.ndarray, t: np.ndarray, max_pivots: int | None = None, w0: np.ndarray | None = None
) -> np.ndarray:
    """Minimize ||P^T w - t||^2 over the probability simplex, exactly.

    Active-set scheme in the style of NNLS: solve the equality-constrained
    least squares on the current support through its KKT system, step back
    toward feasibility when a weight goes negative, and admit the most
    violating zero coordinate until dual feasibility holds.  k is tiny here
    (vertices visited by Frank-Wolfe), so the cubic cost is irrelevant.

    ``w0`` warm-starts the support; when it already matches the optimal face
    the loop exits after a single KKT solve, which is the common case for
    the repeated corrections inside fw_project.
    """
    k = P.shape[0]
    if k == 1:
        return np.ones(1)
    if max_pivots is None:
        max_pivots = 12 * (k + 1)
    G = P @ P.T
    c = P @ t
    if w0 is not None and np.any(w0 > 1e-14):
        w = np.maximum(np.asarray(w0, dtype=float), 0.0)
        w = w / w.sum()
        support = w > 1e-14
    else:
        support = np.zeros(k, dtype=bool)
        support[0] = True
        w = np.zeros(k)
        w[0] = 1.0

    for _ in range(max_pivots):
        idx = np.flatnonzero(support)
        kk = idx.size
        kkt = np.zeros((kk + 1, kk + 1))
        kkt[:kk, :kk] = G[np.ix_(idx, idx)]
        kkt[:kk, kk] = 1.0
        kkt[kk, :kk] = 1.0
        rhs = np.concatenate([c[idx], [1.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        w_cand = np.zeros(k)
        w_cand[idx] = sol[:kk]

        if np.min(w_cand[idx]) < -1e-12:
            # Step from w toward the candidate until a weight hits zero.
            diff = w_cand[idx] - w[idx]
            bad = diff < 0
            with np.errstate(divide="ignore", invalid="ignore"):
                alphas = np.where(bad, -w[idx] / diff, np.inf)
            alpha = float(np.min(alphas))
            alpha = min(max(alpha, 0.0), 1.0)
            w[idx] = w[idx] + alpha * diff
            drop = idx[w[idx] <= 1e-14]
            w[drop] = 0.0
            support[drop] = False
            if not np.any(support):
                support[int(np.argmin(np.diag(G) - 2 * c))] = True
                w[support] = 1.0
            continue

        w = w_cand
        # Dual feasibility: gradient on zero coordinates must not undercut
        # the support's common value mu (the KKT multiplier).
        mu = float(sol[kk])
        grad = G @ w - c
        off = np.flatnonzero(~support)
        if off.size == 0:
            return w
        viol = grad[off] + mu  # grad_j = -mu on the support at optimality
        j = off[int(np.argmin(viol))]
        if viol.min() >= -1e-12:
            return w
        support[j] = True

    return w
