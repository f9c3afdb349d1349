"""Contextual shortest-path estimation pipeline.

Ingests an edge list and per-trip travel records, derives observed optimal
paths by solving a shortest path under each record's realized edge times,
and fits a matrix cost parameter mapping trip context to edge costs.  A
synthetic grid generator with a planted parameter stands in for real trip
data, which cannot be bundled.

CSV formats:
  edges:   header ``edge_id,tail,head``; node ids are arbitrary strings;
           edge ids must be exactly 0..d-1 (any row order).
  records: header ``t_0,...,t_{d-1},f_1,...,f_{m-1}``; realized times must
           be strictly positive; an intercept feature fixed at 1 is
           appended automatically as the last context coordinate.
"""

from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParseError, UnsupportedRegionError
from .graphs import Graph, shortest_path_batch
from .model import (
    CostKind,
    CostMap,
    Dataset,
    FlowPolytope,
    ForwardProblem,
    Parameter,
    Sense,
    _cost_batch,
    as_parameter,
    rng_stream,
)
from .solvers import FwConfig, _solve_exact_batch
from .metrics import MetricsReport, parameter_error
from .train import FitResult, SgdConfig, SpaConfig, fy_sgd_fit, spa_fit, subopt_fit

SP_METHODS = ("FY", "SUBOPT", "KKA", "SPA")


@dataclass(frozen=True)
class TravelRecord:
    """One trip: context features (intercept last, fixed at 1) and the
    realized time of every edge during that trip."""

    context: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.context, dtype=float)
        t = np.asarray(self.times, dtype=float)
        if u.ndim != 1 or t.ndim != 1:
            raise ValueError("context and times must be vectors")
        if u[-1] != 1.0:
            raise ValueError("context must end with an intercept equal to 1")
        if np.any(t <= 0):
            raise ValueError("realized edge times must be strictly positive")
        u.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "context", u)
        object.__setattr__(self, "times", t)


@dataclass(frozen=True)
class SpDataset:
    """Graph plus travel records plus the derived observed paths.

    ``observations[i]`` is the 0/1 indicator of the shortest path under
    record i's realized times, the proxy for the decision a cost-aware
    traveler would have taken.  ``theta_star`` is only set by the synthetic
    generator; it stays None for ingested data.
    """

    graph: Graph
    records: tuple[TravelRecord, ...]
    observations: np.ndarray
    theta_star: Parameter | None = None

    def __post_init__(self):
        ys = np.asarray(self.observations, dtype=float)
        if ys.shape != (len(self.records), self.graph.num_edges):
            raise ValueError("observations shape disagrees with records/graph")
        ys.setflags(write=False)
        object.__setattr__(self, "observations", ys)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def m(self) -> int:
        return self.records[0].context.size

    @cached_property
    def contexts(self) -> np.ndarray:
        out = np.stack([r.context for r in self.records])
        out.setflags(write=False)
        return out

    @cached_property
    def times(self) -> np.ndarray:
        out = np.stack([r.times for r in self.records])
        out.setflags(write=False)
        return out

    def subset(self, idx) -> "SpDataset":
        idx = np.asarray(idx, dtype=int)
        return SpDataset(
            self.graph,
            tuple(self.records[i] for i in idx),
            self.observations[idx],
            self.theta_star,
        )


def _derive_observations(g: Graph, times: np.ndarray) -> np.ndarray:
    return shortest_path_batch(g, times)


def load_graph(path, source: str, sink: str) -> Graph:
    """Read an edge CSV and return the graph with named source and sink.

    Node names are mapped to dense indices in order of first appearance;
    source and sink are looked up by name after reading all rows.
    """
    rows: list[tuple[int, str, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["edge_id", "tail", "head"]:
            raise ParseError("edge file header must be edge_id,tail,head", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError("expected 3 columns", line=lineno)
            try:
                eid = int(row[0])
            except ValueError:
                raise ParseError(f"bad edge_id {row[0]!r}", line=lineno) from None
            rows.append((eid, row[1].strip(), row[2].strip()))
    if not rows:
        raise ParseError("edge file has no edges")
    ids = sorted(e for e, _, _ in rows)
    if ids != list(range(len(rows))):
        raise ParseError("edge_id values must be exactly 0..d-1 with no gaps")

    names: dict[str, int] = {}
    for _, tail, head in rows:
        for nm in (tail, head):
            if nm not in names:
                names[nm] = len(names)
    for nm, role in ((source, "source"), (sink, "sink")):
        if nm not in names:
            raise ParseError(f"{role} node {nm!r} does not appear in the edge file")

    d = len(rows)
    tails = np.zeros(d, dtype=int)
    heads = np.zeros(d, dtype=int)
    for eid, tail, head in rows:
        tails[eid] = names[tail]
        heads[eid] = names[head]
    return Graph(len(names), tails, heads, names[source], names[sink])


def load_records(path, graph: Graph) -> SpDataset:
    """Read a records CSV and derive the observed paths.

    Any row with a nonpositive time, a non-numeric field, or the wrong
    column count is rejected with its line number.
    """
    d = graph.num_edges
    t_cols = [f"t_{i}" for i in range(d)]
    records: list[TravelRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("records file is empty", line=1)
        header = [c.strip() for c in header]
        if header[:d] != t_cols:
            raise ParseError(f"first {d} columns must be t_0..t_{d - 1}", line=1)
        feat = header[d:]
        if feat != [f"f_{j + 1}" for j in range(len(feat))]:
            raise ParseError("feature columns must be f_1..f_{m-1}", line=1)
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} columns, got {len(row)}", line=lineno)
            try:
                vals = np.array([float(c) for c in row], dtype=float)
            except ValueError:
                raise ParseError("non-numeric field", line=lineno) from None
            t = vals[:d]
            if np.any(t <= 0) or not np.all(np.isfinite(vals)):
                raise ParseError("times must be finite and strictly positive", line=lineno)
            u = np.concatenate([vals[d:], [1.0]])
            records.append(TravelRecord(u, t))
    if not records:
        raise ParseError("records file has no data rows")
    recs = tuple(records)
    ys = _derive_observations(graph, np.stack([r.times for r in recs]))
    return SpDataset(graph, recs, ys)


# ---------------------------------------------------------------------------
# synthetic instance


def grid_graph(num_nodes: int = 45, num_edges: int = 93) -> Graph:
    """Directed grid from top-left to bottom-right with optional diagonals.

    Rows is the divisor of num_nodes nearest to (and at most) its square
    root, so 45 nodes form a 5 x 9 grid.  Edges are rightward, then
    downward, then the first row-major down-right diagonals until the
    requested count is reached.
    """
    if num_nodes < 2:
        raise ValueError("need at least 2 nodes")
    rows = max(r for r in range(1, int(num_nodes**0.5) + 1) if num_nodes % r == 0)
    cols = num_nodes // rows

    def node(r, c):
        return r * cols + c

    edges: list[tuple[int, int]] = []
    for r in range(rows):
        for c in range(cols - 1):
            edges.append((node(r, c), node(r, c + 1)))
    for r in range(rows - 1):
        for c in range(cols):
            edges.append((node(r, c), node(r + 1, c)))
    base = len(edges)
    extra = num_edges - base
    diag = (rows - 1) * (cols - 1)
    if extra < 0 or extra > diag:
        raise ValueError(f"num_edges must be in [{base}, {base + diag}] for this grid")
    added = 0
    for r in range(rows - 1):
        for c in range(cols - 1):
            if added == extra:
                break
            edges.append((node(r, c), node(r + 1, c + 1)))
            added += 1
        if added == extra:
            break
    tails = np.array([e[0] for e in edges])
    heads = np.array([e[1] for e in edges])
    return Graph(num_nodes, tails, heads, 0, num_nodes - 1)


def planted_theta(graph: Graph, m: int = 12, seed: int = 0) -> np.ndarray:
    """Draw a d x m parameter whose predicted times are >= 1 on [0,1] features.

    Feature weights may be mildly negative; the intercept column absorbs
    the worst-case negative contribution so Theta u stays positive for
    every context in the unit cube.
    """
    rng = rng_stream(seed, 41)
    d = graph.num_edges
    w = rng.uniform(-0.3, 1.0, size=(d, m - 1))
    intercept = rng.uniform(1.0, 3.0, size=d) + np.clip(-w, 0.0, None).sum(axis=1)
    return np.column_stack([w, intercept])


def synth_graph_instance(
    num_nodes: int = 45,
    num_edges: int = 93,
    m: int = 12,
    theta_star=None,
    n: int = 2000,
    sigma: float = 0.1,
    seed: int = 0,
) -> SpDataset:
    """Generate a grid instance with planted parameter and multiplicative noise.

    Realized times are Theta* u scaled by a mean-one lognormal factor
    exp(sigma * z - sigma^2 / 2), clamped below at 0.01; observations are
    the shortest paths under those realized times.
    """
    if m < 2:
        raise ValueError("need at least one feature plus the intercept")
    g = grid_graph(num_nodes, num_edges)
    if theta_star is None:
        theta = planted_theta(g, m, seed)
    else:
        theta = np.asarray(theta_star, dtype=float)
        if theta.shape != (g.num_edges, m):
            raise ValueError("theta_star must have shape (num_edges, m)")
    rng = rng_stream(seed, 42)
    feats = rng.uniform(0.0, 1.0, size=(n, m - 1))
    ctxs = np.column_stack([feats, np.ones(n)])
    mean_times = ctxs @ theta.T
    if sigma > 0:
        factor = np.exp(sigma * rng.standard_normal((n, g.num_edges)) - sigma**2 / 2)
    else:
        factor = np.ones((n, g.num_edges))
    times = np.maximum(mean_times * factor, 0.01)
    records = tuple(TravelRecord(ctxs[i], times[i]) for i in range(n))
    ys = _derive_observations(g, times)
    return SpDataset(g, records, ys, Parameter.from_matrix(theta))


# ---------------------------------------------------------------------------
# training and evaluation


def _flow_problem(sp: SpDataset) -> ForwardProblem:
    cm = CostMap(CostKind.MATRIX_PRODUCT, sp.graph.num_edges, sp.m)
    return ForwardProblem(cm, FlowPolytope(sp.graph), Sense.MIN)


# Budgets are asymmetric on purpose: the smooth FY risk plateaus within a
# few epochs of SGD, while the nonsmooth baseline gets the usual 10-20x
# sample budget a 1/sqrt(t) subgradient schedule needs to flatten out.
# FY here sees 100 x 96 sample gradients (8 epochs of a 1200-row train
# split), the baseline 12000 x 16 (160 epochs).
_FY_FW = FwConfig(max_iters=150, gap_tol=2e-2, correct_every=4)
_DEFAULT_CFG = {
    "FY": SgdConfig(
        learning_rate=0.25,
        batch_size=96,
        max_iters=100,
        lam=0.5,
        eval_every=100,
        fw=_FY_FW,
    ),
    "SUBOPT": SgdConfig(
        learning_rate=0.5,
        batch_size=16,
        max_iters=12000,
        step_decay="inv_sqrt",
        eval_every=1000,
    ),
    "SPA": SpaConfig(
        inner=SgdConfig(
            learning_rate=0.5,
            batch_size=16,
            max_iters=2000,
            step_decay="inv_sqrt",
            eval_every=1000,
        )
    ),
}


def train_test_split(n: int, seed: int, train_frac: float = 0.6):
    """Deterministic shuffled index split."""
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must be in (0, 1)")
    perm = rng_stream(seed, 43).permutation(n)
    k = int(round(train_frac * n))
    if k == 0 or k == n:
        raise ValueError("split leaves an empty side")
    return perm[:k], perm[k:]


def sp_fit(sp: SpDataset, method: str, cfg=None, seed: int = 0) -> FitResult:
    """Fit the edge-cost parameter on the full given dataset."""
    if method not in SP_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "KKA":
        raise UnsupportedRegionError(
            "KKA needs an explicit inequality description; flow regions have none here"
        )
    fp = _flow_problem(sp)
    ds = Dataset(sp.contexts, sp.observations)
    if cfg is None:
        cfg = _DEFAULT_CFG[method]
    if isinstance(cfg, SgdConfig) and cfg.seed != seed:
        cfg = dataclasses.replace(cfg, seed=seed)
    elif isinstance(cfg, SpaConfig) and cfg.inner.seed != seed:
        cfg = dataclasses.replace(cfg, inner=dataclasses.replace(cfg.inner, seed=seed))
    if method == "FY":
        return fy_sgd_fit(fp, ds, cfg)
    if method == "SUBOPT":
        return subopt_fit(fp, ds, cfg)
    return spa_fit(fp, ds, cfg)


def sp_run(sp: SpDataset, method: str, cfg=None, seed: int = 0, train_frac: float = 0.6) -> MetricsReport:
    """Split, fit, and score one method against the clairvoyant benchmark.

    Decision error compares predicted paths to the observed (clairvoyant)
    ones on the test split; regret is the mean realized-time excess of the
    predicted path, and the relative ratio expresses it as a percentage of
    the clairvoyant mean.  Parameter error is only available when the
    dataset carries a planted parameter.
    """
    t0 = time.perf_counter()
    tr_idx, te_idx = train_test_split(len(sp), seed, train_frac)
    fit = sp_fit(sp.subset(tr_idx), method, cfg, seed)

    test = sp.subset(te_idx)
    fp = _flow_problem(sp)
    hcs = fp.canonical_sign * _cost_batch(fp.cost_map, fit.theta, test.contexts)
    xs_hat = _solve_exact_batch(fp, hcs, None)
    ys = test.observations
    dec_err = float(np.mean(np.sum((xs_hat - ys) ** 2, axis=1)))
    realized = np.einsum("ij,ij->i", test.times, xs_hat)
    clair = np.einsum("ij,ij->i", test.times, ys)
    reg = float(np.mean(realized - clair))
    ratio = 100.0 * reg / float(np.mean(clair))
    if sp.theta_star is not None:
        p_err = parameter_error(fit.theta, sp.theta_star)
    else:
        p_err = float("nan")
    return MetricsReport(
        parameter_error=p_err,
        decision_error=dec_err,
        regret=reg,
        relative_regret_ratio=ratio,
        n_test=len(te_idx),
        wall_time=time.perf_counter() - t0,
    )
