"""Problem data for inverse optimization.

A forward problem picks the decision maximizing ``h(theta; u)^T x`` over a
feasible region, where the cost map h is linear in the unknown parameter
theta and depends on an observed context u.  Minimization problems are folded
into the same canonical max form by negating the cost, and a quadratic term
``-(base_quad/2)||x||^2`` in the canonical objective covers forward problems
with a fixed curvature term.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .graphs import Graph


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator derived from a master seed and an integer key path.

    Streams with different keys are statistically independent, so replication
    r of an experiment can use ``rng_stream(seed, r)`` without coordinating
    with its siblings.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Parameter:
    """Flat parameter vector plus its logical (rows, cols) layout.

    Matrix-valued parameters are stored row-major, so ``values`` equals
    ``matrix.ravel()`` and round-trips through ``as_matrix``.
    """

    values: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        v = _frozen(np.ravel(self.values))
        object.__setattr__(self, "values", v)
        r, c = self.shape
        if r * c != v.size:
            raise ValueError(f"shape {self.shape} incompatible with {v.size} values")

    @property
    def p(self) -> int:
        return self.values.size

    @staticmethod
    def from_vector(v) -> "Parameter":
        v = np.ravel(np.asarray(v, dtype=float))
        return Parameter(v, (v.size, 1))

    @staticmethod
    def from_matrix(m) -> "Parameter":
        m = np.asarray(m, dtype=float)
        if m.ndim != 2:
            raise ValueError("from_matrix expects a 2-D array")
        return Parameter(m.ravel(), m.shape)

    def as_matrix(self) -> np.ndarray:
        return self.values.reshape(self.shape)


# ---------------------------------------------------------------------------
# cost maps


class CostKind(enum.Enum):
    ADDITIVE = "additive"          # h = theta + u, requires d == m
    HADAMARD = "hadamard"          # h = theta * u elementwise, d == m
    MATRIX_PRODUCT = "matrix_product"  # h = Theta @ u, p = d * m
    IDENTITY = "identity"          # h = theta, context ignored


@dataclass(frozen=True)
class CostMap:
    """Linear-in-theta map (theta, u) -> cost vector h of length d."""

    kind: CostKind
    d: int
    m: int

    def __post_init__(self):
        if self.d <= 0 or self.m <= 0:
            raise ValueError("dimensions must be positive")
        if self.kind in (CostKind.ADDITIVE, CostKind.HADAMARD) and self.d != self.m:
            raise ValueError(f"{self.kind.value} cost map needs d == m")

    @property
    def p(self) -> int:
        return self.d * self.m if self.kind is CostKind.MATRIX_PRODUCT else self.d

    @property
    def param_shape(self) -> tuple[int, int]:
        if self.kind is CostKind.MATRIX_PRODUCT:
            return (self.d, self.m)
        return (self.p, 1)


def as_parameter(theta, cm: CostMap) -> Parameter:
    """Coerce an array-like into a Parameter laid out for the given cost map."""
    if isinstance(theta, Parameter):
        if theta.p != cm.p:
            raise ValueError(f"parameter has p={theta.p}, cost map expects {cm.p}")
        return theta
    v = np.ravel(np.asarray(theta, dtype=float))
    if v.size != cm.p:
        raise ValueError(f"parameter has p={v.size}, cost map expects {cm.p}")
    return Parameter(v, cm.param_shape)


def _check_context(cm: CostMap, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (cm.m,):
        raise ValueError(f"context must have shape ({cm.m},)")
    return u


def cost(cm: CostMap, theta, u) -> np.ndarray:
    """Evaluate h(theta; u)."""
    theta = as_parameter(theta, cm)
    u = _check_context(cm, u)
    t = theta.values
    if cm.kind is CostKind.ADDITIVE:
        return t + u
    if cm.kind is CostKind.HADAMARD:
        return t * u
    if cm.kind is CostKind.MATRIX_PRODUCT:
        return theta.as_matrix() @ u
    return t.copy()


def _cost_batch(cm: CostMap, theta: Parameter, ctxs: np.ndarray) -> np.ndarray:
    """h(theta; u_i) for every row of ctxs; returns an (n, d) array."""
    t = theta.values
    if cm.kind is CostKind.ADDITIVE:
        return ctxs + t
    if cm.kind is CostKind.HADAMARD:
        return ctxs * t
    if cm.kind is CostKind.MATRIX_PRODUCT:
        return ctxs @ theta.as_matrix().T
    return np.broadcast_to(t, (ctxs.shape[0], cm.d)).copy()


class CostJacobian:
    """The Jacobian dh/dtheta at a fixed context, kept as a lazy linear map.

    ``apply`` sends a parameter direction to cost space, ``transpose_apply``
    pulls a cost-space residual back; the dense matrix only materializes in
    ``to_matrix`` (meant for small problems and tests).
    """

    def __init__(self, cm: CostMap, u: np.ndarray):
        self.cm = cm
        self.u = _check_context(cm, u)

    def apply(self, v) -> np.ndarray:
        v = np.ravel(np.asarray(v, dtype=float))
        if v.size != self.cm.p:
            raise ValueError("direction has wrong parameter dimension")
        k = self.cm.kind
        if k is CostKind.HADAMARD:
            return v * self.u
        if k is CostKind.MATRIX_PRODUCT:
            return v.reshape(self.cm.d, self.cm.m) @ self.u
        return v.copy()

    def transpose_apply(self, r) -> np.ndarray:
        r = np.ravel(np.asarray(r, dtype=float))
        if r.size != self.cm.d:
            raise ValueError("residual has wrong decision dimension")
        k = self.cm.kind
        if k is CostKind.HADAMARD:
            return r * self.u
        if k is CostKind.MATRIX_PRODUCT:
            return np.outer(r, self.u).ravel()
        return r.copy()

    def to_matrix(self) -> np.ndarray:
        eye = np.eye(self.cm.p)
        return np.stack([self.apply(eye[j]) for j in range(self.cm.p)], axis=1)


def cost_jacobian(cm: CostMap, u) -> CostJacobian:
    """Jacobian of the cost map with respect to theta at context u."""
    return CostJacobian(cm, u)


def _jac_t_mean(cm: CostMap, ctxs: np.ndarray, resid: np.ndarray) -> np.ndarray:
    """mean_i J(u_i)^T resid_i over the batch; returns a (p,) vector."""
    if cm.kind is CostKind.HADAMARD:
        return (ctxs * resid).mean(axis=0)
    if cm.kind is CostKind.MATRIX_PRODUCT:
        n = ctxs.shape[0]
        return (resid.T @ ctxs / n).ravel()
    return resid.mean(axis=0)


# ---------------------------------------------------------------------------
# feasible regions


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {lo <= x <= hi}."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.ravel(self.lo))
        hi = _frozen(np.ravel(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have equal shape")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi")

    @staticmethod
    def cube(d: int, lo: float, hi: float) -> "Box":
        return Box(np.full(d, float(lo)), np.full(d, float(hi)))


@dataclass(frozen=True)
class Ball:
    """Euclidean ball {||x|| <= radius} centered at the origin."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class NonNegL1Cap:
    """Simplex-like region {x >= 0, sum(x) <= cap}."""

    cap: float

    def __post_init__(self):
        if not self.cap > 0:
            raise ValueError("cap must be positive")


@dataclass(frozen=True)
class FlowPolytope:
    """Unit source->sink flows of a graph: {x in [0,1]^E : A x = b}.

    On acyclic graphs this is exactly the convex hull of simple path
    indicators, which is the case all shipped problem builders produce.
    """

    graph: Graph

    @property
    def source(self) -> int:
        return self.graph.source

    @property
    def sink(self) -> int:
        return self.graph.sink


Region = Union[Box, Ball, NonNegL1Cap, FlowPolytope]


def region_contains(region: Region, x: np.ndarray, tol: float = 1e-9) -> bool:
    """Membership test, used by validity checks and tests."""
    x = np.asarray(x, dtype=float)
    if isinstance(region, Box):
        return bool(np.all(x >= region.lo - tol) and np.all(x <= region.hi + tol))
    if isinstance(region, Ball):
        return bool(np.linalg.norm(x) <= region.radius + tol)
    if isinstance(region, NonNegL1Cap):
        return bool(np.all(x >= -tol) and x.sum() <= region.cap + tol)
    g = region.graph
    resid = g.incidence @ x - g.supply
    return bool(
        np.all(x >= -tol)
        and np.all(x <= 1.0 + tol)
        and np.max(np.abs(resid)) <= tol
    )


# ---------------------------------------------------------------------------
# forward problems


class Sense(enum.Enum):
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class ForwardProblem:
    """Parametric optimization problem observed through its decisions.

    The canonical internal form is always

        max_{x in region}  h_c(theta; u)^T x - (base_quad / 2) ||x||^2

    with h_c = h for Max sense and h_c = -h for Min sense, so downstream
    code never branches on the sense again.
    """

    cost_map: CostMap
    region: Region
    sense: Sense = Sense.MIN
    base_quad: float = 0.0

    def __post_init__(self):
        if self.base_quad < 0:
            raise ValueError("base_quad must be nonnegative")
        d = self.cost_map.d
        r = self.region
        if isinstance(r, Box) and r.lo.size != d:
            raise ValueError("box dimension disagrees with cost map")
        if isinstance(r, FlowPolytope) and r.graph.num_edges != d:
            raise ValueError("graph edge count disagrees with cost map")

    @property
    def canonical_sign(self) -> float:
        return 1.0 if self.sense is Sense.MAX else -1.0

    def canonical_cost(self, theta, u) -> np.ndarray:
        return self.canonical_sign * cost(self.cost_map, theta, u)


# ---------------------------------------------------------------------------
# noise models and datasets


@dataclass(frozen=True)
class Noiseless:
    pass


@dataclass(frozen=True)
class NoisyDecision:
    """Additive Gaussian noise on the observed decision (may leave the region)."""

    sigma: float = 1.0


@dataclass(frozen=True)
class NoisyObjective:
    """Gaussian perturbation of the cost vector, then an exact solve."""

    sigma: float = 1.0


NoiseModel = Union[Noiseless, NoisyDecision, NoisyObjective]


@dataclass(frozen=True)
class UniformContexts:
    """Independent Uniform[low, high] coordinates of dimension dim."""

    low: float
    high: float
    dim: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError("low must not exceed high")
        if self.dim <= 0:
            raise ValueError("dim must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=(n, self.dim))


@dataclass(frozen=True)
class Dataset:
    """Observed (context, decision) pairs, immutable after construction."""

    contexts: np.ndarray   # (n, m)
    decisions: np.ndarray  # (n, d)
    truth: Parameter | None = None

    def __post_init__(self):
        c = _frozen(np.atleast_2d(self.contexts))
        y = _frozen(np.atleast_2d(self.decisions))
        object.__setattr__(self, "contexts", c)
        object.__setattr__(self, "decisions", y)
        if c.shape[0] != y.shape[0]:
            raise ValueError("contexts and decisions disagree on sample count")

    def __len__(self) -> int:
        return self.contexts.shape[0]

    def __getitem__(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.contexts[i], self.decisions[i]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.contexts[idx], self.decisions[idx], self.truth)


def sample_dataset(
    fp: ForwardProblem,
    theta_star,
    n: int,
    noise: NoiseModel,
    contexts: UniformContexts,
    seed: int,
) -> Dataset:
    """Draw contexts, solve the forward problem at theta_star, add noise.

    PARAMETERS
    ----------
    fp : ForwardProblem
    theta_star : Parameter or array
        Ground-truth parameter generating the decisions.
    n : int
        Number of observations.
    noise : Noiseless | NoisyDecision | NoisyObjective
        NoisyDecision perturbs the solved decision and may produce infeasible
        observations; NoisyObjective perturbs the cost vector and re-solves,
        so observations stay extreme points of the region.
    contexts : UniformContexts
        Context sampling law; its dim must match the cost map.
    seed : int
        Master seed.  The same seed reproduces the dataset bitwise.
    """
    from .solvers import solve_exact  # late import: solvers builds on model

    if n <= 0:
        raise ValueError("n must be positive")
    cm = fp.cost_map
    if contexts.dim != cm.m:
        raise ValueError(f"context dim {contexts.dim} does not match cost map m={cm.m}")
    theta_star = as_parameter(theta_star, cm)

    rng = rng_stream(seed)
    ctxs = contexts.sample(rng, n)
    decisions = np.empty((n, cm.d))
    for i in range(n):
        u = ctxs[i]
        if isinstance(noise, NoisyObjective):
            w = noise.sigma * rng.standard_normal(cm.d)
            h = cost(cm, theta_star, u) + w
            hc = fp.canonical_sign * h
            decisions[i] = solve_exact(fp, theta_star, u, cost_override=hc)
        else:
            decisions[i] = solve_exact(fp, theta_star, u)
            if isinstance(noise, NoisyDecision):
                decisions[i] += noise.sigma * rng.standard_normal(cm.d)
    return Dataset(ctxs, decisions, truth=theta_star)
