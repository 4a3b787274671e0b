"""Portfolio profit maximization and the merger statistics built on it.

For a demand model and a portfolio x, the intermediary's gross profit is

    max_q  sum_{i in x} (P_i(q) - c_i) q_i   s.t.  q_i = 0 for i not in x

solved by multistart projected quasi-Newton (L-BFGS-B plus an active-set
Newton polish). The resulting value function over portfolios feeds the
set-function classifiers and the bargaining layer. The module also provides
the partial maximum M(q1, q2) (profit maximized over every carried product
except 1 and 2, whose quantities are held fixed), closed-form first-order
conditions for the square-root-spillover family, the pair second difference
of the optimized profit at the full complement portfolio (negative means
the pair are profit substitutes, so merging them raises total fees), and a
seeded search for parameter draws satisfying a predicate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .demand_systems import DemandModel, GrossRelationReport, gross_relation
from .errors import ConvergenceError, DomainError
from .portfolios import Portfolio, SetFunction, second_difference

_PENALTY = 1e12


class OptStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAXITER = "maxiter"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class OptimizerConfig:
    gradient_tol: float = 1e-9
    max_iter: int = 500
    multistart: int = 8
    floor: float = 1e-6  # keeps iterates off gradient singularities at q = 0
    seed: int = 0
    value_gap: float = 1e-6  # distinct local optima beyond this gap => degenerate

    def __post_init__(self):
        if self.gradient_tol <= 0:
            raise ValueError("gradient tolerance must be positive")
        if self.multistart < 1:
            raise ValueError("need at least one start")

    def with_seed(self, seed: int) -> "OptimizerConfig":
        return replace(self, seed=seed)


DEFAULT_CONFIG = OptimizerConfig()


@dataclass(frozen=True)
class OptResult:
    q: np.ndarray  # full-length, zeros off-portfolio
    value: float
    gradient_norm: float  # KKT residual over active coordinates
    status: OptStatus
    starts_used: int

    def describe(self) -> dict:
        return {
            "q": [float(x) for x in self.q],
            "value": self.value,
            "gradient_norm": self.gradient_norm,
            "status": self.status.value,
            "starts_used": self.starts_used,
        }


class _PortfolioObjective:
    """R and its gradient over the active coordinates of one portfolio."""

    def __init__(self, model: DemandModel, carried: tuple[int, ...]):
        self.model = model
        self.carried = carried
        self.idx = np.array([i - 1 for i in carried])
        self.costs = model.costs[self.idx]

    def pad(self, z: np.ndarray) -> np.ndarray:
        q = np.zeros(self.model.n)
        q[self.idx] = z
        return q

    def value(self, z: np.ndarray) -> float:
        q = self.pad(z)
        p = self.model.portfolio_inverse(q, self.carried)
        return float(np.dot(p[self.idx] - self.costs, z))

    def gradient(self, z: np.ndarray) -> np.ndarray:
        q = self.pad(z)
        p = self.model.portfolio_inverse(q, self.carried)
        jac = self.model.portfolio_inverse_jacobian(q, self.carried)
        return p[self.idx] - self.costs + jac.T @ z


def _latin_hypercube(rng: np.random.Generator, count: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    k = len(lo)
    u = (rng.random((count, k)) + np.stack([rng.permutation(count) for _ in range(k)], axis=1)) / count
    return lo + u * (hi - lo)


def _kkt_residual(g: np.ndarray, z: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> float:
    res = 0.0
    for a in range(len(z)):
        if z[a] <= lb[a] + 1e-10:
            res = max(res, max(g[a], 0.0))  # at the floor the profit slope must point down
        elif z[a] >= ub[a] - 1e-10:
            res = max(res, max(-g[a], 0.0))
        else:
            res = max(res, abs(g[a]))
    return res


def _polish(
    obj: _PortfolioObjective,
    z: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    tol: float,
    max_steps: int = 30,
) -> np.ndarray:
    """Active-set Newton refinement of an L-BFGS-B solution."""
    k = len(z)
    for _ in range(max_steps):
        try:
            g = obj.gradient(z)
        except (DomainError, ConvergenceError, np.linalg.LinAlgError):
            return z
        if _kkt_residual(g, z, lb, ub) <= tol:
            return z
        free = [
            a
            for a in range(k)
            if not (z[a] <= lb[a] + 1e-10 and g[a] <= 0)
            and not (z[a] >= ub[a] - 1e-10 and g[a] >= 0)
        ]
        if not free:
            return z
        hess = np.zeros((len(free), len(free)))
        ok = True
        for col, a in enumerate(free):
            h = 1e-6 * max(1.0, abs(z[a]))
            zp, zm = z.copy(), z.copy()
            zp[a] += h
            zm[a] -= h
            try:
                gp, gm = obj.gradient(zp), obj.gradient(zm)
            except (DomainError, ConvergenceError, np.linalg.LinAlgError):
                ok = False
                break
            hess[:, col] = (gp[free] - gm[free]) / (2 * h)
        if not ok:
            return z
        try:
            step = np.linalg.solve(hess, -g[free])
        except np.linalg.LinAlgError:
            return z
        if not np.all(np.isfinite(step)):
            return z
        base = obj.value(z)
        scale = 1.0
        for _ in range(25):
            cand = z.copy()
            cand[free] = np.clip(z[free] + scale * step, lb[free], ub[free])
            try:
                val = obj.value(cand)
            except (DomainError, ConvergenceError, np.linalg.LinAlgError):
                scale *= 0.5
                continue
            if val >= base - 1e-15:
                if np.max(np.abs(cand - z)) < 1e-15:
                    return cand
                z = cand
                break
            scale *= 0.5
        else:
            return z
    return z


def max_profit(
    model: DemandModel, x: Portfolio, cfg: OptimizerConfig = DEFAULT_CONFIG
) -> OptResult:
    """Maximize portfolio profit over nonnegative carried quantities.

    The best of ``cfg.multistart`` starts is returned. When several starts
    settle on stationary points with materially different values the status
    is degenerate: the value reported is still the best one, but uniqueness
    of the optimum failed and callers may want to flag it.
    """
    if x.n != model.n:
        raise ValueError(f"portfolio has {x.n} products, model has {model.n}")
    carried = x.indices()
    if not carried:
        return OptResult(np.zeros(model.n), 0.0, 0.0, OptStatus.CONVERGED, 0)

    obj = _PortfolioObjective(model, carried)
    k = len(carried)
    choke = np.maximum(np.abs(model.choke_quantities()[obj.idx]), 1.0)
    floor = cfg.floor if getattr(model, "singular_at_zero", False) else 0.0
    lb = np.full(k, floor)
    ub = 10.0 * choke
    rng = np.random.default_rng(cfg.seed)

    starts = [0.5 * choke]
    if cfg.multistart > 1:
        starts.extend(_latin_hypercube(rng, cfg.multistart - 1, np.maximum(lb, 1e-4), choke))

    def safe_start(z0: np.ndarray) -> np.ndarray | None:
        z = np.clip(z0, lb, ub)
        anchor = 0.5 * choke
        for _ in range(12):
            try:
                obj.value(z)
                return z
            except (DomainError, ConvergenceError, np.linalg.LinAlgError):
                z = 0.5 * (z + anchor)
        return None

    def neg_value(z):
        try:
            return -obj.value(z)
        except (DomainError, ConvergenceError, np.linalg.LinAlgError):
            return _PENALTY

    def neg_grad(z):
        try:
            return -obj.gradient(z)
        except (DomainError, ConvergenceError, np.linalg.LinAlgError):
            return np.zeros(k)

    solutions: list[tuple[float, np.ndarray, float]] = []  # (value, z, kkt)
    used = 0
    for z0 in starts:
        z0 = safe_start(np.asarray(z0))
        if z0 is None:
            continue
        used += 1
        res = minimize(
            neg_value,
            z0,
            jac=neg_grad,
            method="L-BFGS-B",
            bounds=list(zip(lb, ub)),
            options={"maxiter": cfg.max_iter, "ftol": 1e-15, "gtol": 1e-10},
        )
        z = _polish(obj, np.clip(res.x, lb, ub), lb, ub, cfg.gradient_tol)
        try:
            val = obj.value(z)
            kkt = _kkt_residual(obj.gradient(z), z, lb, ub)
        except (DomainError, ConvergenceError, np.linalg.LinAlgError):
            continue
        solutions.append((val, z, kkt))

    if not solutions:
        raise ConvergenceError(f"no start produced a usable solution for portfolio {x}")

    best_val, best_z, best_kkt = max(solutions, key=lambda s: s[0])
    clean = [s for s in solutions if s[2] <= max(cfg.gradient_tol, 1e-6)]
    status = OptStatus.CONVERGED if best_kkt <= cfg.gradient_tol else OptStatus.MAXITER
    distinct = [
        s
        for s in clean
        if best_val - s[0] > cfg.value_gap and np.max(np.abs(s[1] - best_z)) > 1e-4
    ]
    if distinct and best_kkt <= max(cfg.gradient_tol, 1e-6):
        status = OptStatus.DEGENERATE

    return OptResult(obj.pad(best_z), best_val, best_kkt, status, used)


def profit_oracle(
    model: DemandModel,
    cfg: OptimizerConfig = DEFAULT_CONFIG,
    statuses: dict[str, str] | None = None,
) -> SetFunction:
    """Memoizable portfolio -> optimized profit map.

    When ``statuses`` is given, each evaluated portfolio's optimizer status
    is recorded there keyed by the portfolio bit string.
    """

    def evaluate(x: Portfolio) -> float:
        result = max_profit(model, x, cfg)
        if statuses is not None:
            statuses[x.key()] = result.status.value
        return result.value

    return SetFunction(model.n, evaluate, name=f"max_profit[{model.kind}]")


def partial_max(
    model: DemandModel,
    q1: float,
    q2: float,
    carried: Sequence[int] | None = None,
    cfg: OptimizerConfig = DEFAULT_CONFIG,
) -> float:
    """Profit with q1, q2 held fixed, maximized over the other carried products.

    The inner maximization is over stationary points (no nonnegativity
    constraint): this is the smooth envelope whose mixed partial carries the
    supermodularity-preservation argument, and it coincides with the
    portfolio optimum whenever that optimum is interior. With no carried
    products beyond the pair it is just the two-product profit itself.
    """
    if carried is None:
        carried = tuple(range(3, model.n + 1))
    else:
        carried = tuple(sorted(set(int(i) for i in carried)))
        for i in carried:
            if not 3 <= i <= model.n:
                raise ValueError(f"inner products must lie in 3..{model.n}, got {i}")
    system = (1, 2) + carried
    obj = _PortfolioObjective(model, system)

    fixed = np.array([q1, q2], dtype=float)
    if not carried:
        return obj.value(fixed)

    m = len(carried)
    inner_idx = np.arange(2, 2 + m)

    def value_of(w: np.ndarray) -> float:
        return obj.value(np.concatenate([fixed, w]))

    def grad_of(w: np.ndarray) -> np.ndarray:
        try:
            return obj.gradient(np.concatenate([fixed, w]))[inner_idx]
        except (DomainError, np.linalg.LinAlgError):
            # price Jacobian can be singular at boundary anchors (e.g. both
            # fixed quantities zero); the value is still smooth in w
            g = np.zeros(m)
            for k in range(m):
                h = 1e-6 * max(1.0, abs(w[k]))
                wp, wm = w.copy(), w.copy()
                wp[k] += h
                wm[k] -= h
                g[k] = (value_of(wp) - value_of(wm)) / (2 * h)
            return g

    choke = np.maximum(np.abs(model.choke_quantities()[[i - 1 for i in carried]]), 1.0)
    rng = np.random.default_rng(cfg.seed)
    starts = [0.5 * choke, 0.25 * choke]
    starts.extend(0.1 * choke + rng.random((2, m)) * choke)

    best: float | None = None
    for w0 in starts:
        w = np.asarray(w0, dtype=float)
        try:
            val = value_of(w)
        except (DomainError, ConvergenceError, np.linalg.LinAlgError):
            continue
        converged = False
        for _ in range(80):
            try:
                g = grad_of(w)
            except (DomainError, ConvergenceError, np.linalg.LinAlgError):
                break
            if np.max(np.abs(g)) <= cfg.gradient_tol:
                converged = True
                break
            hess = np.zeros((m, m))
            bad = False
            for col in range(m):
                h = 1e-6 * max(1.0, abs(w[col]))
                wp, wm = w.copy(), w.copy()
                wp[col] += h
                wm[col] -= h
                try:
                    hess[:, col] = (grad_of(wp) - grad_of(wm)) / (2 * h)
                except (DomainError, ConvergenceError, np.linalg.LinAlgError):
                    bad = True
                    break
            if bad:
                break
            try:
                step = np.linalg.solve(hess, -g)
            except np.linalg.LinAlgError:
                step = g  # gradient ascent fallback
            scale = 1.0
            improved = False
            for _ in range(30):
                cand = w + scale * step
                try:
                    cand_val = value_of(cand)
                except (DomainError, ConvergenceError, np.linalg.LinAlgError):
                    scale *= 0.5
                    continue
                if cand_val >= val - 1e-15:
                    w, val = cand, cand_val
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                break
        if converged and (best is None or val > best):
            best = val
    if best is None:
        raise ConvergenceError(
            f"inner maximization failed at fixed quantities ({q1}, {q2})"
        )
    return best


def mixed_partial_grid(
    model: DemandModel,
    lo: tuple[float, float] = (0.0, 0.0),
    hi: tuple[float, float] = (1.0, 1.0),
    resolution: int = 5,
    step: float = 1e-3,
    carried: Sequence[int] | None = None,
    cfg: OptimizerConfig = DEFAULT_CONFIG,
) -> dict:
    """Finite-difference d2M/dq1 dq2 of the partial maximum on a grid.

    Uses the forward cross stencil anchored at each node so the fixed pair
    of quantities never goes negative.
    """
    axis1 = np.linspace(lo[0], hi[0], resolution)
    axis2 = np.linspace(lo[1], hi[1], resolution)
    cache: dict[tuple[float, float], float] = {}

    def m_of(a: float, b: float) -> float:
        key = (round(a, 12), round(b, 12))
        if key not in cache:
            cache[key] = partial_max(model, a, b, carried=carried, cfg=cfg)
        return cache[key]

    values = np.zeros((resolution, resolution))
    for r, a in enumerate(axis1):
        for c, b in enumerate(axis2):
            values[r, c] = (
                m_of(a + step, b + step) - m_of(a + step, b) - m_of(a, b + step) + m_of(a, b)
            ) / (step * step)
    rmin, cmin = np.unravel_index(np.argmin(values), values.shape)
    return {
        "axis1": axis1.tolist(),
        "axis2": axis2.tolist(),
        "values": values.tolist(),
        "min": float(values[rmin, cmin]),
        "argmin": [float(axis1[rmin]), float(axis2[cmin])],
        "step": step,
    }


# ---------------------------------------------------------------------------
# Closed-form first-order conditions for the square-root-spillover family
# ---------------------------------------------------------------------------


class FocVariant(str, enum.Enum):
    TWO_PLUS_THREE = "two_plus_three"  # both coupled products carried, plus product 3
    ONE_PLUS_THREE = "one_plus_three"  # one coupled product carried, plus product 3


@dataclass(frozen=True)
class FocSolution:
    variant: FocVariant
    gamma: float
    q: float  # common quantity of the carried coupled product(s)
    q3: float
    value: float
    roots: tuple[float, ...]  # all positive stationary candidates examined


def solve_foc_eq7(gamma: float, variant: FocVariant | str) -> FocSolution:
    """Solve the scalar stationarity condition of the b = 0 family.

    Symmetric portfolios reduce the optimization to one equation in the
    coupled product's quantity q:

        two_plus_three:  1 - 2q + gamma^2/4 + gamma*sqrt(2)/(8 sqrt(q)) = 0,
                         q3 = (1 + gamma sqrt(2 q)) / 2
        one_plus_three:  1 - 2q + gamma^2/4 + gamma/(4 sqrt(q)) = 0,
                         q3 = (1 + gamma sqrt(q)) / 2

    For gamma < 0 the condition can have several positive roots; every
    bracketed root on (0, 2] is evaluated and the profit-maximizing one is
    returned. gamma = 0 decouples the products and is returned in closed
    form.
    """
    variant = FocVariant(variant)
    two = variant is FocVariant.TWO_PLUS_THREE

    def profit(q: float, q3: float) -> float:
        pair_part = 2 * q * (1 - q) if two else q * (1 - q)
        root = math.sqrt(2 * q) if two else math.sqrt(q)
        return pair_part + q3 * (1 - q3) + gamma * q3 * root

    if gamma == 0.0:
        value = profit(0.5, 0.5)
        return FocSolution(variant, gamma, 0.5, 0.5, value, (0.5,))

    k = math.sqrt(2) / 8 if two else 0.25

    def foc(q: float) -> float:
        return 1 - 2 * q + gamma * gamma / 4 + gamma * k / math.sqrt(q)

    grid = np.concatenate([np.geomspace(1e-10, 0.05, 60), np.linspace(0.05, 2.0, 240)])
    roots: list[float] = []
    for a, b in zip(grid, grid[1:]):
        fa, fb = foc(a), foc(b)
        if fa == 0.0:
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(float(brentq(foc, a, b, xtol=1e-15, rtol=8.9e-16)))
    if foc(grid[-1]) == 0.0:
        roots.append(float(grid[-1]))
    roots = sorted(set(round(r, 14) for r in roots))
    if not roots:
        raise ConvergenceError(f"no positive stationary point for gamma={gamma}")

    best = None
    for q in roots:
        q3 = (1 + gamma * math.sqrt(2 * q)) / 2 if two else (1 + gamma * math.sqrt(q)) / 2
        val = profit(q, q3)
        if best is None or val > best[2]:
            best = (q, q3, val)
    q, q3, value = best
    return FocSolution(variant, gamma, q, q3, value, tuple(roots))


# ---------------------------------------------------------------------------
# Merger statistic and parameter search
# ---------------------------------------------------------------------------


def merger_delta(
    model: DemandModel,
    pair: tuple[int, int] = (1, 2),
    cfg: OptimizerConfig = DEFAULT_CONFIG,
    oracle: SetFunction | None = None,
) -> float:
    """Second difference of optimized profit for the pair, all else carried.

    Negative: the pair are profit substitutes and merging their suppliers
    raises the total negotiated fees. Positive: profit complements, fees
    fall.
    """
    i, j = pair
    if oracle is None:
        oracle = profit_oracle(model, cfg)
    rest = Portfolio.from_indices(
        model.n, [k for k in range(1, model.n + 1) if k not in (i, j)]
    )
    return second_difference(oracle, i, j, rest)


@dataclass(frozen=True)
class CandidateRecord:
    index: int
    model: DemandModel
    gross: GrossRelationReport
    delta: float

    def describe(self) -> dict:
        return {
            "index": self.index,
            "model": self.model.describe(),
            "gross": self.gross.overall.value,
            "delta": self.delta,
        }


def counterexample_search(
    make_model: Callable[[np.random.Generator], DemandModel],
    predicate: Callable[[CandidateRecord], bool],
    budget: int,
    seed: int = 0,
    cfg: OptimizerConfig = DEFAULT_CONFIG,
    region=None,
    pair: tuple[int, int] = (1, 2),
) -> CandidateRecord | None:
    """Draw models until one satisfies the predicate; None if the budget runs out.

    Each draw gets its gross-relation classification and merger statistic;
    the predicate sees both. Deterministic for a fixed seed. An empty result
    is a legitimate outcome (it is the expected one when searching for
    counterexamples that provably cannot exist).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    for index in range(budget):
        model = make_model(rng)
        gross = gross_relation(model, region)
        delta = merger_delta(model, pair, cfg)
        record = CandidateRecord(index, model, gross, delta)
        if predicate(record):
            return record
    return None
