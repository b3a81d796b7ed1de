"""Resource-allocation solvers.

Minimizing the aggregate disturbance sqrt(sum_i w_i^2 sigma_i^2(r_i)) over the
budget simplex is a separable convex problem.  At the optimum every funded
feature shares a common marginal value -d sigma/d r_i = lambda, and features
whose marginal at the floor already falls below lambda receive nothing.  The
solver locates that common level by bisection, inverting the per-feature
marginal analytically for the built-in families and numerically for tabulated
ones.  The closed forms for the inverse and inverse-sqrt families and the bit
budget are provided separately and double as cheap cross-checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .core import NoiseModel, ResourceVector, _as_weights
from .errors import (
    BudgetTooSmallError,
    DegenerateClassifierError,
    InfeasibleSetError,
)


@dataclass(frozen=True)
class AllocationResult:
    """Allocation plus the stationarity certificate that produced it.

    lam is the common marginal -d sigma/d r_i shared by funded features
    (for the bit allocator it is the log-domain threshold instead);
    residual is the largest deviation from that stationarity condition.
    """

    r: ResourceVector
    lam: float
    funded: np.ndarray
    residual: float


def _neg_dvar(nm: NoiseModel, w2: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Marginal value of resource on the variance objective:
    g_i(r) = -w_i^2 * d(sigma_i^2)/dr, positive and decreasing in r."""
    return -w2 * nm.dsigma_sq(r)


def _invert_marginal(nm: NoiseModel, w2: np.ndarray, active: np.ndarray,
                     nu: float, floor: float, r_cap: Optional[float]) -> np.ndarray:
    """Solve g_i(r) = nu per active feature, clamped to [floor, r_cap]."""
    d = w2.shape[0]
    r = np.zeros(d)
    c2 = nm.scale_vector(d) ** 2
    idx = np.flatnonzero(active)
    if nm.family == "inverse":
        r[idx] = np.cbrt(2.0 * w2[idx] * c2[idx] / nu)
    elif nm.family == "inverse_sqrt":
        r[idx] = np.sqrt(w2[idx] * c2[idx] / nu)
    elif nm.family == "quantization":
        arg = 2.0 * math.log(2.0) * w2[idx] * c2[idx] / nu
        r[idx] = np.where(arg > 0, np.log2(np.maximum(arg, 1e-300)) / 2.0, 0.0)
    else:
        lo = max(floor, nm.table[0][0])
        hi = nm.table[0][-1]
        for i in idx:
            g = lambda x: float(_neg_dvar(nm, w2[i:i + 1], np.array([x]))[0]) - nu
            if g(lo) <= 0:
                r[i] = floor
            elif g(hi) >= 0:
                r[i] = hi
            else:
                r[i] = brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16)
    r[idx] = np.maximum(r[idx], floor)
    if r_cap is not None:
        r[idx] = np.minimum(r[idx], r_cap)
    return r


def _waterfill(weights: np.ndarray, nm: NoiseModel, R: float):
    """Core bisection: returns (allocation, nu) with nu the common marginal
    of the variance objective sum w_i^2 sigma_i^2."""
    d = weights.shape[0]
    w2 = weights**2
    active = w2 > 0.0
    if not np.any(active):
        raise DegenerateClassifierError("all classifier weights are zero")
    if nm.family == "tabulated":
        nm.validate()
    floor = nm.floor_for(R)
    n_active = int(active.sum())
    if floor * n_active >= R:
        raise InfeasibleSetError(
            f"floor {floor:.3g} x {n_active} active features exceeds budget {R:.3g}"
        )
    r_cap = nm.table[0][-1] if nm.family == "tabulated" else None

    if n_active == 1:
        r = np.zeros(d)
        r[active] = R if r_cap is None else min(R, r_cap)
        leftover = R - r.sum()
        if leftover > 0 and r_cap is not None:
            r[active] += leftover  # flat sigma beyond the table; budget kept saturated
        g = _neg_dvar(nm, w2, np.maximum(r, floor))
        return r, float(np.max(g[active]))

    g_floor = _neg_dvar(nm, w2, np.full(d, floor))
    g_at_R = _neg_dvar(nm, w2, np.full(d, float(R) if r_cap is None else min(R, r_cap)))
    nu_hi = float(np.max(g_floor[active])) * 2.0 + 1e-300
    nu_lo = float(np.min(g_at_R[active])) * 0.5
    nu_lo = max(nu_lo, 1e-300)

    def excess(log_nu: float) -> float:
        r = _invert_marginal(nm, w2, active, math.exp(log_nu), floor, r_cap)
        return float(r.sum()) - R

    lo, hi = math.log(nu_lo), math.log(nu_hi)
    f_lo = excess(lo)
    for _ in range(200):
        if f_lo > 0 or (r_cap is not None and n_active * r_cap <= R):
            break
        lo -= 2.0
        f_lo = excess(lo)
    if f_lo <= 0:
        # every feature is capped by the table yet the budget is not spent;
        # sigma is flat beyond the table, so spread the leftover evenly
        r = _invert_marginal(nm, w2, active, math.exp(lo), floor, r_cap)
        r[active] += (R - r.sum()) / n_active
        return r, math.exp(lo)
    log_nu = brentq(excess, lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=500)
    nu = math.exp(log_nu)
    r = _invert_marginal(nm, w2, active, nu, floor, r_cap)
    funded = active & (r > floor * (1.0 + 1e-9))
    pool = funded if np.any(funded) else active
    r[pool] += (R - r.sum()) / pool.sum()  # close the residual budget gap exactly
    return r, nu


def _result_from(weights: np.ndarray, nm: NoiseModel, R: float, r: np.ndarray,
                 nu: float) -> AllocationResult:
    floor = nm.floor_for(R)
    clamped = np.maximum(r, floor)
    active = weights != 0.0
    var = float(np.sum(weights[active] ** 2 * nm.sigma_sq(clamped[active])))
    agg = math.sqrt(var)
    lam = nu / (2.0 * agg) if agg > 0 else 0.0
    funded_mask = active & (r > floor * (1.0 + 1e-6))
    marginals = _neg_dvar(nm, weights**2, clamped) / (2.0 * agg) if agg > 0 else np.zeros_like(r)
    residual = 0.0
    if np.any(funded_mask):
        residual = float(np.max(np.abs(marginals[funded_mask] - lam)))
    unfunded = active & ~funded_mask
    if np.any(unfunded):
        residual = max(residual, float(np.max(marginals[unfunded] - lam)))
    return AllocationResult(
        r=ResourceVector(r, R),
        lam=lam,
        funded=np.flatnonzero(funded_mask),
        residual=residual,
    )


def allocate_waterfill(w, nm: NoiseModel, R: float, tol: float = 1e-9) -> AllocationResult:
    """Optimal allocation for a fixed classifier under a stochastic
    disturbance: minimizes sqrt(sum w_i^2 sigma_i^2(r_i)) over the budget
    simplex by bisection on the common marginal value.

    Features with w_i = 0 receive nothing; features with nonzero weight whose
    marginal at the floor is already below the water level stay clamped at
    the floor and are reported outside the funded set.  The bisection runs to
    machine precision regardless of tol, which only names the stationarity
    residual callers should expect to hold.
    """
    weights = _as_weights(w)
    if R <= 0:
        raise InfeasibleSetError(f"budget must be positive, got {R}")
    r, nu = _waterfill(weights, nm, R)
    return _result_from(weights, nm, R, r, nu)


def allocate_adversarial(w, nm: NoiseModel, R: float, tol: float = 1e-9) -> AllocationResult:
    """Optimal allocation against a worst-case perturbation from the
    ellipsoid {x : sum (x_i / sigma_i(r_i))^2 <= 1}.

    The adversary's best response value sup w.delta equals
    sqrt(sum w_i^2 sigma_i^2(r_i)), so shaping the ellipsoid optimally is the
    same separable problem as the stochastic case and shares its stationarity
    condition w_i^2 sigma_i sigma_i' = const across funded features.
    """
    return allocate_waterfill(w, nm, R, tol)


def allocate_inverse_sqrt(w, R: float) -> ResourceVector:
    """Closed form for sigma_i = c/sqrt(r_i): r_i = R |w_i| / |w|_1."""
    weights = np.abs(_as_weights(w))
    total = weights.sum()
    if total == 0:
        raise DegenerateClassifierError("all classifier weights are zero")
    return ResourceVector(R * weights / total, R)


def allocate_inverse(w, R: float) -> ResourceVector:
    """Closed form for sigma_i = c/r_i: r_i = R |w_i|^(2/3) / sum |w_j|^(2/3)."""
    weights = np.abs(_as_weights(w)) ** (2.0 / 3.0)
    total = weights.sum()
    if total == 0:
        raise DegenerateClassifierError("all classifier weights are zero")
    return ResourceVector(R * weights / total, R)


def allocate_quantization(w, R: float) -> AllocationResult:
    """Real-relaxed bit allocation for sigma_i = 2^(-r_i) with r_i >= 1.

    Funded features get r_i = 1 + log2|w_i| - lam where the threshold lam
    makes the budget balance; everything else (including zero weights) keeps
    the single mandatory bit.  lam is returned in this log2 convention.
    """
    weights = _as_weights(w)
    d = weights.shape[0]
    if R < d:
        raise BudgetTooSmallError(f"need at least one bit per feature: R={R} < d={d}")
    nonzero = np.flatnonzero(weights != 0.0)
    r = np.ones(d)
    if nonzero.size == 0:
        return AllocationResult(ResourceVector(r, R), 0.0, np.array([], dtype=int), 0.0)
    logs = np.log2(np.abs(weights[nonzero]))
    order = np.argsort(-logs, kind="stable")
    sorted_logs = logs[order]
    prefix = np.cumsum(sorted_logs)
    lam = None
    k_star = None
    for k in range(nonzero.size, 0, -1):
        cand = (prefix[k - 1] - R + d) / k
        if sorted_logs[k - 1] >= cand and (k == nonzero.size or sorted_logs[k] < cand):
            lam, k_star = float(cand), k
            break
    if lam is None:  # numerically impossible for a valid instance; fall back to all funded
        lam, k_star = float((prefix[-1] - R + d) / nonzero.size), nonzero.size
    funded_local = order[:k_star]
    funded = nonzero[funded_local]
    r[funded] = 1.0 + logs[funded_local] - lam
    return AllocationResult(ResourceVector(r, R), lam, np.sort(funded), 0.0)


def refine_integer_bits(ar: AllocationResult, w, R: float) -> ResourceVector:
    """Round the relaxed bit allocation to integers by trying every integer
    within +-1 of each coordinate, keeping sum <= R and r_i >= 1, and taking
    the combination with the smallest aggregate sigma (ties: lexicographic)."""
    weights = _as_weights(w)
    relaxed = ar.r.alloc
    w2 = weights**2
    cand = []
    for ri in relaxed:
        lo = max(1, math.ceil(ri - 1.0))
        hi = math.floor(ri + 1.0)
        cand.append(list(range(lo, max(lo, hi) + 1)))
    n_combos = np.prod([len(c) for c in cand])
    if n_combos > 1_000_000:
        raise BudgetTooSmallError(f"integer refinement would enumerate {n_combos} combinations")
    best = None
    best_val = math.inf
    for combo in itertools.product(*cand):
        if sum(combo) > R:
            continue
        val = float(np.sum(w2 * np.exp2(-2.0 * np.asarray(combo, dtype=float))))
        if val < best_val:  # first hit wins ties: product() iterates in lex order
            best, best_val = combo, val
    if best is None:
        best = tuple(max(1, math.floor(ri)) for ri in relaxed)
    return ResourceVector(np.asarray(best, dtype=float), R)


def simplex_projection_raw(v: np.ndarray, R: float, floor: float = 0.0) -> np.ndarray:
    """sort-and-threshold simplex projection on a bare array (hot-loop form
    of project_simplex, identical math)."""
    d = v.shape[0]
    shifted = v - floor
    target = R - d * floor
    u = np.sort(shifted)[::-1]
    css = np.cumsum(u)
    rho_mask = u - (css - target) / np.arange(1, d + 1) > 0
    rho = int(np.nonzero(rho_mask)[0].max()) + 1
    theta = (css[rho - 1] - target) / rho
    out = np.maximum(shifted - theta, 0.0) + floor
    gap = R - float(out.sum())
    if gap != 0.0:
        # spread float dust (scales with the input magnitude) over entries
        # that can absorb it without crossing the floor
        cand = out >= floor + abs(gap)
        if not np.any(cand):
            cand = out > floor
        out[cand] += gap / int(cand.sum())
    return out


def project_simplex(v, R: float, floor: float = 0.0) -> ResourceVector:
    """Euclidean projection of v onto {r : sum r_i = R, r_i >= floor} by the
    sort-and-threshold rule; exact for every input."""
    v = np.asarray(v, dtype=float).ravel()
    if R <= v.shape[0] * floor:
        raise InfeasibleSetError(f"simplex empty: R={R} <= d*floor={v.shape[0] * floor}")
    return ResourceVector(simplex_projection_raw(v, R, floor), R)
