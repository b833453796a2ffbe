"""Reduced-space active set solver for the 4-unknown bound-constrained
minimization of an element's phase values.

The engine runs a compiled specialization of the same sweep
(:func:`avifrac._kernels.solve_element_phase`); this module carries the
callback-based form used for oracle comparisons and for solving synthetic
bound-constrained problems in tests. Agreement between the two is asserted
in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    """Active-set sweep limit exhausted; carries the last iterate."""

    def __init__(self, iterate: np.ndarray, residual: np.ndarray):
        self.iterate = iterate
        self.residual = residual
        super().__init__(
            f"active-set solve did not converge; last iterate {iterate.tolist()}, "
            f"residual {residual.tolist()}")


@dataclass
class BoundConstrainedProblem:
    """min f(d) over lower <= d <= upper with callbacks for grad and Hessian.

    lower is the irreversibility floor (the freshest nodal phase values);
    upper defaults to ones.
    """

    residual: Callable[[np.ndarray], np.ndarray]
    tangent: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, float)
        if self.upper is None:
            self.upper = np.ones_like(self.lower)
        else:
            self.upper = np.asarray(self.upper, float)
        if np.any(self.lower < 0.0) or np.any(self.lower > self.upper):
            raise ValueError("bounds must satisfy 0 <= lower <= upper")


def check_complementarity(d: np.ndarray, lower: np.ndarray, r: np.ndarray,
                          tol: float, upper: np.ndarray | None = None) -> np.ndarray:
    """Per-node verdict of the three-branch optimality conditions.

    A node passes when it sits at the lower bound with r >= -tol, at the
    upper bound with r <= tol, or strictly between bounds with |r| <= tol.
    """
    d = np.asarray(d, float)
    lower = np.asarray(lower, float)
    r = np.asarray(r, float)
    upper = np.ones_like(d) if upper is None else np.asarray(upper, float)
    at_low = (d <= lower + tol) & (r >= -tol)
    at_high = (d >= upper - tol) & (r <= tol)
    interior = (d >= lower - tol) & (d <= upper + tol) & (np.abs(r) <= tol)
    return at_low | at_high | interior


def solve_element_phase(problem: BoundConstrainedProblem, tol: float,
                        max_outer: int = 20, max_newton: int = 25) -> np.ndarray:
    """Reduced-space active set solve, warm-started from the lower bounds.

    Nodes pinned at a bound form the active set; Newton runs on the inactive
    complement against the reduced tangent. Newton iterates that cross a
    bound are clamped there and pinned (the lower comparison tests against
    the irreversibility floor, not the previous iterate); pinned nodes whose
    residual sign stops supporting the pin are released. Returns the solution
    or raises :class:`ConvergenceError` with the final iterate.
    """
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    lower = problem.lower
    upper = problem.upper
    n = lower.size
    d = lower.copy()
    r = np.asarray(problem.residual(d), float)
    if np.linalg.norm(r) < tol:
        return d
    pinned = np.zeros(n, dtype=np.int8)  # 0 inactive, 1 lower, 2 upper
    pinned[(d >= upper) & (r < 0.0)] = 2
    pinned[(pinned == 0) & (r > 0.0)] = 1
    kmat = np.asarray(problem.tangent(d), float)

    for _ in range(max_outer):
        d[pinned == 1] = lower[pinned == 1]
        d[pinned == 2] = upper[pinned == 2]
        inactive = np.nonzero(pinned == 0)[0]
        if inactive.size:
            for _ in range(max_newton):
                r = np.asarray(problem.residual(d), float)
                if np.linalg.norm(r[inactive]) <= tol:
                    break
                kred = kmat[np.ix_(inactive, inactive)]
                d[inactive] -= np.linalg.solve(kred, r[inactive])
        changed = False
        for i in inactive:
            if d[i] > upper[i]:
                d[i] = upper[i]
                pinned[i] = 2
                changed = True
            elif d[i] < lower[i]:
                d[i] = lower[i]
                pinned[i] = 1
                changed = True
        r = np.asarray(problem.residual(d), float)
        release_low = (pinned == 1) & (r < -tol)
        release_high = (pinned == 2) & (r > tol)
        if release_low.any() or release_high.any():
            pinned[release_low | release_high] = 0
            changed = True
        if not changed:
            inactive = pinned == 0
            if np.all(np.abs(r[inactive]) <= tol):
                return d
    raise ConvergenceError(d.copy(), r.copy())


def projected_coordinate_descent(kmat: np.ndarray, b: np.ndarray,
                                 lower: np.ndarray, upper: np.ndarray,
                                 tol: float = 1e-12,
                                 max_iter: int = 200000) -> np.ndarray:
    """Brute-force oracle for convex quadratic bound-constrained problems.

    Minimizes 1/2 d^T K d + b^T d subject to the box via exact coordinate
    minimization with clamping (globally convergent for SPD K). Entirely
    independent of the active-set logic it is used to check.
    """
    kmat = np.asarray(kmat, float)
    b = np.asarray(b, float)
    d = np.clip(np.zeros_like(b), lower, upper)
    for _ in range(max_iter):
        delta = 0.0
        for i in range(b.size):
            grad_i = kmat[i] @ d + b[i]
            new = np.clip(d[i] - grad_i / kmat[i, i], lower[i], upper[i])
            delta = max(delta, abs(new - d[i]))
            d[i] = new
        if delta < tol:
            break
    return d
