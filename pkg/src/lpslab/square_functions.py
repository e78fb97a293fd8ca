"""Square functions: continuous g-functions, the discrete square function,
and the norm-level semigroup-difference functional.

g-functions and the discrete square function are POINTWISE objects (one
nonnegative value per atom, the X-norm sits inside); the difference
functional is NORM-level (the full L_q(Omega; X) norm sits inside the
time integral).  The distinction is kept in the return types on purpose.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, TruncationFailure
from .measure_markov import (FIXED_CLUSTER_TOL, MarkovOperator, WeightedSpace, spectral)
from .semigroup_calculus import Semigroup, TimeGrid, frac_multipliers, integrand_tail
from .vector_spaces import VectorField, x_norm

GRID_COVERAGE_TOL = 1e-2


@dataclass(frozen=True)
class PointwiseFunction:
    """A nonnegative function on the atoms, with its truncation budget."""

    space: WeightedSpace
    values: np.ndarray
    tail_bound: float = 0.0


def _check_grid(sg: Semigroup, k: int, q: float, grid: TimeGrid) -> float:
    tail = integrand_tail(sg.spectral_gap, k, q, grid.t_max)
    if tail > GRID_COVERAGE_TOL:
        raise InvalidInput(
            f"grid incompatible with semigroup: tail {tail:.2e} at t_max={grid.t_max:.3g}")
    return tail


def _field_norms_on_grid(sg: Semigroup, f: VectorField, mult: np.ndarray, q: float) -> np.ndarray:
    """q-th powers of pointwise X-norms of the multiplier fields, shape (n_times, n)."""
    dec = sg.decomposition
    coeffs = dec.coefficients(f.values)  # (n_eig, d)
    fields = np.einsum("nj,tj,jd->tnd", dec.eigenvectors, mult, coeffs)
    return x_norm(fields, q) ** q


def g_function(sg: Semigroup, f: VectorField, alpha: complex, k: int, q: float,
               grid: TimeGrid) -> PointwiseFunction:
    """Pointwise g-function (int ||t^k d^k M^alpha_t f(omega)||_X^q dt/t)^(1/q).

    alpha = 0 is the plain k-th derivative path.  The grid truncation
    bound is recorded on the result.
    """
    if k < 1:
        raise InvalidInput("g_function requires k >= 1")
    if q <= 1:
        raise InvalidInput("g_function requires q > 1")
    tail = _check_grid(sg, k, q, grid)
    t = grid.points
    a = sg.generator_eigenvalues
    if complex(alpha) == 0:
        b = np.outer(t, a)
        mult = (-b) ** k * np.exp(-b)
    else:
        mult = frac_multipliers(alpha, k, np.outer(t, a).ravel()).reshape(t.size, a.size)
    powers = _field_norms_on_grid(sg, f, mult, q)
    pointwise = (grid.weights @ powers) ** (1.0 / q)
    return PointwiseFunction(space=f.space, values=pointwise, tail_bound=tail)


def discrete_square(t_op: MarkovOperator, f: VectorField, q: float,
                    tol: float = 1e-10) -> PointwiseFunction:
    """Pointwise (sum_n n^{q-1} ||(T^n - T^{n-1}) f(omega)||_X^q)^(1/q).

    Requires spectrum(T) in [0, 1] (T a square), which makes the terms
    decay geometrically at rate lambda_*^q with
    lambda_* = max{|lambda| : |lambda - 1| > cluster tol}.  Iterates are
    produced by repeated application of T, never by matrix powers; the
    truncation length follows the geometric tail and the computed bound
    is recorded.
    """
    if q <= 1:
        raise InvalidInput("discrete_square requires q > 1")
    dec = spectral(t_op)
    if dec.eigenvalues.min() < -1e-10:
        raise InvalidInput("discrete_square requires T = S^2 (spectrum in [0, 1])")
    moving = ~dec.fixed_mask()
    if not moving.any():
        return PointwiseFunction(space=f.space, values=np.zeros(f.space.n), tail_bound=0.0)
    lam_star = float(np.abs(dec.eigenvalues[moving]).max())
    if lam_star >= 1.0 - FIXED_CLUSTER_TOL:
        raise TruncationFailure(f"lambda_* = {lam_star} leaves no geometric tail")
    if lam_star == 0.0:
        n_terms = 16
    else:
        n_terms = max(16, int(np.ceil(np.log(tol * (1.0 - lam_star ** 2))
                                      / (2.0 * np.log(lam_star)))))
    u = (t_op.matrix @ f.values) - f.values  # (T - 1) f
    acc = np.zeros(f.space.n)
    for n in range(1, n_terms + 1):
        acc += n ** (q - 1.0) * x_norm(u, q) ** q
        u = t_op.matrix @ u
    amp = float(x_norm(u, q).max())  # first excluded field T^N (T-1) f
    ratio = lam_star ** q * ((n_terms + 2) / (n_terms + 1)) ** (q - 1.0)
    if ratio < 1.0:
        tail = ((n_terms + 1) ** (q - 1.0) / (1.0 - ratio)) ** (1.0 / q) * amp
    else:
        tail = np.inf
    return PointwiseFunction(space=f.space, values=acc ** (1.0 / q), tail_bound=tail)


def hn_functional(sg: Semigroup, f: VectorField, q: float, grid: TimeGrid) -> float:
    """Norm-level (int ||(T_t - T_{3t}) f||_{L_q(Omega; X)}^q dt/t)^(1/q).

    The inner norm is the full mixed norm, unlike the pointwise
    g-functions above.
    """
    if q <= 1:
        raise InvalidInput("hn_functional requires q > 1")
    _check_grid(sg, 1, q, grid)
    t = grid.points
    a = sg.generator_eigenvalues
    mult = np.exp(-np.outer(t, a)) - np.exp(-3.0 * np.outer(t, a))
    powers = _field_norms_on_grid(sg, f, mult, q)  # (n_times, n)
    mu = f.space.mu
    norm_q = powers @ mu  # ||(T_t - T_3t) f||_{L_q(Omega;X)}^q per time
    return float((grid.weights @ norm_q) ** (1.0 / q))


def pointwise_to_rows(g: PointwiseFunction) -> list[tuple[int, float]]:
    """CSV-ready (atom index, value) rows."""
    return [(i, float(v)) for i, v in enumerate(g.values)]
