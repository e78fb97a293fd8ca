"""Finite weighted measure spaces and reversible Markov operators.

A chain here is a row-stochastic matrix ``T`` together with positive atom
masses ``mu`` satisfying detailed balance ``mu[i] T[i,j] = mu[j] T[j,i]``,
i.e. ``T`` is self-adjoint on L2(mu).  Everything downstream (semigroups,
square functions, functional calculus) is driven by the spectral
decomposition computed in this module.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, InvariantViolation

ROW_SUM_TOL = 1e-12
BALANCE_TOL = 1e-12
EIG_CLAMP_TOL = 1e-12
EIG_HARD_TOL = 1e-9
FIXED_CLUSTER_TOL = 1e-10

GENERATOR_MODELS = ("dense", "graph", "birth_death", "cycle")


@dataclass(frozen=True)
class WeightedSpace:
    """A finite atomic measure space: ``n`` atoms with masses ``mu > 0``."""

    n: int
    mu: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.mu.sum())

    def compatible(self, other: "WeightedSpace") -> bool:
        return self.n == other.n and np.allclose(self.mu, other.mu, rtol=0, atol=1e-12)


@dataclass(frozen=True)
class MarkovOperator:
    """Row-stochastic, mu-reversible matrix, optionally with a stored root S (T = S^2)."""

    space: WeightedSpace
    matrix: np.ndarray
    root: "MarkovOperator | None" = None

    @property
    def n(self) -> int:
        return self.space.n


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (descending) with columns orthonormal in L2(mu).

    ``eigenvectors[:, j]`` is the eigenvector for ``eigenvalues[j]``;
    coefficients of a function f are ``eigenvectors.T @ (mu * f)``.
    """

    space: WeightedSpace
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """Expansion coefficients of ``values`` (shape (n,) or (n, d))."""
        mu = self.space.mu
        weighted = mu * values if values.ndim == 1 else mu[:, None] * values
        return self.eigenvectors.T @ weighted

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ coeffs

    def apply_multiplier(self, mult: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Apply the spectral multiplier ``mult`` (one value per eigenvalue)."""
        c = self.coefficients(values)
        scale = mult[:, None] if c.ndim > 1 else mult
        return self.synthesize(scale * c)

    def fixed_mask(self) -> np.ndarray:
        return np.abs(self.eigenvalues - 1.0) <= FIXED_CLUSTER_TOL

    def reconstruction_error(self, matrix: np.ndarray) -> float:
        v, lam, mu = self.eigenvectors, self.eigenvalues, self.space.mu
        rebuilt = (v * lam) @ (v.T * mu)
        return float(np.abs(rebuilt - matrix).max())


def make_space(weights) -> WeightedSpace:
    """Build a weighted space from strictly positive atom masses.

    Total mass is left unnormalized; probability spaces are just the
    special case ``sum(weights) == 1``.
    """
    mu = np.asarray(weights, dtype=float).ravel()
    if mu.size < 1:
        raise InvalidInput("a weighted space needs at least one atom")
    if not np.all(mu > 0):
        raise InvalidInput("atom masses must be strictly positive")
    mu = mu.copy()
    mu.flags.writeable = False
    return WeightedSpace(n=mu.size, mu=mu)


def validate_markov(space: WeightedSpace, matrix: np.ndarray) -> None:
    """Raise :class:`InvariantViolation` naming the first violated invariant."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (space.n, space.n):
        raise InvariantViolation(f"matrix shape {matrix.shape} does not match space size {space.n}")
    if matrix.min() < 0:
        raise InvariantViolation(f"positivity: negative entry {matrix.min():.3e}")
    row_err = np.abs(matrix.sum(axis=1) - 1.0).max()
    if row_err > ROW_SUM_TOL:
        raise InvariantViolation(f"row sums: residual {row_err:.3e} exceeds {ROW_SUM_TOL:.1e}")
    flux = space.mu[:, None] * matrix
    bal_err = np.abs(flux - flux.T).max()
    if bal_err > BALANCE_TOL:
        raise InvariantViolation(f"detailed balance: residual {bal_err:.3e} exceeds {BALANCE_TOL:.1e}")


def make_markov(space: WeightedSpace, matrix, root: MarkovOperator | None = None) -> MarkovOperator:
    """Validate and wrap a reversible stochastic matrix."""
    matrix = np.asarray(matrix, dtype=float).copy()
    validate_markov(space, matrix)
    matrix.flags.writeable = False
    return MarkovOperator(space=space, matrix=matrix, root=root)


def _boost_zero_rows(kernel: np.ndarray) -> tuple[np.ndarray, bool]:
    """Give zero rows of a symmetric kernel unit mass on the diagonal."""
    dead = kernel.sum(axis=1) == 0
    if dead.any():
        kernel = kernel.copy()
        kernel[dead, dead] = 1.0
        return kernel, True
    return kernel, False


def _random_kernel(n: int, rng: np.random.Generator, model: str) -> np.ndarray:
    if model == "dense":
        raw = rng.uniform(0.2, 1.0, size=(n, n))
        return (raw + raw.T) / 2.0
    if model == "graph":
        upper = np.triu(rng.random((n, n)) < 0.45, k=1)
        weights = np.triu(rng.uniform(0.2, 1.0, size=(n, n)), k=1)
        k = upper * weights
        return k + k.T
    if model == "birth_death":
        k = np.zeros((n, n))
        off = rng.uniform(0.2, 1.0, size=n - 1)
        idx = np.arange(n - 1)
        k[idx, idx + 1] = off
        k[idx + 1, idx] = off
        k[np.arange(n), np.arange(n)] = rng.uniform(0.1, 0.6, size=n)
        return k
    if model == "cycle":
        # unit weights on the n-cycle edges; for n=3 this is circulant(0, 1/2, 1/2)
        k = np.zeros((n, n))
        idx = np.arange(n)
        k[idx, (idx + 1) % n] += 1.0
        k[idx, (idx - 1) % n] += 1.0
        return k
    raise InvalidInput(f"unknown generator model {model!r}; expected one of {GENERATOR_MODELS}")


def random_reversible(space_size: int, seed: int, model: str = "dense") -> MarkovOperator:
    """Draw a reversible Markov operator from a symmetric random kernel.

    The construction takes a symmetric nonnegative kernel K (sparsity
    depends on ``model``), sets ``mu_i = sum_j K[i, j]`` and
    ``T[i, j] = K[i, j] / mu_i``.  Detailed balance then holds exactly:
    ``mu_i T[i, j] = K[i, j] = K[j, i] = mu_j T[j, i]``.

    Parameters
    ----------
    space_size : int
        Number of atoms, at least 2.
    seed : int
        Seeds a local PCG64 generator; same seed, same chain.
    model : {"dense", "graph", "birth_death", "cycle"}
        Kernel sparsity pattern.  "cycle" uses unit edge weights and is
        deterministic.  "graph" may produce isolated vertices, which get
        a unit diagonal boost (reported via a warning).
    """
    if space_size < 2:
        raise InvalidInput("space_size must be at least 2")
    rng = np.random.default_rng(seed)
    kernel = _random_kernel(space_size, rng, model)
    kernel, boosted = _boost_zero_rows(kernel)
    if boosted:
        warnings.warn(f"random_reversible: diagonal boost applied (model={model}, seed={seed})",
                      stacklevel=2)
    mu = kernel.sum(axis=1)
    matrix = kernel / mu[:, None]
    return make_markov(make_space(mu), matrix)


def square(s: MarkovOperator) -> MarkovOperator:
    """Return ``T = S^2`` with ``S`` stored as the root.

    Products of reversible Markov operators over the same measure are
    again reversible Markov; the square has spectrum in [0, 1].
    """
    return make_markov(s.space, s.matrix @ s.matrix, root=s)


def spectral(t: MarkovOperator) -> SpectralDecomposition:
    """Spectral decomposition of a reversible Markov operator.

    Conjugating by D^(1/2), D = diag(mu), turns T into a symmetric matrix
    handled by a symmetric eigensolver; eigenvectors map back by D^(-1/2)
    and are then orthonormal in L2(mu).  Eigenvalues within
    ``EIG_CLAMP_TOL`` of [-1, 1] are clamped; beyond ``EIG_HARD_TOL`` the
    operator is rejected as a non-contraction.
    """
    mu = t.space.mu
    d = np.sqrt(mu)
    sym = d[:, None] * t.matrix / d[None, :]
    sym = (sym + sym.T) / 2.0  # kill roundoff asymmetry before eigh
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    overshoot = max(vals.max() - 1.0, -1.0 - vals.min(), 0.0)
    if overshoot > EIG_HARD_TOL:
        raise InvariantViolation(
            f"eigenvalue outside [-1,1] by {overshoot:.3e}: operator is not a contraction")
    vals = np.clip(vals, -1.0, 1.0)
    return SpectralDecomposition(space=t.space, eigenvalues=vals, eigenvectors=vecs / d[:, None])


def fixed_point_projection(t: MarkovOperator,
                           decomposition: SpectralDecomposition | None = None) -> np.ndarray:
    """Matrix of the projection onto the eigenvalue-1 cluster.

    For an irreducible chain this is ``f -> (int f dmu / mu(Omega)) * 1``;
    reducible chains get the block-averaging projection onto their
    multi-dimensional fixed space.  The projection is positive and
    contractive on every L_p(Omega; X).
    """
    dec = decomposition if decomposition is not None else spectral(t)
    mask = dec.fixed_mask()
    v = dec.eigenvectors[:, mask]
    return v @ (v.T * t.space.mu)


@dataclass(frozen=True)
class RotaDilation:
    """One-step dilation of T = S^2 through a product space.

    The product space Omega x Omega carries ``nu(x, y) = mu(x) S[x, y]``;
    both marginals equal mu.  ``ea`` conditions on the first coordinate,
    ``eb`` on the second, and ``ea(eb(lift(f))) == S^2 f`` exactly.
    """

    base: MarkovOperator
    big_space: WeightedSpace = field(repr=False)

    @property
    def n(self) -> int:
        return self.base.n

    def lift(self, values: np.ndarray) -> np.ndarray:
        """Embed f(x) as F(x, y) = f(x)."""
        values = np.asarray(values)
        return np.broadcast_to(values[:, None, ...], (self.n, self.n) + values.shape[1:]).copy()

    def ea(self, big_values: np.ndarray) -> np.ndarray:
        """Conditional expectation onto functions of the first coordinate."""
        s = self.base.matrix
        cond = np.einsum("xy,xy...->x...", s, big_values)
        return np.broadcast_to(cond[:, None, ...], big_values.shape).copy()

    def eb(self, big_values: np.ndarray) -> np.ndarray:
        """Conditional expectation onto functions of the second coordinate."""
        s = self.base.matrix
        cond = np.einsum("yx,xy...->y...", s, big_values)
        return np.broadcast_to(cond[None, :, ...], big_values.shape).copy()

    def dilation_apply(self, values: np.ndarray) -> np.ndarray:
        """Return (E_A E_B lift(f)) restricted to the first coordinate: equals S^2 f."""
        out = self.ea(self.eb(self.lift(values)))
        return out[:, 0, ...]


def rota_dilation(s: MarkovOperator) -> RotaDilation:
    """Build the explicit one-step dilation of ``square(s)`` over Omega x Omega."""
    nu = (s.space.mu[:, None] * s.matrix).ravel()
    # stochasticity forbids all-zero fibers, but zero atoms can occur for
    # sparse kernels; drop nothing, a zero nu entry only deweights pairs
    safe = np.where(nu > 0, nu, np.finfo(float).tiny)
    return RotaDilation(base=s, big_space=make_space(safe))


def chain_to_dict(op: MarkovOperator) -> dict:
    """JSON-ready dict: {"n", "mu", "matrix", "root": nested or None}."""
    return {
        "n": op.n,
        "mu": op.space.mu.tolist(),
        "matrix": op.matrix.tolist(),
        "root": chain_to_dict(op.root) if op.root is not None else None,
    }


def chain_from_dict(payload: dict) -> MarkovOperator:
    """Inverse of :func:`chain_to_dict`; validates all invariants."""
    try:
        n = int(payload["n"])
        mu = payload["mu"]
        matrix = payload["matrix"]
    except (KeyError, TypeError) as exc:
        raise InvalidInput(f"chain payload missing field: {exc}") from exc
    space = make_space(mu)
    if space.n != n:
        raise InvalidInput(f"declared n={n} but mu has {space.n} entries")
    root = chain_from_dict(payload["root"]) if payload.get("root") else None
    return make_markov(space, np.asarray(matrix, dtype=float), root=root)
