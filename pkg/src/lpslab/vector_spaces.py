"""Finite-dimensional target spaces X = l_q^d and the mixed norms L_p(Omega; X).

Operator norms on L_p(Omega; X) have no closed form for p != 2, so the
norm estimator here is a multi-start random ascent over unit fields.  Its
output is a sampled maximum of true norm ratios, hence always a certified
LOWER bound on the operator norm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, PreconditionViolation
from .measure_markov import WeightedSpace

DEFAULT_RESTARTS = 32
DEFAULT_STEPS = 200


@dataclass(frozen=True)
class BanachParams:
    """Exponents for L_p(Omega; l_q^d) and the derived conjugates."""

    p: float
    q: float
    d: int

    def __post_init__(self):
        if not (self.p > 1 and np.isfinite(self.p)):
            raise InvalidInput(f"p must lie in (1, inf), got {self.p}")
        if not (self.q > 1 and np.isfinite(self.q)):
            raise InvalidInput(f"q must lie in (1, inf), got {self.q}")
        if self.d < 1:
            raise InvalidInput(f"d must be a positive integer, got {self.d}")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    def dual(self) -> "BanachParams":
        return BanachParams(self.p_conj, self.q_conj, self.d)


@dataclass(frozen=True)
class VectorField:
    """A function Omega -> R^d stored as an (n, d) array (row i = f(omega_i))."""

    space: WeightedSpace
    values: np.ndarray

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ConvexityEstimate:
    """Sampled upper bound on the power-type convexity constant of l_q^d."""

    q: float
    delta: float
    trials: int

    def __post_init__(self):
        if not (0.0 <= self.delta <= 1.0):
            raise InvalidInput(f"delta must lie in [0, 1], got {self.delta}")


def vector_field(space: WeightedSpace, values) -> VectorField:
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] != space.n:
        raise InvalidInput(f"values shape {values.shape} incompatible with space of size {space.n}")
    return VectorField(space=space, values=values)


def random_field(space: WeightedSpace, d: int, seed: int) -> VectorField:
    rng = np.random.default_rng(seed)
    return VectorField(space=space, values=rng.standard_normal((space.n, d)))


def x_norm(v: np.ndarray, q: float) -> np.ndarray:
    """l_q norm over the last axis, overflow-safe; scalar for a single vector."""
    if q < 1:
        raise InvalidInput("x_norm requires q >= 1")
    a = np.abs(np.asarray(v))
    peak = a.max(axis=-1)
    safe = np.where(peak > 0, peak, 1.0)
    out = safe * ((a / safe[..., None]) ** q).sum(axis=-1) ** (1.0 / q)
    out = np.where(peak > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def _lp_norm(values: np.ndarray, mu: np.ndarray, p: float, q: float) -> float:
    """(sum_i mu_i ||values_i||_q^p)^(1/p) with scale normalization."""
    pointwise = x_norm(values, q)
    peak = pointwise.max(initial=0.0)
    if peak == 0.0:
        return 0.0
    return float(peak * (mu @ (pointwise / peak) ** p) ** (1.0 / p))


def lp_norm(f: VectorField, params: BanachParams) -> float:
    """The mixed norm of f in L_p(Omega; l_q^d)."""
    return _lp_norm(f.values, f.space.mu, params.p, params.q)


def scalar_lp_norm(values: np.ndarray, mu: np.ndarray, p: float) -> float:
    """L_p(Omega) norm of a scalar function given as an (n,) array."""
    return _lp_norm(np.asarray(values)[:, None], mu, p, 2.0)


def duality_pairing(f: VectorField, g: VectorField) -> float:
    """sum_i mu_i <f(omega_i), g(omega_i)> with the coordinate pairing l_q x l_q'."""
    if not f.space.compatible(g.space) or f.d != g.d:
        raise InvalidInput("duality_pairing requires matching space and dimension")
    return float(np.einsum("i,ij,ij->", f.space.mu, f.values, g.values))


def apply(m: np.ndarray, f: VectorField) -> VectorField:
    """Apply a scalar-function linear map columnwise: (m f)(omega)_j = sum m f_j."""
    return VectorField(space=f.space, values=np.asarray(m) @ f.values)


def _ratio(m, values, mu, p, q):
    image = m @ values
    denom = _lp_norm(values, mu, p, q)
    if denom == 0.0:
        return 0.0
    return _lp_norm(image, mu, p, q) / denom


def estimate_operator_norm(m: np.ndarray, space: WeightedSpace, params: BanachParams,
                           trials: int = DEFAULT_RESTARTS, seed: int = 0,
                           steps: int = DEFAULT_STEPS) -> float:
    """Multi-start random-ascent lower bound for ||m|| on L_p(Omega; l_q^d).

    Each restart perturbs a field with adaptive step size, accepting any
    increase of ||m f|| / ||f||.  Restart 0 starts from the constant
    positive field (optimal for Markov operators), restart 1 from a
    positivized Gaussian, the rest from Gaussian fields.  Restart i is
    seeded by (seed, i), so enlarging ``trials`` keeps earlier restarts
    fixed and the estimate is monotone in ``trials``.

    Complex matrices are supported; fields are then complex and norms use
    moduli.
    """
    if trials < 1:
        raise InvalidInput("trials must be at least 1")
    m = np.asarray(m)
    n, d = space.n, params.d
    mu, p, q = space.mu, params.p, params.q
    is_complex = np.iscomplexobj(m)

    def draw(rng, shape):
        g = rng.standard_normal(shape)
        if is_complex:
            g = g + 1j * rng.standard_normal(shape)
        return g

    best = 0.0
    for i in range(trials):
        rng = np.random.default_rng((int(seed) & 0x7FFFFFFF, i))
        if i == 0:
            f = np.ones((n, d), dtype=complex if is_complex else float)
        elif i == 1:
            f = np.abs(draw(rng, (n, d)))
        else:
            f = draw(rng, (n, d))
        r = _ratio(m, f, mu, p, q)
        sigma = 0.5
        for _ in range(steps):
            cand = f + sigma * draw(rng, (n, d))
            rc = _ratio(m, cand, mu, p, q)
            if rc > r:
                f, r = cand, rc
                sigma = min(sigma * 1.25, 2.0)
            else:
                sigma = max(sigma * 0.75, 1e-7)
        best = max(best, r)
    return best


def spectral_operator_norm(m: np.ndarray, space: WeightedSpace) -> float:
    """Exact operator norm on L_2(mu) (valid oracle for p = 2, d = 1)."""
    dhalf = np.sqrt(space.mu)
    sym = dhalf[:, None] * np.asarray(m) / dhalf[None, :]
    return float(np.linalg.norm(sym, ord=2))


def convexity_modulus_probe(q: float, d: int, trials: int = 4000,
                            seed: int = 0, refine_steps: int = 200) -> ConvexityEstimate:
    """Probe the best constant delta in the power-type-q convexity inequality.

    Minimizes (0.5(||x||^q + ||y||^q) - ||(x+y)/2||^q) / ||(x-y)/2||^q over
    random pairs with local random-descent refinement of the worst pair.
    The sampled minimum upper-bounds the true infimum; values are clamped
    into [0, 1].  For q = 2 the parallelogram identity forces ratio 1
    exactly; antipodal pairs (x, -x) give ratio 1 for every q >= 2.
    """
    if q < 2:
        raise InvalidInput("power-type-q convexity probe requires q >= 2")
    rng = np.random.default_rng(seed)

    def ratio(x, y):
        diff = x_norm((x - y) / 2.0, q)
        if diff < 1e-12:
            return np.inf  # degenerate pair, excluded
        num = 0.5 * (x_norm(x, q) ** q + x_norm(y, q) ** q) - x_norm((x + y) / 2.0, q) ** q
        return num / diff ** q

    e = np.zeros(d)
    e[0] = 1.0
    best_pair = (e, -e)
    best = ratio(e, -e)
    for _ in range(trials):
        x, y = rng.standard_normal(d), rng.standard_normal(d)
        r = ratio(x, y)
        if r < best:
            best, best_pair = r, (x, y)
    x, y = best_pair
    sigma = 0.3
    for _ in range(refine_steps):
        cand = (x + sigma * rng.standard_normal(d), y + sigma * rng.standard_normal(d))
        r = ratio(*cand)
        if r < best:
            best, (x, y) = r, cand
            sigma = min(sigma * 1.2, 1.0)
        else:
            sigma = max(sigma * 0.8, 1e-6)
    return ConvexityEstimate(q=q, delta=float(np.clip(best, 0.0, 1.0)), trials=trials)


def project_out_fixed(f: VectorField, projection: np.ndarray) -> VectorField:
    """Remove the fixed-space component: f - F f."""
    return VectorField(space=f.space, values=f.values - projection @ f.values)


def check_hoelder(f: VectorField, g: VectorField, params: BanachParams) -> float:
    """Slack of |<f, g>| <= ||f||_{p,q} ||g||_{p',q'}; nonnegative up to roundoff."""
    bound = lp_norm(f, params) * lp_norm(g, params.dual())
    return bound - abs(duality_pairing(f, g))


def field_to_dict(f: VectorField) -> dict:
    return {"n": f.space.n, "d": f.d, "values": f.values.tolist()}


def field_from_dict(payload: dict, space: WeightedSpace) -> VectorField:
    try:
        values = np.asarray(payload["values"], dtype=float)
        n, d = int(payload["n"]), int(payload["d"])
    except (KeyError, TypeError) as exc:
        raise InvalidInput(f"field payload missing entry: {exc}") from exc
    if values.shape != (n, d):
        raise InvalidInput(f"field values shape {values.shape} does not match ({n}, {d})")
    if n != space.n:
        raise PreconditionViolation(f"field has {n} atoms but space has {space.n}")
    return vector_field(space, values)
