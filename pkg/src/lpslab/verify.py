"""Executable checks for the identities and inequalities, with constant sweeps.

The exact L2 statements are verified as residuals; the L_p(Omega; X)
inequalities have no numeric constants, so sweeps over randomized
instance families report ratio statistics plus a size-trend verdict
(least-squares slope of max ratio against log size, pass iff <= 0.05).
Norm estimates are sampled lower bounds, so an inequality PASS means
"not refuted at the sampled resolution".

Sweeps draw fields with the fixed-space component removed: the fixed
part contributes nothing to any square function while inflating the
plain norm arbitrarily, and removing it is what makes the p = q = 2
ratio land exactly on the L2-identity constant.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import InvalidInput, InvariantViolation, PreconditionViolation
from .measure_markov import (MarkovOperator, fixed_point_projection, random_reversible,
                             spectral, square)
from .semigroup_calculus import (Semigroup, TimeGrid, heat, make_time_grid, subordinated)
from .square_functions import discrete_square, g_function, hn_functional
from .vector_spaces import (BanachParams, ConvexityEstimate, VectorField,
                            convexity_modulus_probe, estimate_operator_norm, lp_norm,
                            scalar_lp_norm, spectral_operator_norm, x_norm)
from .functional_calculus import (StolzDomain, algebraic_condition, calibrate_gamma,
                                  default_scan_grid, resolvent_bound_scan, stolz_contains)

SLOPE_LIMIT = 0.05
COTYPE_VARIANTS = ("continuous", "discrete", "poisson")


def stable_hash(*parts) -> int:
    """Platform-independent 63-bit hash for per-trial seeding."""
    payload = ":".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big") & 0x7FFFFFFFFFFFFFFF


def thread_count() -> int:
    raw = os.environ.get("LPS_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_trials(fn, args):
    """Run trials sequentially or on a thread pool; order is preserved either way."""
    workers = thread_count()
    if workers == 1:
        return [fn(a) for a in args]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))


@dataclass(frozen=True)
class InstanceFamily:
    """Randomized family of chains: model, sizes, exponents and per-trial seeds."""

    model: str
    sizes: tuple[int, ...]
    params: BanachParams
    trials: int
    master_seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInput("family needs at least one trial")
        if not self.sizes:
            raise InvalidInput("family needs at least one size")

    def plan(self):
        """Deterministic (trial, size, seed) schedule, round-robin over sizes."""
        return [(i, self.sizes[i % len(self.sizes)], stable_hash(self.master_seed, i))
                for i in range(self.trials)]

    def to_dict(self) -> dict:
        return {"model": self.model, "sizes": list(self.sizes),
                "trials": self.trials, "master_seed": self.master_seed}


@dataclass
class ConstantReport:
    """Ratio statistics of one inequality over an instance family."""

    name: str
    stats: dict
    per_size: list
    error_budget: dict
    passed: bool
    seed: int
    params: dict
    family: dict | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        s = self.stats
        if not (s["max"] + 1e-12 >= s["p95"] >= s["mean"] - 1e-12 >= -1e-12):
            raise InvariantViolation(f"report statistics out of order: {s}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "family": self.family,
            "stats": self.stats,
            "per_size": self.per_size,
            "error_budget": self.error_budget,
            "pass": self.passed,
            "seed": self.seed,
            "details": self.details,
        }


def _stats(values: np.ndarray) -> dict:
    values = np.asarray(values, dtype=float)
    return {
        "max": float(values.max()),
        "mean": float(values.mean()),
        "p95": float(np.percentile(values, 95)),
    }


def _trend_slope(sizes: np.ndarray, maxima: np.ndarray) -> float:
    if len(sizes) < 2:
        return 0.0
    return float(np.polyfit(np.log(sizes), maxima, 1)[0])


def _params_dict(params: BanachParams, **extra) -> dict:
    out = {"p": params.p, "q": params.q, "d": params.d}
    out.update(extra)
    return out


def mean_zero_field(sg: Semigroup, d: int, seed: int) -> VectorField:
    """Random Gaussian field with the fixed-space component removed."""
    for retry in range(8):
        rng = np.random.default_rng(stable_hash(seed, "field", retry))
        raw = rng.standard_normal((sg.space.n, d))
        values = raw - sg.fixed_projection_values(raw)
        if np.abs(values).max() > 1e-9:
            return VectorField(space=sg.space, values=values)
    raise InvariantViolation("could not draw a field outside the fixed space")


def square_instance(size: int, seed: int, model: str):
    """(S, T = S^2, semigroup) for one family trial."""
    s = random_reversible(size, seed, model)
    t = square(s)
    return s, t, heat(t)


# -- exact L2 statements -------------------------------------------------------

def l2_constant(k: int) -> float:
    """The square-function normalization 4^(-k) (2k-1)!."""
    return 4.0 ** (-k) * factorial(2 * k - 1)


def check_l2_identity(t_op: MarkovOperator, f: VectorField, k: int,
                      grid: TimeGrid | None = None) -> float:
    """Residual of  int_Omega G_{2,k}(f)^2 dmu = 4^{-k}(2k-1)! ||f - F f||_2^2.

    Relative residual when the right side is nonzero, absolute otherwise.
    """
    if f.d != 1:
        raise InvalidInput("the L2 identity is scalar: d must be 1")
    sg = heat(t_op)
    if grid is None:
        grid = make_time_grid(sg, k, 2.0, tol=1e-10)
    g = g_function(sg, f, 0, k, 2.0, grid)
    lhs = float(t_op.space.mu @ g.values ** 2)
    centered = f.values - sg.fixed_projection_values(f.values)
    rhs = l2_constant(k) * float(t_op.space.mu @ (centered[:, 0] ** 2))
    return abs(lhs - rhs) / rhs if rhs > 1e-12 else abs(lhs - rhs)


def check_discrete_l2_identity(t_op: MarkovOperator, f: VectorField,
                               tol: float = 1e-12) -> float:
    """Residual of  ||f - F f||_2^2 = sum_n n ||T^{n-1}(1 - T^2) f||_2^2.

    The sum is truncated once the geometric tail (rate lambda_*^2) is
    below ``tol``; iterates use repeated application of T.
    """
    if f.d != 1:
        raise InvalidInput("the discrete L2 identity is scalar: d must be 1")
    dec = spectral(t_op)
    if dec.eigenvalues.min() < -1e-10:
        raise InvalidInput("requires T = S^2 (spectrum in [0, 1])")
    moving = ~dec.fixed_mask()
    mu = t_op.space.mu
    centered = f.values[:, 0] - dec.apply_multiplier(dec.fixed_mask().astype(float),
                                                     f.values[:, 0])
    rhs = float(mu @ centered ** 2)
    if not moving.any():
        return abs(rhs)
    lam_star = float(np.abs(dec.eigenvalues[moving]).max())
    if lam_star == 0.0:
        n_terms = 16
    else:
        n_terms = max(16, int(np.ceil(np.log(tol * max(1.0 - lam_star ** 2, 1e-300))
                                      / (2.0 * np.log(max(lam_star, 1e-300))))))
    u = f.values[:, 0] - t_op.matrix @ (t_op.matrix @ f.values[:, 0])  # (1 - T^2) f
    lhs = 0.0
    for n in range(1, n_terms + 1):
        lhs += n * float(mu @ u ** 2)
        u = t_op.matrix @ u
    return abs(lhs - rhs) / rhs if rhs > 1e-12 else abs(lhs - rhs)


# -- inequality sweeps ---------------------------------------------------------

def _cotype_ratio(sg: Semigroup, t_op: MarkovOperator, f: VectorField,
                  params: BanachParams, k: int, variant: str) -> float:
    if variant == "continuous":
        grid = make_time_grid(sg, k, params.q, tol=1e-10)
        g = g_function(sg, f, 0, k, params.q, grid)
    elif variant == "poisson":
        psg = subordinated(sg)
        grid = make_time_grid(psg, k, params.q, tol=1e-10)
        g = g_function(psg, f, 0, k, params.q, grid)
    elif variant == "discrete":
        g = discrete_square(t_op, f, params.q)
    else:
        raise InvalidInput(f"unknown variant {variant!r}; expected one of {COTYPE_VARIANTS}")
    denom = lp_norm(f, params)
    return scalar_lp_norm(g.values, f.space.mu, params.p) / denom


def verify_cotype_inequality(family: InstanceFamily, k: int = 1,
                             variant: str = "continuous") -> ConstantReport:
    """Sweep of ||G(f)||_p / ||f||_{L_p(Omega;X)} over the family (q >= 2 regime)."""
    if family.params.q < 2:
        raise InvalidInput("cotype sweep requires q >= 2 (l_q^d has cotype q only then)")

    def one(task):
        _, size, seed = task
        _, t_op, sg = square_instance(size, seed, family.model)
        f = mean_zero_field(sg, family.params.d, seed)
        return size, _cotype_ratio(sg, t_op, f, family.params, k, variant)

    pairs = map_trials(one, family.plan())
    sizes = np.array([s for s, _ in pairs])
    ratios = np.array([r for _, r in pairs])
    per_size = sorted({int(s): float(ratios[sizes == s].max()) for s in set(sizes)}.items())
    slope = _trend_slope(np.array([s for s, _ in per_size]),
                         np.array([m for _, m in per_size]))
    return ConstantReport(
        name=f"cotype-{variant}-k{k}",
        stats=_stats(ratios),
        per_size=[{"size": s, "max": m} for s, m in per_size],
        error_budget={"slope": slope, "slope_limit": SLOPE_LIMIT},
        passed=bool(slope <= SLOPE_LIMIT),
        seed=family.master_seed,
        params=_params_dict(family.params, k=k, variant=variant),
        family=family.to_dict(),
    )


def verify_type_inequality(family: InstanceFamily, k: int = 1,
                           variant: str = "continuous") -> ConstantReport:
    """Sweep of the reverse inequality ratio in the martingale-type regime q <= 2."""
    if not (1.0 < family.params.q <= 2.0):
        raise InvalidInput("type sweep requires q in (1, 2]")

    def one(task):
        _, size, seed = task
        _, t_op, sg = square_instance(size, seed, family.model)
        f = mean_zero_field(sg, family.params.d, seed)
        params = family.params
        fixed = sg.fixed_projection_values(f.values)
        if variant == "discrete":
            g = discrete_square(t_op, f, params.q)
            combined = (x_norm(fixed, params.q) ** params.q + g.values ** params.q) \
                ** (1.0 / params.q)
            denom = scalar_lp_norm(combined, f.space.mu, params.p)
            num = lp_norm(f, params)
        else:
            sg_used = subordinated(sg) if variant == "poisson" else sg
            grid = make_time_grid(sg_used, k, params.q, tol=1e-10)
            g = g_function(sg_used, f, 0, k, params.q, grid)
            denom = scalar_lp_norm(g.values, f.space.mu, params.p)
            num = lp_norm(f, params) - lp_norm(
                VectorField(space=f.space, values=fixed), params)
        if denom < 1e-14:
            if num > 1e-10:
                raise InvariantViolation(
                    "square function vanished while ||f|| > ||F f||; inconsistent state")
            return size, 0.0
        return size, num / denom

    pairs = map_trials(one, family.plan())
    sizes = np.array([s for s, _ in pairs])
    ratios = np.array([r for _, r in pairs])
    per_size = sorted({int(s): float(ratios[sizes == s].max()) for s in set(sizes)}.items())
    slope = _trend_slope(np.array([s for s, _ in per_size]),
                         np.array([m for _, m in per_size]))
    return ConstantReport(
        name=f"type-{variant}-k{k}",
        stats=_stats(ratios),
        per_size=[{"size": s, "max": m} for s, m in per_size],
        error_budget={"slope": slope, "slope_limit": SLOPE_LIMIT},
        passed=bool(slope <= SLOPE_LIMIT),
        seed=family.master_seed,
        params=_params_dict(family.params, k=k, variant=variant),
        family=family.to_dict(),
    )


# -- spectral estimates --------------------------------------------------------

def renorming_exponent(params: BanachParams) -> float:
    """Power type used for L_p(Omega; l_q^d): q~ = max(p, q, 2)."""
    return max(params.p, params.q, 2.0)


def contraction_bound(delta: ConvexityEstimate, q_tilde: float) -> float:
    return min(1.5, 2.0 * (1.0 - delta.delta / 2.0 ** q_tilde) ** (1.0 / q_tilde))


def verify_contraction_bound(t_op: MarkovOperator, params: BanachParams,
                             delta: ConvexityEstimate | None = None,
                             trials: int = 16, steps: int = 120,
                             seed: int = 0) -> ConstantReport:
    """Check the sampled norm of I - T against min(3/2, 2 (1 - delta/2^q)^(1/q))."""
    q_tilde = renorming_exponent(params)
    if delta is None:
        delta = convexity_modulus_probe(q_tilde, params.d, trials=2000, seed=seed)
    est = estimate_operator_norm(np.eye(t_op.n) - t_op.matrix, t_op.space, params,
                                 trials=trials, steps=steps, seed=seed)
    bound = contraction_bound(delta, q_tilde)
    budget = {"bound": bound, "delta": delta.delta, "q_tilde": q_tilde}
    if params.p == 2 and params.d == 1:
        budget["spectral_oracle"] = spectral_operator_norm(
            np.eye(t_op.n) - t_op.matrix, t_op.space)
    return ConstantReport(
        name="contraction-bound",
        stats=_stats(np.array([est])),
        per_size=[{"size": t_op.n, "max": est}],
        error_budget=budget,
        passed=bool(est <= bound + 1e-6),
        seed=seed,
        params=_params_dict(params),
    )


def verify_spectrum_stolz(t_op: MarkovOperator, params: BanachParams,
                          delta: ConvexityEstimate | None = None,
                          scan_grid=None, method: str | None = None,
                          seed: int = 0) -> ConstantReport:
    """Stolz membership of the spectrum plus the empirical resolvent constant."""
    q_tilde = renorming_exponent(params)
    if delta is None:
        delta = convexity_modulus_probe(q_tilde, params.d, trials=2000, seed=seed)
    c = (q_tilde / (2.0 * delta.delta)) ** (1.0 / q_tilde)
    domain = calibrate_gamma(c)
    lam = spectral(t_op).eigenvalues
    alg_failures = sum(0 if algebraic_condition(c, l) else 1 for l in lam)
    stolz_failures = int(np.sum(~np.atleast_1d(stolz_contains(domain, lam + 0j))))
    if method is None:
        method = "spectral" if (params.p == 2 and params.d == 1) else "ascent"
    grid = default_scan_grid(domain) if scan_grid is None else scan_grid
    constant = resolvent_bound_scan(t_op, domain, params, grid, method=method, seed=seed)
    return ConstantReport(
        name="spectrum-stolz",
        stats=_stats(np.array([constant])),
        per_size=[{"size": t_op.n, "max": constant}],
        error_budget={"c": c, "gamma": domain.gamma, "delta": delta.delta,
                      "method": method},
        passed=bool(alg_failures == 0 and stolz_failures == 0),
        seed=seed,
        params=_params_dict(params),
        details={"algebraic_failures": alg_failures, "stolz_failures": stolz_failures},
    )


def discrete_analyticity_oracle(eigenvalues: np.ndarray, n_max: int) -> float:
    """Exact  sup_{1 <= n <= n_max} n ||T^n (T - 1)||  on L_2 for a real spectrum.

    For each eigenvalue the integer maximizer of n lam^n (1 - lam) is
    within one of -1/log(lam), so only a handful of candidates per
    eigenvalue is needed.
    """
    best = 0.0
    for lam in np.asarray(eigenvalues, dtype=float):
        lam = abs(lam)
        if lam >= 1.0 or lam == 0.0:
            continue
        n_star = -1.0 / np.log(lam)
        candidates = {1, n_max}
        for cand in (np.floor(n_star), np.ceil(n_star)):
            candidates.add(int(np.clip(cand, 1, n_max)))
        best = max(best, max(n * lam ** n * (1.0 - lam) for n in candidates))
    return best


def verify_analyticity(t_op: MarkovOperator, params: BanachParams, n_max: int = 1024,
                       trials: int = 8, steps: int = 80, seed: int = 0) -> ConstantReport:
    """Boundedness of n ||T^n (T - 1)|| and of the grid-sup of ||t dT_t||.

    At p = 2, d = 1 both quantities come from the spectral oracle (exact
    values, all n up to n_max); otherwise the random-ascent estimate is
    evaluated along a geometric n-grid.  The continuous sup equals 1/e
    whenever some eigenvalue of the generator is positive.
    """
    if n_max < 16:
        raise InvalidInput("n_max must be at least 16")
    dec = spectral(t_op)
    lam = dec.eigenvalues
    ns = [1]
    while ns[-1] * 2 <= n_max:
        ns.append(ns[-1] * 2)
    exact_mode = params.p == 2 and params.d == 1
    if exact_mode:
        values = [n * float(np.max(np.abs(lam) ** n * np.abs(lam - 1.0))) for n in ns]
        sup_all = discrete_analyticity_oracle(lam, n_max)
        moving = np.abs(1.0 - lam) > 1e-10
        sup_t = float(np.exp(-1.0)) if moving.any() else 0.0
    else:
        mu = t_op.space.mu
        v = dec.eigenvectors

        def op_norm(mult):
            m = (v * mult) @ (v.T * mu)
            return estimate_operator_norm(m, t_op.space, params,
                                          trials=trials, steps=steps, seed=seed)

        values = [n * op_norm(lam ** n * (lam - 1.0)) for n in ns]
        sup_all = max(values)
        a = 1.0 - lam
        t_grid = np.logspace(-2, 2, 17) / max(a.max(), 1e-12)
        sup_t = max(op_norm(-t * a * np.exp(-t * a)) for t in t_grid)
    arr = np.array(values)
    drop_idx = len(arr) - 1
    for i in range(len(arr)):
        if np.all(np.diff(arr[i:]) <= 1e-9):
            drop_idx = i
            break
    bounded = bool(np.isfinite(arr).all() and drop_idx < len(arr))
    return ConstantReport(
        name="analyticity",
        stats=_stats(arr),
        per_size=[{"size": t_op.n, "max": float(arr.max())}],
        error_budget={"n_max": n_max, "oracle": exact_mode},
        passed=bounded,
        seed=seed,
        params=_params_dict(params, n_max=n_max),
        details={"n_grid": ns, "values": [float(x) for x in arr],
                 "sup_n_oracle": float(sup_all), "sup_t": float(sup_t),
                 "nonincreasing_from": int(drop_idx)},
    )


# -- square-function comparison (sector calculus) -------------------------------

def symbol_square_function(sg: Semigroup, symbol, y: VectorField, q: float,
                           points: np.ndarray, weights: np.ndarray) -> float:
    """Norm-level (int ||phi(tA) y||_{L_q(Omega;X)}^q dt/t)^(1/q), spectrally."""
    a = sg.generator_eigenvalues
    arg = np.outer(points, a).astype(complex)
    mult = np.asarray(symbol(arg))
    mult[:, np.abs(a) <= 1e-14] = 0.0  # H0-symbols vanish at the origin
    dec = sg.decomposition
    coeffs = dec.coefficients(y.values)
    fields = np.einsum("nj,tj,jd->tnd", dec.eigenvectors, mult, coeffs)
    powers = x_norm(fields, q) ** q
    norm_q = powers @ y.space.mu
    return float((weights @ norm_q) ** (1.0 / q))


def mcintosh_grid(sg: Semigroup, density: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Wide log grid for sector symbols with only algebraic decay at infinity."""
    a = sg.generator_eigenvalues
    gap = sg.spectral_gap
    if gap == 0.0:
        raise InvalidInput("no decaying component; symbol square functions vanish")
    t_min, t_max = 1e-5 / a.max(), 1e7 / gap
    npts = max(2, int(np.ceil(np.log10(t_max / t_min) * density)) + 1)
    x = np.linspace(np.log(t_min), np.log(t_max), npts)
    w = np.empty_like(x)
    w[0] = (x[1] - x[0]) / 2.0
    w[-1] = (x[-1] - x[-2]) / 2.0
    w[1:-1] = (x[2:] - x[:-2]) / 2.0
    return np.exp(x), w


def verify_mcintosh(sg: Semigroup, phi, psi, q: float, d: int = 1, trials: int = 64,
                    seed: int = 0) -> ConstantReport:
    """Ratio statistics of the phi- and psi-square functions over random fields.

    Precondition (checked numerically): int_0^inf psi(t) dt/t != 0.
    Fields entirely in the fixed space would give 0/0 and are skipped.
    """
    points, weights = mcintosh_grid(sg)
    psi_mass = float(abs(weights @ np.asarray(psi(points.astype(complex)))))
    if psi_mass <= 1e-8:
        raise PreconditionViolation("psi has numerically vanishing mean along rays")
    ratios = []
    skips = 0
    for i in range(trials):
        rng = np.random.default_rng(stable_hash(seed, "mcintosh", i))
        y = VectorField(space=sg.space, values=rng.standard_normal((sg.space.n, d)))
        s_phi = symbol_square_function(sg, phi, y, q, points, weights)
        s_psi = symbol_square_function(sg, psi, y, q, points, weights)
        if s_psi < 1e-14:
            skips += 1
            continue
        ratios.append(s_phi / s_psi)
    arr = np.array(ratios)
    return ConstantReport(
        name="square-function-comparison",
        stats=_stats(arr),
        per_size=[{"size": sg.space.n, "max": float(arr.max())}],
        error_budget={"psi_mass": psi_mass, "skips": skips},
        passed=bool(np.isfinite(arr).all()),
        seed=seed,
        params={"q": q, "d": d, "phi": getattr(phi, "label", "phi"),
                "psi": getattr(psi, "label", "psi")},
    )


def verify_hn_bound(family: InstanceFamily) -> ConstantReport:
    """Sweep of the semigroup-difference functional against ||f||_{L_q(Omega;X)}."""
    q = family.params.q
    norm_params = BanachParams(q, q, family.params.d)

    def one(task):
        _, size, seed = task
        _, t_op, sg = square_instance(size, seed, family.model)
        f = mean_zero_field(sg, family.params.d, seed)
        grid = make_time_grid(sg, 1, q, tol=1e-10)
        return size, hn_functional(sg, f, q, grid) / lp_norm(f, norm_params)

    pairs = map_trials(one, family.plan())
    sizes = np.array([s for s, _ in pairs])
    ratios = np.array([r for _, r in pairs])
    per_size = sorted({int(s): float(ratios[sizes == s].max()) for s in set(sizes)}.items())
    slope = _trend_slope(np.array([s for s, _ in per_size]),
                         np.array([m for _, m in per_size]))
    return ConstantReport(
        name="semigroup-difference-bound",
        stats=_stats(ratios),
        per_size=[{"size": s, "max": m} for s, m in per_size],
        error_budget={"slope": slope, "slope_limit": SLOPE_LIMIT},
        passed=bool(slope <= SLOPE_LIMIT),
        seed=family.master_seed,
        params=_params_dict(family.params),
        family=family.to_dict(),
    )


def report_json(report: ConstantReport) -> str:
    """Canonical JSON serialization (deterministic for fixed inputs)."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
