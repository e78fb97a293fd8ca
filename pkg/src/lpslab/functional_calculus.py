"""Stolz-domain geometry and the contour-integral calculus for A = I - T.

The Stolz domain with angle gamma is the interior of the convex hull of
the point 1 and the disc of radius sin(gamma) about 0.  Spectra of
squares of reversible Markov operators sit inside such a hull, which is
what makes the operators analytic (power bounded with decaying
differences); the contour machinery here evaluates functions of the
generator both through resolvent integrals and spectrally, so the two
routes can be compared.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import roots_legendre

from .errors import IllConditionedContour, InvalidInput
from .measure_markov import MarkovOperator, spectral
from .semigroup_calculus import Semigroup
from .vector_spaces import (BanachParams, VectorField, estimate_operator_norm)

CONTAINMENT_TOL = 1e-10
GOLDEN_ITERS = 90
CONTOUR_CLEARANCE = 1e-6
SYMBOL_NULL_TOL = 1e-10
IMAG_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class StolzDomain:
    """Convex hull of 1 and the disc D(0, sin(gamma)), 0 < gamma < pi/2."""

    gamma: float

    def __post_init__(self):
        if not (0.0 < self.gamma < np.pi / 2):
            raise InvalidInput(f"gamma must lie in (0, pi/2), got {self.gamma}")


def stolz_gap(domain: StolzDomain, z) -> np.ndarray | float:
    """min over s in [0, 1] of |z - s| - (1 - s) sin(gamma).

    Nonpositive exactly on the closed hull: the hull is the union of the
    discs D(s, (1-s) sin gamma).  The objective is convex in s, so a
    fixed-iteration golden-section search converges to ~1e-12.
    """
    z = np.asarray(z, dtype=complex)
    sin_g = np.sin(domain.gamma)
    lo = np.zeros(z.shape)
    hi = np.ones(z.shape)
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0

    def objective(s):
        return np.abs(z - s) - (1.0 - s) * sin_g

    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = objective(c), objective(d)
    for _ in range(GOLDEN_ITERS):
        take_left = fc < fd
        hi = np.where(take_left, d, hi)
        lo = np.where(take_left, lo, c)
        c = hi - inv_phi * (hi - lo)
        d = lo + inv_phi * (hi - lo)
        fc, fd = objective(c), objective(d)
    out = np.minimum(fc, fd)
    return float(out) if out.ndim == 0 else out


def stolz_contains(domain: StolzDomain, z) -> np.ndarray | bool:
    """Membership of z in the CLOSED hull, decided via :func:`stolz_gap`."""
    gap = stolz_gap(domain, z)
    result = np.asarray(gap) <= CONTAINMENT_TOL
    return bool(result) if result.ndim == 0 else result


def stolz_boundary_points(domain: StolzDomain, count: int = 120) -> np.ndarray:
    """Polyline along the hull boundary (two tangent segments and the far arc)."""
    g = domain.gamma
    r = np.sin(g)
    p_up = r * np.exp(1j * (np.pi / 2 - g))
    p_dn = np.conj(p_up)
    m = max(count // 3, 4)
    seg_up = 1.0 + (p_up - 1.0) * np.linspace(0.0, 1.0, m, endpoint=False)
    phi = np.linspace(np.pi / 2 - g, 3 * np.pi / 2 + g, m, endpoint=False)
    arc = r * np.exp(1j * phi)
    seg_dn = p_dn + (1.0 - p_dn) * np.linspace(0.0, 1.0, m, endpoint=False)
    return np.concatenate([seg_up, arc, seg_dn])


def algebraic_condition(c: float, lam: complex) -> bool:
    """The closure condition |1 - lam| |lam| <= c (1 - |lam|) for |lam| <= 1."""
    if c <= 0:
        raise InvalidInput("c must be positive")
    mod = abs(lam)
    if mod > 1.0 + 1e-12:
        raise InvalidInput(f"|lam| = {mod} exceeds 1")
    mod = min(mod, 1.0)
    return bool(abs(1.0 - lam) * mod <= c * (1.0 - mod))


_CALIBRATION_CACHE: dict[tuple[float, int], StolzDomain] = {}


def calibrate_gamma(c: float, grid_n: int = 400) -> StolzDomain:
    """Smallest angle whose hull certifiably contains the algebraic region.

    Collect the grid points of the unit disc satisfying the algebraic
    condition for this c, then bisect on gamma until every one of them
    passes :func:`stolz_contains`.  Containment is monotone in gamma, so
    bisection is valid.  Results are cached per (c, grid_n).
    """
    if c <= 0:
        raise InvalidInput("c must be positive")
    key = (round(float(c), 12), grid_n)
    if key in _CALIBRATION_CACHE:
        return _CALIBRATION_CACHE[key]
    axis = np.linspace(-1.0, 1.0, grid_n)
    re, im = np.meshgrid(axis, axis)
    lam = (re + 1j * im).ravel()
    mod = np.abs(lam)
    inside = (mod <= 1.0) & (np.abs(1.0 - lam) * mod <= c * (1.0 - mod))
    region = lam[inside]
    lo, hi = 1e-6, np.pi / 2 - 1e-9
    for _ in range(45):
        mid = 0.5 * (lo + hi)
        if np.all(stolz_gap(StolzDomain(mid), region) <= CONTAINMENT_TOL):
            hi = mid
        else:
            lo = mid
    domain = StolzDomain(hi)
    _CALIBRATION_CACHE[key] = domain
    return domain


# -- H-infinity symbols -------------------------------------------------------

@dataclass(frozen=True)
class HinfFunction:
    """A symbol for the functional calculus, with its decay exponent.

    ``decays_at_infinity`` distinguishes sector symbols (usable on the
    unbounded sector boundary) from polynomial-type symbols that are only
    integrated over closed bounded loops.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    decay: float
    label: str
    decays_at_infinity: bool = True
    envelope_constant: float = field(default=0.0, compare=False)

    def __call__(self, z):
        return self.evaluator(np.asarray(z, dtype=complex))


def _envelope_check(evaluator, decay, omega, check_infinity):
    """Sampled bound C with |phi| <= C min(|z|^s, |z|^-s) on the rays arg = +-omega."""
    tau = np.logspace(-6, 6 if check_infinity else 0, 121)
    worst = 0.0
    for sign in (1.0, -1.0):
        z = tau * np.exp(sign * 1j * omega)
        vals = np.abs(evaluator(z))
        envelope = np.minimum(tau ** decay, tau ** (-decay))
        ratio = vals / envelope
        if not np.all(np.isfinite(ratio)):
            raise InvalidInput("symbol is not finite on the sector boundary")
        worst = max(worst, float(ratio.max()))
    if worst > 1e8:
        raise InvalidInput(f"symbol violates the decay envelope (constant {worst:.2e})")
    return worst


def hinf_function(evaluator, decay: float, label: str, omega: float = np.pi / 3,
                  decays_at_infinity: bool = True) -> HinfFunction:
    """Wrap an evaluator after numerically checking its decay envelope."""
    if decay <= 0:
        raise InvalidInput("decay exponent must be positive")
    const = _envelope_check(evaluator, decay, omega, decays_at_infinity)
    return HinfFunction(evaluator=evaluator, decay=decay, label=label,
                        decays_at_infinity=decays_at_infinity, envelope_constant=const)


def test_function(kind: str, n: int | None = None, eps: int | None = None,
                  theta: float | None = None, q_conj: float | None = None) -> HinfFunction:
    """Library symbols: "phi_n", "psi", "phi_eps".

    phi_n(z) = n^(1/q') z (1-z)^n      (bounded loops only)
    psi(z)   = z e^(-z)
    phi_eps(z) = z^(1/q') / (e^(eps i theta) - z), principal branch power.
    """
    if kind == "phi_n":
        if n is None or q_conj is None:
            raise InvalidInput("phi_n needs n and q_conj")
        scale = float(n) ** (1.0 / q_conj)
        return hinf_function(lambda z, s=scale, m=n: s * z * (1.0 - z) ** m,
                             decay=1.0, label=f"phi_{n}", decays_at_infinity=False)
    if kind == "psi":
        return hinf_function(lambda z: z * np.exp(-z), decay=1.0, label="psi")
    if kind == "phi_eps":
        if eps not in (-1, 1) or theta is None or q_conj is None:
            raise InvalidInput("phi_eps needs eps in {-1, +1}, theta and q_conj")
        if not (0.0 < theta < np.pi / 2):
            raise InvalidInput("phi_eps needs theta in (0, pi/2)")
        pole = np.exp(1j * eps * theta)
        expo = 1.0 / q_conj
        return hinf_function(lambda z: z ** expo / (pole - z),
                             decay=min(expo, 1.0 - expo), label=f"phi_eps({eps:+d})")
    raise InvalidInput(f"unknown test function kind {kind!r}")


def scaled_symbol(phi: HinfFunction, t: float) -> HinfFunction:
    """The symbol z -> phi(t z), used to evaluate phi(tA) through the calculus."""
    if t <= 0:
        raise InvalidInput("scale must be positive")
    return HinfFunction(
        evaluator=lambda z: phi.evaluator(t * np.asarray(z, dtype=complex)),
        decay=phi.decay,
        label=f"{phi.label}@t={t:g}",
        decays_at_infinity=phi.decays_at_infinity,
        envelope_constant=phi.envelope_constant * max(t, 1.0 / t) ** phi.decay,
    )


# -- contours ------------------------------------------------------------------

@dataclass(frozen=True)
class ContourSegment:
    nodes: np.ndarray      # quadrature points z_i
    dz_weights: np.ndarray  # Gauss-Legendre weight times z'(tau)
    kind: str              # "line" or "arc"
    geometry: tuple        # line: (z0, z1); arc: (center, radius, phi0, phi1)

    def distance(self, point: complex) -> float:
        if self.kind == "line":
            z0, z1 = self.geometry
            span = z1 - z0
            tau = np.clip(((point - z0) * np.conj(span)).real / abs(span) ** 2, 0.0, 1.0)
            return abs(point - (z0 + tau * span))
        center, radius, phi0, phi1 = self.geometry
        rel = point - center
        ang = np.angle(rel)
        lo, hi = min(phi0, phi1), max(phi0, phi1)
        for shift in (-2 * np.pi, 0.0, 2 * np.pi):
            if lo <= ang + shift <= hi:
                return abs(abs(rel) - radius)
        ends = (center + radius * np.exp(1j * phi0), center + radius * np.exp(1j * phi1))
        return min(abs(point - ends[0]), abs(point - ends[1]))


@dataclass(frozen=True)
class Contour:
    """Oriented quadrature path for (2 pi i)^(-1) closed-path integrals."""

    segments: tuple[ContourSegment, ...]
    nodes_per_segment: int
    truncation_radius: float | None
    tail_bound: float

    def distance(self, point: complex) -> float:
        return min(seg.distance(point) for seg in self.segments)


def _gl_line(z0: complex, z1: complex, nodes: int) -> ContourSegment:
    x, w = roots_legendre(nodes)
    tau = (x + 1.0) / 2.0
    return ContourSegment(nodes=z0 + tau * (z1 - z0),
                          dz_weights=w * (z1 - z0) / 2.0,
                          kind="line", geometry=(z0, z1))


def _gl_arc(center: complex, radius: float, phi0: float, phi1: float,
            nodes: int) -> ContourSegment:
    x, w = roots_legendre(nodes)
    phi = phi0 + (x + 1.0) / 2.0 * (phi1 - phi0)
    z = center + radius * np.exp(1j * phi)
    dz = 1j * radius * np.exp(1j * phi) * (phi1 - phi0) / 2.0
    return ContourSegment(nodes=z, dz_weights=w * dz, kind="arc",
                          geometry=(center, radius, phi0, phi1))


def stolz_loop(theta: float, nodes_per_segment: int = 128) -> Contour:
    """Closed boundary of 1 - B_theta, counterclockwise.

    Two tangent segments from the origin to the circle of center 1 and
    radius sin(theta) (touching at cos(theta) e^{+-i theta}) joined by
    the far arc through 1 + sin(theta).
    """
    if not (0.0 < theta < np.pi / 2):
        raise InvalidInput("theta must lie in (0, pi/2)")
    touch = np.cos(theta) * np.exp(-1j * theta)
    segs = (
        _gl_line(0.0, touch, nodes_per_segment),
        _gl_arc(1.0, np.sin(theta), -(np.pi / 2 + theta), np.pi / 2 + theta,
                nodes_per_segment),
        _gl_line(np.conj(touch), 0.0, nodes_per_segment),
    )
    return Contour(segments=segs, nodes_per_segment=nodes_per_segment,
                   truncation_radius=None, tail_bound=0.0)


def sector_boundary(theta: float, phi: HinfFunction, generator_max: float,
                    nodes_per_segment: int = 192, tol: float = 1e-14) -> Contour:
    """Truncated boundary of the sector of half-angle theta, positively oriented.

    Orientation: inward along arg = +theta, outward along arg = -theta,
    keeping the spectrum on the left.  The truncation radius grows until
    the ray-tail estimate |phi(R e^{i theta})| * R / dist falls below
    ``tol``; the final estimate is recorded as the tail bound.
    """
    if not (0.0 < theta < np.pi / 2):
        raise InvalidInput("theta must lie in (0, pi/2)")
    if not phi.decays_at_infinity:
        raise InvalidInput(f"symbol {phi.label} is not admissible on an unbounded contour")
    radius = max(16.0, 8.0 * generator_max)
    while radius < 1e9:
        edge = radius * np.exp(1j * theta)
        clearance = max(radius - generator_max, radius / 2.0)
        bound = abs(phi(edge)) * 2.0 * radius / clearance
        if bound < tol:
            break
        radius *= 2.0
    segs = (
        _gl_line(radius * np.exp(1j * theta), 0.0, nodes_per_segment),
        _gl_line(0.0, radius * np.exp(-1j * theta), nodes_per_segment),
    )
    return Contour(segments=segs, nodes_per_segment=nodes_per_segment,
                   truncation_radius=radius, tail_bound=float(bound))


def contour_multipliers(phi, contour: Contour, generator_eigenvalues: np.ndarray) -> np.ndarray:
    """(2 pi i)^(-1) sum over the path of phi(z) / (z - a_j) for each eigenvalue."""
    a = generator_eigenvalues
    total = np.zeros(a.shape, dtype=complex)
    scale = 0.0
    for seg in contour.segments:
        phi_vals = np.asarray(phi(seg.nodes), dtype=complex)
        scale = max(scale, float(np.abs(phi_vals).max(initial=0.0)))
        weighted = seg.dz_weights * phi_vals
        total += weighted @ (1.0 / (seg.nodes[:, None] - a[None, :]))
    total /= 2j * np.pi
    # eigenvalues sitting on (or nearly on) the path are admissible only
    # where the symbol vanishes; there the calculus value is phi(a) itself
    for j, aj in enumerate(a):
        if contour.distance(complex(aj)) < CONTOUR_CLEARANCE:
            direct = complex(np.asarray(phi(np.array([aj + 0j])))[0])
            if abs(direct) > SYMBOL_NULL_TOL * (1.0 + scale):
                raise IllConditionedContour(
                    f"contour passes within {CONTOUR_CLEARANCE:.0e} of eigenvalue {aj:.6g} "
                    f"where |phi| = {abs(direct):.2e}")
            total[j] = direct
    return total


def hinf_apply_contour(sg: Semigroup, phi, contour: Contour, f: VectorField,
                       return_residual: bool = False):
    """Evaluate phi(A) f by contour quadrature of the resolvent integral.

    The resolvent is applied spectrally, so the quadrature error is purely
    in the z-integral.  The imaginary residual of the multipliers must be
    below 1e-8 (real symbols on conjugation-symmetric contours); the real
    part is returned.
    """
    mult = contour_multipliers(phi, contour, sg.generator_eigenvalues)
    residual = float(np.abs(mult.imag).max(initial=0.0))
    if residual >= IMAG_RESIDUAL_TOL:
        raise IllConditionedContour(
            f"imaginary residual {residual:.3e} exceeds {IMAG_RESIDUAL_TOL:.0e}; "
            "symbol/contour pair is not real-compatible")
    out = VectorField(space=f.space,
                      values=sg.decomposition.apply_multiplier(mult.real, f.values))
    if return_residual:
        return out, residual
    return out


def spectral_apply(sg: Semigroup, phi, f: VectorField, t: float = 1.0) -> VectorField:
    """Direct spectral evaluation of phi(t A) f (oracle for the contour route)."""
    mult = np.asarray(phi(t * sg.generator_eigenvalues + 0j))
    if np.abs(mult.imag).max(initial=0.0) < 1e-13:
        mult = mult.real
    return VectorField(space=f.space,
                       values=sg.decomposition.apply_multiplier(mult, f.values))


# -- resolvent scans -----------------------------------------------------------

def resolvent_norm_spectral(t_op: MarkovOperator, z: complex) -> float:
    """Exact ||(z - T)^{-1}|| on L_2(mu): 1 / dist(z, spectrum)."""
    lam = spectral(t_op).eigenvalues
    return float(1.0 / np.abs(z - lam).min())


def resolvent_bound_scan(t_op: MarkovOperator, domain: StolzDomain, params: BanachParams,
                         grid, method: str = "ascent", trials: int = 16,
                         steps: int = 120, seed: int = 0) -> float:
    """sup over admissible grid points of |1 - z| ||(z - T)^{-1}||.

    Points inside the closed hull are skipped with a warning.  ``method``
    is "ascent" (random-ascent lower bound, any p/q/d) or "spectral"
    (exact, valid only for p = 2, d = 1).
    """
    if method not in ("ascent", "spectral"):
        raise InvalidInput(f"unknown method {method!r}")
    if method == "spectral" and not (params.p == 2 and params.d == 1):
        raise InvalidInput("spectral resolvent norms are exact only for p = 2, d = 1")
    eye = np.eye(t_op.n)
    best = 0.0
    for z in np.asarray(grid, dtype=complex).ravel():
        if stolz_contains(domain, z):
            warnings.warn(f"scan point {z:.4g} lies inside the Stolz domain; skipped",
                          stacklevel=2)
            continue
        if method == "spectral":
            norm = resolvent_norm_spectral(t_op, z)
        else:
            resolvent = np.linalg.inv(z * eye - t_op.matrix)
            norm = estimate_operator_norm(resolvent, t_op.space, params,
                                          trials=trials, seed=seed, steps=steps)
        best = max(best, abs(1.0 - z) * norm)
    return best


def default_scan_grid(domain: StolzDomain) -> np.ndarray:
    """Exterior probe points: boundary pushed outward plus far-field anchors."""
    boundary = stolz_boundary_points(domain, count=72)
    rings = [0.5 + (boundary - 0.5) * (1.0 + eta) for eta in (0.08, 0.35, 1.2)]
    anchors = np.array([-1.0, 11.0, 1.0 + 2.0j, 1.0 - 2.0j, 2.0j, -2.0j])
    pts = np.concatenate(rings + [anchors])
    gaps = stolz_gap(domain, pts)
    return pts[np.asarray(gaps) > 1e-6]
