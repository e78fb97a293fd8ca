"""Command-line entry point: chain generation, verification suites, dumps.

Exit codes: 0 when every executed check passes, 2 when any check fails,
1 on usage or configuration errors (bad flags, unreadable files, invalid
chains).  Reports are canonical JSON with run metadata kept in a separate
"meta" field so the "result" subtree is byte-identical across reruns
with the same seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import verify as V
from .errors import InvalidInput, LpsError
from .functional_calculus import (calibrate_gamma, hinf_apply_contour, scaled_symbol,
                                  spectral_apply, stolz_boundary_points, stolz_contains,
                                  stolz_loop, sector_boundary, test_function)
from .measure_markov import (chain_from_dict, chain_to_dict, random_reversible,
                             rota_dilation, square, spectral)
from .semigroup_calculus import (frac_derivative, frac_multipliers, heat, make_time_grid,
                                 poisson_subordinate, derivative)
from .square_functions import g_function, pointwise_to_rows
from .vector_spaces import (BanachParams, convexity_modulus_probe, field_from_dict,
                            lp_norm)

SUITES = ("identities", "inequalities", "spectral", "calculus", "all")

DEFAULT_TOLS = {
    "l2_identity": 1e-6,
    "discrete_identity": 1e-8,
    "subordination": 1e-6,
    "rota": 1e-12,
    "rescaling": 1e-10,
    "contour": 1e-8,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here reserves 2 for
    # verification failures and 1 for usage/config problems
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(tok) for tok in text.split(",") if tok)
    except ValueError as exc:
        raise InvalidInput(f"bad sizes list {text!r}") from exc
    if not sizes or min(sizes) < 2:
        raise InvalidInput("sizes must be integers >= 2")
    return sizes


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_chain(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read chain file {path}: {exc}") from exc
    return chain_from_dict(payload)


# -- suites ---------------------------------------------------------------------

def _suite_identities(cfg, tols) -> dict:
    ks = (1, 2, 3)
    worst = {"l2_identity": 0.0, "discrete_identity": 0.0, "subordination": 0.0,
             "rota": 0.0, "rescaling": 0.0}
    plan = V.InstanceFamily(model=cfg["model"], sizes=cfg["sizes"],
                            params=cfg["params"], trials=cfg["trials"],
                            master_seed=cfg["seed"]).plan()
    for _, size, seed in plan:
        s_op, t_op, sg = V.square_instance(size, seed, cfg["model"])
        f = V.mean_zero_field(sg, 1, seed)
        for k in ks:
            worst["l2_identity"] = max(worst["l2_identity"],
                                       V.check_l2_identity(t_op, f, k))
        worst["discrete_identity"] = max(worst["discrete_identity"],
                                         V.check_discrete_l2_identity(t_op, f))
        for t in (0.1, 1.0, 10.0):
            exact = poisson_subordinate(sg, t, f, mode="exact")
            quad = poisson_subordinate(sg, t, f, mode="quadrature")
            denom = max(np.abs(exact.values).max(), 1e-30)
            worst["subordination"] = max(worst["subordination"],
                                         float(np.abs(quad.values - exact.values).max())
                                         / denom)
        dil = rota_dilation(s_op)
        lifted = dil.dilation_apply(f.values)
        direct = t_op.matrix @ f.values
        worst["rota"] = max(worst["rota"], float(np.abs(lifted - direct).max()))
        b = 0.7 * sg.generator_eigenvalues
        for k in ks:
            kk_lhs = (-b) ** k * np.exp(-b)
            kk_rhs = float(k) ** k * ((-b / k) * np.exp(-b / k)) ** k
            worst["rescaling"] = max(worst["rescaling"],
                                     float(np.abs(kk_lhs - kk_rhs).max()))
            for alpha in (0.0, 1.0, -1.0, 1.0 + 1.0j):
                lhs = frac_multipliers(alpha - 1.0, k, b)
                rhs = (k + alpha) * frac_multipliers(alpha, k, b) \
                    + frac_multipliers(alpha, k + 1, b)
                worst["rescaling"] = max(worst["rescaling"],
                                         float(np.abs(lhs - rhs).max()))
    checks = [{"name": name, "value": val, "tol": tols[name],
               "pass": bool(val < tols[name])}
              for name, val in worst.items()]
    return {"suite": "identities", "checks": checks,
            "pass": all(c["pass"] for c in checks)}


def _suite_inequalities(cfg, tols) -> dict:
    params: BanachParams = cfg["params"]
    family = V.InstanceFamily(model=cfg["model"], sizes=cfg["sizes"], params=params,
                              trials=cfg["trials"], master_seed=cfg["seed"])
    reports = []
    if params.q >= 2:
        for variant in ("continuous", "discrete", "poisson"):
            reports.append(V.verify_cotype_inequality(family, k=cfg["k"], variant=variant))
    if params.q <= 2:
        for variant in ("continuous", "discrete"):
            reports.append(V.verify_type_inequality(family, k=cfg["k"], variant=variant))
    reports.append(V.verify_hn_bound(family))
    return {"suite": "inequalities",
            "reports": [r.to_dict() for r in reports],
            "pass": all(r.passed for r in reports)}


def _suite_spectral(cfg, tols) -> dict:
    params: BanachParams = cfg["params"]
    q_tilde = V.renorming_exponent(params)
    delta = convexity_modulus_probe(q_tilde, params.d, trials=2000, seed=cfg["seed"])
    family = V.InstanceFamily(model=cfg["model"], sizes=cfg["sizes"], params=params,
                              trials=cfg["trials"], master_seed=cfg["seed"])
    contraction_max = 0.0
    resolvent_max = 0.0
    failures = 0
    passed = True
    for _, size, seed in family.plan():
        _, t_op, _ = V.square_instance(size, seed, cfg["model"])
        rep_c = V.verify_contraction_bound(t_op, params, delta, seed=seed)
        rep_s = V.verify_spectrum_stolz(t_op, params, delta, seed=seed)
        contraction_max = max(contraction_max, rep_c.stats["max"])
        resolvent_max = max(resolvent_max, rep_s.stats["max"])
        failures += rep_s.details["algebraic_failures"] + rep_s.details["stolz_failures"]
        passed = passed and rep_c.passed and rep_s.passed
    _, t_any, _ = V.square_instance(cfg["sizes"][0], cfg["seed"], cfg["model"])
    rep_a = V.verify_analyticity(t_any, params, n_max=1024, seed=cfg["seed"])
    passed = passed and rep_a.passed
    checks = [
        {"name": "contraction_max", "value": contraction_max,
         "tol": V.contraction_bound(delta, q_tilde) + 1e-6,
         "pass": bool(contraction_max <= V.contraction_bound(delta, q_tilde) + 1e-6)},
        {"name": "stolz_failures", "value": failures, "tol": 0, "pass": failures == 0},
        {"name": "resolvent_constant", "value": resolvent_max, "tol": None, "pass": True},
    ]
    return {"suite": "spectral", "checks": checks,
            "reports": [rep_a.to_dict()],
            "pass": bool(passed and all(c["pass"] for c in checks))}


def _suite_calculus(cfg, tols) -> dict:
    params: BanachParams = cfg["params"]
    _, t_op, sg = V.square_instance(max(cfg["sizes"]), cfg["seed"], cfg["model"])
    f = V.mean_zero_field(sg, 1, cfg["seed"])
    loop = stolz_loop(theta=np.pi / 3, nodes_per_segment=cfg.get("nodes", 192))
    worst = 0.0
    for n in (1, 4, 16):
        phi = test_function("phi_n", n=n, q_conj=params.q_conj)
        via_contour = hinf_apply_contour(sg, phi, loop, f)
        oracle = spectral_apply(sg, phi, f)
        worst = max(worst, float(np.abs(via_contour.values - oracle.values).max()))
    psi = test_function("psi")
    for t in (0.5, 1.0, 2.0):
        symbol = scaled_symbol(psi, t)
        contour = sector_boundary(np.pi / 3, symbol,
                                  generator_max=float(sg.generator_eigenvalues.max()))
        via_contour = hinf_apply_contour(sg, symbol, contour, f)
        mirror = derivative(sg, 1, t, f)  # psi(tA) = tA e^{-tA} = -t dT_t
        worst = max(worst, float(np.abs(via_contour.values + mirror.values).max()))
    rep_m = V.verify_mcintosh(sg, test_function("phi_eps", eps=+1, theta=np.pi / 3,
                                                q_conj=params.q_conj),
                              psi, q=max(params.q, 2.0), d=params.d,
                              trials=min(cfg["trials"], 64), seed=cfg["seed"])
    checks = [{"name": "contour_vs_spectral", "value": worst, "tol": tols["contour"],
               "pass": bool(worst < tols["contour"])}]
    return {"suite": "calculus", "checks": checks, "reports": [rep_m.to_dict()],
            "pass": bool(checks[0]["pass"] and rep_m.passed)}


def run_verify(args) -> int:
    params = BanachParams(args.p, args.q, args.d)
    cfg = {"params": params, "sizes": _parse_sizes(args.sizes), "trials": args.trials,
           "seed": args.seed, "model": args.model, "k": args.k}
    tols = dict(DEFAULT_TOLS)
    if args.tol:
        for item in args.tol:
            name, _, value = item.partition("=")
            if name not in tols:
                raise InvalidInput(f"unknown tolerance key {name!r}")
            tols[name] = float(value)
    suites = {"identities": _suite_identities, "inequalities": _suite_inequalities,
              "spectral": _suite_spectral, "calculus": _suite_calculus}
    names = list(suites) if args.suite == "all" else [args.suite]
    t0 = time.time()
    results = [suites[name](cfg, tols) for name in names]
    ok = all(r["pass"] for r in results)
    payload = {
        "meta": {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
                 "elapsed_s": round(time.time() - t0, 3)},
        "result": {
            "suite": args.suite,
            "config": {"p": params.p, "q": params.q, "d": params.d, "k": args.k,
                       "sizes": list(cfg["sizes"]), "trials": args.trials,
                       "seed": args.seed, "model": args.model,
                       "tolerances": tols},
            "suites": results,
            "pass": ok,
        },
    }
    if args.out:
        _write_json(args.out, payload)
    for res in results:
        for check in res.get("checks", []):
            status = "PASS" if check["pass"] else "FAIL"
            print(f"[{status}] {res['suite']}/{check['name']}: {check['value']:.3e}")
        for rep in res.get("reports", []):
            status = "PASS" if rep["pass"] else "FAIL"
            print(f"[{status}] {res['suite']}/{rep['name']}: max={rep['stats']['max']:.6g}")
    print("overall:", "PASS" if ok else "FAIL")
    return 0 if ok else 2


def run_gen_chain(args) -> int:
    op = random_reversible(args.n, args.seed, args.model)
    if args.square:
        op = square(op)
    _write_json(args.out, chain_to_dict(op))
    print(f"wrote chain ({op.n} states, model={args.model}) to {args.out}")
    return 0


def run_spectrum(args) -> int:
    t_op = _load_chain(args.chain)
    params = BanachParams(args.p, args.q, args.d)
    q_tilde = V.renorming_exponent(params)
    delta = convexity_modulus_probe(q_tilde, params.d, trials=2000, seed=args.seed)
    c = (q_tilde / (2.0 * delta.delta)) ** (1.0 / q_tilde)
    domain = calibrate_gamma(c)
    lam = spectral(t_op).eigenvalues
    rows = [(float(np.real(l)), float(np.imag(l)),
             int(bool(stolz_contains(domain, complex(l)))), domain.gamma)
            for l in lam]
    _write_csv(args.out, ["re", "im", "in_stolz", "gamma"], rows)
    if args.boundary_out:
        pts = stolz_boundary_points(domain)
        _write_csv(args.boundary_out, ["re", "im"],
                   [(float(z.real), float(z.imag)) for z in pts])
    inside = sum(r[2] for r in rows)
    print(f"{inside}/{len(rows)} eigenvalues inside the Stolz domain "
          f"(gamma={domain.gamma:.6f})")
    return 0 if inside == len(rows) else 2


def run_gfunction(args) -> int:
    t_op = _load_chain(args.chain)
    sg = heat(t_op)
    if args.field:
        try:
            with open(args.field, "r", encoding="utf-8") as fh:
                f = field_from_dict(json.load(fh), t_op.space)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"cannot read field file {args.field}: {exc}") from exc
    else:
        f = V.mean_zero_field(sg, args.d, args.seed)
    grid = make_time_grid(sg, args.k, args.q, tol=1e-10)
    g = g_function(sg, f, args.alpha, args.k, args.q, grid)
    _write_csv(args.out, ["atom", "value"], pointwise_to_rows(g))
    if args.profile_out:
        norm_params = BanachParams(args.q, args.q, f.d)
        rows = []
        for t in grid.points:
            fld = frac_derivative(sg, args.alpha, args.k, float(t), f) \
                if args.alpha != 0 else derivative(sg, args.k, float(t), f)
            rows.append((float(t), lp_norm(fld, norm_params)))
        _write_csv(args.profile_out, ["t", "norm_level_value"], rows)
    print(f"wrote g-function values for {t_op.n} atoms to {args.out} "
          f"(tail bound {g.tail_bound:.2e})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpslab",
                     description="square-function laboratory for reversible chains")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-chain", help="generate a random reversible chain")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--model", choices=("dense", "graph", "birth_death", "cycle"),
                     default="dense")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--square", action="store_true",
                     help="store S^2 with the root chain embedded")
    gen.add_argument("--out", required=True)

    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("--suite", choices=SUITES, default="all")
    ver.add_argument("--p", type=float, default=2.0)
    ver.add_argument("--q", type=float, default=2.0)
    ver.add_argument("--d", type=int, default=1)
    ver.add_argument("--k", type=int, default=1)
    ver.add_argument("--sizes", default="8,16,32")
    ver.add_argument("--trials", type=int, default=50)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--model", choices=("dense", "graph", "birth_death", "cycle"),
                     default="dense")
    ver.add_argument("--tol", action="append",
                     help="override tolerance, e.g. --tol l2_identity=1e-5")
    ver.add_argument("--out", help="write the JSON report here")

    spec = sub.add_parser("spectrum", help="dump spectrum vs Stolz domain as CSV")
    spec.add_argument("--chain", required=True)
    spec.add_argument("--p", type=float, default=2.0)
    spec.add_argument("--q", type=float, default=2.0)
    spec.add_argument("--d", type=int, default=1)
    spec.add_argument("--seed", type=int, default=0)
    spec.add_argument("--out", required=True)
    spec.add_argument("--boundary-out")

    gfn = sub.add_parser("gfunction", help="dump pointwise g-function values as CSV")
    gfn.add_argument("--chain", required=True)
    gfn.add_argument("--field", help="JSON field file; random mean-zero if omitted")
    gfn.add_argument("--k", type=int, default=1)
    gfn.add_argument("--q", type=float, default=2.0)
    gfn.add_argument("--d", type=int, default=1)
    gfn.add_argument("--alpha", type=complex, default=0)
    gfn.add_argument("--seed", type=int, default=0)
    gfn.add_argument("--out", required=True)
    gfn.add_argument("--profile-out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen-chain": run_gen_chain, "verify": run_verify,
                "spectrum": run_spectrum, "gfunction": run_gfunction}
    try:
        return handlers[args.command](args)
    except LpsError as exc:
        print(f"lpslab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
