"""Command-line driver: ``szegolab <subcommand> [options]``.

Exit codes: 0 all checks pass, 1 some check failed, 2 usage or configuration
error. A JSON report (and CSV tables where listed) is written to --out for
every run that gets past argument parsing.
"""
from __future__ import annotations

import argparse
import logging
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .cache import BasisCache
from .models import ModelError, SzegoEvaluator, model_from_name
from .reports import Check, ConfigError, Report, RunConfig, read_config_file, write_csv, write_report

log = logging.getLogger("szegolab")

COMMANDS = ("scaling", "tian", "kodaira-injectivity", "fn-profile", "peak-decay", "transversality",
            "zeros", "genus", "ideal-check", "statphase", "selftest")

DEFAULT_NS = {
    "scaling": "64,128,256",
    "tian": "32,64,128",
    "kodaira-injectivity": "16,64",
    "fn-profile": "64,256",
    "peak-decay": "64,256",
    "transversality": "16,36,64",
    "zeros": "16",
    "statphase": "64,128,256",
}
DEFAULT_MODEL = {
    "scaling": "torus",
    "tian": "projective_line_perturbed",
    "kodaira-injectivity": "projective_line",
    "fn-profile": "projective_line",
    "peak-decay": "projective_line",
    "transversality": "torus",
    "zeros": "torus",
}


# ------------------------------------------------------------ parsing helpers
def _int_list(text: str) -> list:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals or min(vals) < 1:
        raise ConfigError(f"levels must be positive integers, got {text!r}")
    return vals


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _complex(text) -> complex:
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"expected a complex number, got {text!r}") from exc


def _kv_list(items: Optional[Sequence[str]]) -> dict:
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ConfigError(f"expected key=value, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _model(cfg: RunConfig):
    kw = {k: cfg.params[k] for k in ("m", "eps", "tau") if k in cfg.params}
    try:
        return model_from_name(cfg.model, **kw)
    except (ModelError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _evaluator(cfg: RunConfig, g, N: int) -> SzegoEvaluator:
    cache = BasisCache(cfg.cache_dir) if cfg.cache_dir else BasisCache()
    return SzegoEvaluator(g, N, cache=cache)


def _csv(cfg: RunConfig, name: str, header, rows) -> str:
    return str(write_csv(Path(cfg.out_dir) / f"{name}.csv", header, rows))


def _grid9(center: complex = 0.5, step: float = 0.25) -> np.ndarray:
    return np.array([center + step * (a + 1j * b) for a in (-1, 0, 1) for b in (-1, 0, 1)])


# ------------------------------------------------------------ subcommands
def cmd_scaling(cfg: RunConfig):
    from .scaling import RATIO_BAND, scaling_report

    g = _model(cfg)
    P0 = _complex(cfg.params.get("center", "0.3+0.2i"))
    rep = scaling_report(g, P0, cfg.Ns, evaluators={N: _evaluator(cfg, g, N) for N in cfg.Ns})
    rows = [(N, r, (rep.ratios[i - 1] if i else "")) for i, (N, r) in enumerate(zip(rep.Ns, rep.residuals))]
    files = [_csv(cfg, "scaling", ["N", "residual", "ratio"], rows)]
    checks = [Check("monotone", rep.residuals, "decreasing", rep.monotone),
              Check("ratios_in_band", rep.ratios, list(RATIO_BAND), rep.ratios_in_band)]
    return rep.to_dict(), checks, files


def cmd_tian(cfg: RunConfig):
    from .kodaira import tian_error

    g = _model(cfg)
    pts = _grid9(_complex(cfg.params.get("center", "0.5")), float(cfg.params.get("step", 0.25)))
    rep = tian_error(g, cfg.Ns, pts, {N: _evaluator(cfg, g, N) for N in cfg.Ns})
    d = rep.to_dict()
    d.pop("matrices")
    files = [_csv(cfg, "tian", ["N", "c0_error"], zip(rep.Ns, rep.errors))]
    if g.kind == "projective_line_perturbed":
        lo, hi = cfg.tol("slope_lo", -1.5), cfg.tol("slope_hi", -0.7)
        ok = rep.fitted_order is not None and lo <= rep.fitted_order <= hi
        checks = [Check("loglog_slope", rep.fitted_order, [lo, hi], ok)]
    else:
        tol = cfg.tol("exact_error", 1e-8)
        checks = [Check("c0_error", max(rep.errors), tol, max(rep.errors) <= tol)]
    return d, checks, files


def cmd_kodaira_injectivity(cfg: RunConfig):
    from .kodaira import COLLISION_FLOOR, injectivity_scan, random_pairs

    g = _model(cfg)
    n = int(cfg.params.get("pairs", 200))
    rng = np.random.default_rng(cfg.seed)
    out, checks, rows = [], [], []
    for N in cfg.Ns:
        P, Q = random_pairs(g, N, n, rng)
        rep = injectivity_scan(_evaluator(cfg, g, N), P, Q, cfg.tol("floor", COLLISION_FLOOR))
        out.append(rep.to_dict())
        rows.append((N, rep.n_pairs, rep.collisions, rep.min_sine))
        checks.append(Check(f"collisions_N{N}", rep.collisions, 0, rep.passed))
    files = [_csv(cfg, "kodaira_injectivity", ["N", "pairs", "collisions", "min_sine"], rows)]
    return {"reports": out}, checks, files


def cmd_fn_profile(cfg: RunConfig):
    from .geometry import heisenberg_chart
    from .kodaira import fN_profile, gaussian_envelope

    g = _model(cfg)
    chart = heisenberg_chart(g, _complex(cfg.params.get("point", "0.3+0.2i")))
    v = _complex(cfg.params.get("v", "1"))
    ts = np.linspace(0, float(cfg.params.get("tmax", 1.0)), int(cfg.params.get("nt", 41)))
    rows, Cs, checks = [], {}, []
    for N in cfg.Ns:
        f = fN_profile(_evaluator(cfg, g, N), chart, v, ts)
        env = gaussian_envelope(v, ts)
        Cs[N] = float(np.max(np.abs(f - env)) * np.sqrt(N))
        rows += [(N, t, a, b) for t, a, b in zip(ts, f, env)]
        checks.append(Check(f"f0_N{N}", float(f[0]), 1e-10, abs(f[0] - 1) <= 1e-10))
        checks.append(Check(f"f_le_1_N{N}", float(f.max()), 1 + 1e-12, f.max() <= 1 + 1e-12))
    c = list(Cs.values())
    if len(c) >= 2:
        if max(c) < 1e-10:
            ok = True  # both at round-off: the band is empty, nothing to compare
        else:
            ok = all(0.5 * c[0] <= x <= 1.5 * c[0] for x in c[1:])
        checks.append(Check("band_constant_stable", c, "within 50% of first", ok))
    files = [_csv(cfg, "fn_profile", ["N", "t", "f_N", "gaussian"], rows)]
    return {"band_constants": Cs, "v": v}, checks, files


def cmd_peak_decay(cfg: RunConfig):
    from .transversality import DEFAULT_EPS, build_lattice, decay_profile, far_field_max, fit_decay_constant

    g = _model(cfg)
    eps = cfg.tol("eps", DEFAULT_EPS)
    radii = np.linspace(0, 2, 9)
    Ns = sorted(cfg.Ns)

    def within(N):  # decay bounds only claimed for d_N <= N^{1/6}
        return radii[radii <= N ** (1 / 6) + 1e-12]

    ev0 = _evaluator(cfg, g, Ns[0])
    C = fit_decay_constant(ev0, build_lattice(g, Ns[0]).points, within(Ns[0]), eps)
    tables, checks, rows = {}, [], []
    for N in Ns:
        ev = ev0 if N == Ns[0] else _evaluator(cfg, g, N)
        L = build_lattice(g, N)
        t = decay_profile(ev, L.points, within(N), eps, C=C)
        tables[N] = {"C": t.C, "violations_lower": t.violations_lower,
                     "violations_upper": t.violations_upper, "centers": len(L)}
        rows += [(N,) + r for r in t.rows]
        checks.append(Check(f"decay_bounds_N{N}", [t.violations_lower, t.violations_upper], 0, t.passed))
    bound = cfg.tol("far_field", 1e-8)
    N = Ns[-1]
    ff = far_field_max(_evaluator(cfg, g, N), build_lattice(g, N).points)
    checks.append(Check(f"far_field_N{N}", ff, bound, ff <= bound))
    files = [_csv(cfg, "peak_decay", ["N", "center", "d_N", "modulus", "lower", "upper"], rows)]
    return {"C": C, "eps": eps, "tables": tables, "far_field_max": ff}, checks, files


def cmd_transversality(cfg: RunConfig):
    from .transversality import SearchParams, build_lattice, donaldson_search

    g = _model(cfg)
    params = SearchParams(seed=cfg.seed, iterations=int(cfg.params.get("iterations", 20)))
    reps, checks = [], []
    for N in cfg.Ns:
        _, rep = donaldson_search(_evaluator(cfg, g, N), build_lattice(g, N), params)
        reps.append(rep)
        checks.append(Check(f"eta_positive_N{N}", rep.eta, 0.0, rep.eta > 0))
        checks.append(Check(f"zero_counts_N{N}", rep.zero_count, rep.expected_zeros,
                            rep.accepted_counts_ok and rep.zero_count == rep.expected_zeros))
    etas = [r.eta for r in reps]
    lim = cfg.tol("eta_ratio", 3.0)
    ratio = max(etas) / min(etas) if min(etas) > 0 else float("inf")
    checks.append(Check("eta_ratio", ratio, lim, ratio < lim))
    files = [_csv(cfg, "transversality", ["N", "eta", "zero_count", "dbar_sup", "accepted"],
                  [(r.level, r.eta, r.zero_count, r.dbar_sup, r.accepted) for r in reps])]
    return {"reports": [vars(r) for r in reps]}, checks, files


def cmd_zeros(cfg: RunConfig):
    from .transversality import BasisSection, zero_locate

    g = _model(cfg)
    rng = np.random.default_rng(cfg.seed)
    checks, rows, scans = [], [], []
    for N in cfg.Ns:
        ev = _evaluator(cfg, g, N)
        d = g.dim_sections(N)
        s = BasisSection(ev, rng.normal(size=d) + 1j * rng.normal(size=d))
        sc = zero_locate(s)
        rows += [(N,) + r for r in sc.as_rows()]
        scans.append({"N": N, "count": len(sc.zeros), "signed_count": sc.signed_count,
                      "expected": sc.expected, "reliable": sc.reliable})
        checks.append(Check(f"signed_count_N{N}", sc.signed_count, sc.expected,
                            sc.signed_count == sc.expected and sc.reliable))
    files = [_csv(cfg, "zeros", ["N", "re", "im", "index"], rows)]
    return {"scans": scans}, checks, files


def cmd_genus(cfg: RunConfig):
    from .transversality import ChernData, ChernError, genus_adjunction

    p = cfg.params
    try:
        m = int(p.get("m", 2))
        N = int(cfg.Ns[0]) if cfg.Ns else int(p["N"])
        variant = p.get("variant", "surface" if m == 2 else "codim")
        if variant == "surface":
            chern = ChernData.basic(m, int(p["c1L2"]), int(p["c1McL"]))
        else:
            chern = ChernData.basic(m, int(p["lm"]), int(p["mu"]))
        g = genus_adjunction(chern, N, variant)
    except KeyError as exc:
        raise ConfigError(f"missing parameter {exc}") from exc
    except (ChernError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    print(g)
    return {"genus": g, "m": m, "N": N, "variant": variant}, [Check("integral", g, "integer", True)], []


def cmd_ideal_check(cfg: RunConfig):
    from . import symbolcalc as sc

    frame = sc.FrameField(float(cfg.params.get("kappa", 0.3)))
    deltas = _float_list(cfg.params.get("deltas", "0.1,0.03,0.01,0.003"))
    r1, s1 = sc.ideal_slope(frame, 1, deltas, seed=cfg.seed)
    r2, s2 = sc.ideal_slope(frame, 2, deltas, seed=cfg.seed)
    x = sc.DEFAULT_BASE[:4]
    N = sc.nijenhuis(frame, x)
    ids = sc.nijenhuis_identities(N)
    nu = sc.nu_identities(sc.nu_coefficients(frame, x, 1.0, N))
    soln = sc.soln2_residual(frame, x, 1.0, N)
    tol = cfg.tol("identity", 1e-8)
    checks = [Check("zeta2_slope", s2, 1.9, s2 >= 1.9),
              Check("zeta1_slope", s1, [0.8, 1.2], 0.8 <= s1 <= 1.2),
              Check("nijenhuis_antisymmetry", ids["antisymmetry"], tol, ids["antisymmetry"] <= tol),
              Check("nijenhuis_cyclic", ids["cyclic"], tol, ids["cyclic"] <= tol),
              Check("nu_symmetry", nu["symmetry"], tol, nu["symmetry"] <= tol),
              Check("nu_cyclic", nu["cyclic"], tol, nu["cyclic"] <= tol),
              Check("soln2", soln, tol, soln <= tol)]
    files = [_csv(cfg, "ideal_check", ["delta", "residual_zeta1", "residual_zeta2"], zip(deltas, r1, r2))]
    return {"slopes": [s1, s2], "identities": ids, "nu": nu, "soln2": soln}, checks, files


def cmd_statphase(cfg: RunConfig):
    from . import statphase as sp

    J = int(cfg.params.get("J", 2))
    names = cfg.params.get("amplitudes", ",".join(sp.TEST_AMPLITUDES)).split(",")
    out, checks, rows = {}, [], []
    for a in names:
        if a not in sp.BUNDLED_AMPLITUDES:
            raise ConfigError(f"unknown amplitude {a!r}")
        slopes = sp.error_orders(sp.BUNDLED_AMPLITUDES[a], cfg.Ns, J)
        out[a] = slopes
        for j, s in enumerate(slopes):
            rows.append((a, j, -s))
            checks.append(Check(f"order_{a}_J{j}", -s, j + 0.7, -s >= j + 0.7))
    gr = np.abs(sp.psi_grad(*sp.CRIT)).max()
    he = np.abs(sp.psi_hessian(*sp.CRIT) - sp.HESSIAN).max()
    checks += [Check("phase_gradient", gr, 1e-10, gr <= 1e-10), Check("phase_hessian", he, 1e-10, he <= 1e-10)]
    files = [_csv(cfg, "statphase", ["amplitude", "J", "error_order"], rows)]
    return {"orders": out}, checks, files


def cmd_selftest(cfg: RunConfig):
    """Quick structural checks with closed-form answers."""
    from . import symbolcalc as sc
    from .models import BundlePoint, bargmann_fock, heisenberg_model_kernel, projective_line, torus
    from .transversality import ChernData, genus_adjunction

    checks = []

    def add(name, value, target, tol):
        checks.append(Check(name, value, [target, tol], abs(value - target) <= tol))

    add("heisenberg_origin", abs(complex(np.reshape(heisenberg_model_kernel(0, 0, 0, 0), ()))), 1 / np.pi, 1e-15)
    ev = SzegoEvaluator(projective_line(), 5)
    z = np.array([0.0, 0.4 - 0.3j, 2.0 + 1.0j])
    add("p1_diagonal", float(np.abs(ev.diagonal(z) - 6 / np.pi).max()), 0.0, 1e-12)
    add("bf_diagonal", float(np.reshape(SzegoEvaluator(bargmann_fock(1), 1).diagonal(np.array([0.0])), -1)[0]), 1 / np.pi, 1e-15)
    evt = SzegoEvaluator(torus(), 1)
    add("torus_N1_gram", evt.basis.gram_residual, 0.0, 1e-10)
    add("genus_cp2", genus_adjunction(ChernData.basic(2, 1, 3), 3), 1, 0)
    add("genus_cp3", genus_adjunction(ChernData.basic(3, 1, 4), 1, "codim"), 0, 0)
    f = sc.zeta1_symbol(sc.FrameField(), 0)
    P = sc.sigma_point(sc.DEFAULT_BASE, 1.3)
    add("bracket_self", abs(sc.poisson_bracket(f, f, P)), 0.0, 1e-12)
    add("zeta1_on_cone", abs(f(P)), 0.0, 1e-14)
    x = BundlePoint(np.array([0.2 + 0.1j]), 0.3)
    add("psi_diagonal", abs(sc.phase_psi(torus(), x, x)), 0.0, 1e-15)
    with tempfile.TemporaryDirectory() as d:
        c = BasisCache(d)
        k = c.key("selftest", 3, {"n": 1})
        table = {"gram_residual": 1.25e-17, "transform": np.array([[1 + 2j, 0.1], [np.pi, -1e-300]])}
        c.store(k, table)
        hit = c.lookup(k)
        same = hit is not None and np.array_equal(hit["transform"], table["transform"])
        checks.append(Check("cache_roundtrip", same, True, same))
        miss = c.lookup(c.key("selftest", 3, {"n": 2})) is None
        checks.append(Check("cache_miss_on_new_grid", miss, True, miss))
    return {}, checks, []


HANDLERS: dict = {
    "scaling": cmd_scaling,
    "tian": cmd_tian,
    "kodaira-injectivity": cmd_kodaira_injectivity,
    "fn-profile": cmd_fn_profile,
    "peak-decay": cmd_peak_decay,
    "transversality": cmd_transversality,
    "zeros": cmd_zeros,
    "genus": cmd_genus,
    "ideal-check": cmd_ideal_check,
    "statphase": cmd_statphase,
    "selftest": cmd_selftest,
}


# ------------------------------------------------------------ argument parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="szegolab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        s = sub.add_parser(name, help=(HANDLERS[name].__doc__ or name).splitlines()[0])
        s.add_argument("--config", help="plain-text key=value file (flags override it)")
        s.add_argument("--out", help="report directory (default: reports)")
        s.add_argument("--cache", help="basis cache directory (default: $SZEGOLAB_CACHE_DIR or ~/.cache/szegolab)")
        s.add_argument("--seed", type=int)
        s.add_argument("--model")
        s.add_argument("--N", dest="N", help="comma-separated levels")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="extra parameter")
        s.add_argument("--tol", action="append", metavar="NAME=VALUE", help="tolerance override")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "genus":
            s.add_argument("--m", type=int)
            s.add_argument("--c1L2", help="c1(L)^2 (surface)")
            s.add_argument("--c1McL", help="c1(M).c1(L) (surface)")
            s.add_argument("--lm", help="c1(L)^m (codim variant)")
            s.add_argument("--mu", help="c1(M).c1(L)^{m-1} (codim variant)")
            s.add_argument("--variant", choices=("surface", "codim"))
    return p


def make_config(args: argparse.Namespace) -> RunConfig:
    file_kv = read_config_file(args.config) if args.config else {}
    params = {k: v for k, v in file_kv.items()
              if k not in ("model", "N", "seed", "out", "cache") and not k.startswith("tol.")}
    tols = {k[4:]: float(v) for k, v in file_kv.items() if k.startswith("tol.")}
    params.update(_kv_list(args.set))
    try:
        tols.update({k: float(v) for k, v in _kv_list(args.tol).items()})
    except ValueError as exc:
        raise ConfigError(f"tolerance values must be numbers: {exc}") from exc
    for k in ("m", "c1L2", "c1McL", "lm", "mu", "variant"):
        v = getattr(args, k, None)
        if v is not None:
            params[k] = v
    cmd = args.command
    model = args.model or file_kv.get("model") or DEFAULT_MODEL.get(cmd)
    Ns_text = args.N or file_kv.get("N") or DEFAULT_NS.get(cmd)
    Ns = _int_list(Ns_text) if Ns_text else []
    try:
        seed = int(args.seed if args.seed is not None else file_kv.get("seed", 0))
    except ValueError as exc:
        raise ConfigError("seed must be an integer") from exc
    return RunConfig(cmd, model, Ns, seed, params, tols, args.out or file_kv.get("out", "reports"),
                     args.cache or file_kv.get("cache"))


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        t0 = time.perf_counter()
        payload, checks, files = HANDLERS[cfg.command](cfg)
        timings = {"wall_seconds": time.perf_counter() - t0}
    except ConfigError as exc:
        print(f"szegolab {args.command}: configuration error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    payload = dict(payload, files=files)
    report = Report.build(cfg, payload, checks, timings)
    path = write_report(report, cfg.out_dir, cfg.command.replace("-", "_"))
    for c in report.checks:
        log.info("%s %s value=%s tol=%s", "PASS" if c["passed"] else "FAIL", c["name"], c["value"], c["tolerance"])
    if cfg.command != "genus":
        print(f"{cfg.command}: {'PASS' if report.passed else 'FAIL'} ({len(checks)} checks) -> {path}")
    return 0 if report.passed else 1


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
