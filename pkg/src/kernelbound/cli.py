"""Configuration-driven command line for the whole pipeline.

Subcommands: check (coefficient hypotheses), synth (Lyapunov synthesis and
the constants ledger), solve (kernel columns to disk), verify (numerical
checks against the kernel store), all (the four in order, stopping at the
first failure).

Exit codes are a stable contract: 0 everything holds, 1 a mathematical
statement failed, 2 the configuration is unusable, 3 a resource limit
tripped.  All file outputs are reproducible byte-for-byte from the
(config, seed) pair; progress and timing go to stdout only.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Optional

import numpy as np

from . import bounds, hypotheses, lyapunov, solver, verify
from .coefficients import VARIANTS, PolynomialFamily
from .config import RunConfig, family_from_config, parse_config
from .errors import BudgetError, ConfigError, KernelBoundError
from .svg import polyline_plot

__all__ = ["main", "cmd_check", "cmd_synth", "cmd_solve", "cmd_verify",
           "EXIT_PASS", "EXIT_MATH", "EXIT_CONFIG", "EXIT_RESOURCE"]

EXIT_PASS, EXIT_MATH, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3

OUT_ENV = "KERNELBOUND_OUT"

KNOWN_CHECKS = ("domination", "monotone", "mass", "support", "duality",
                "chapman", "integrability", "weighted", "decay")
RANDOMIZED_CHECKS = frozenset(("domination", "chapman"))


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _write(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _g(x) -> str:
    return "%.12g" % float(x)


def _resolve_out(cfg: RunConfig, cli_out) -> str:
    if cli_out:
        return cli_out
    env = os.environ.get(OUT_ENV)
    if env:
        return env
    return cfg.get_str("output", "directory", ".")


def _grid_params(cfg: RunConfig):
    d = cfg.get_int("grid", "d")
    if d not in (1, 2):
        raise ConfigError("%s: grid.d must be 1 or 2, got %d"
                          % (cfg._where("grid", "d"), d))
    radii = cfg.get_floats("grid", "radii")
    if any(r <= 0 for r in radii) or sorted(radii) != radii \
            or len(set(radii)) != len(radii):
        raise ConfigError("%s: grid.radii must be positive and strictly "
                          "increasing" % cfg._where("grid", "radii"))
    spacing = cfg.get_float("grid", "spacing")
    dt = cfg.get_float("grid", "dt", None)
    theta = cfg.get_float("grid", "theta", 0.5)
    return d, radii, spacing, dt, theta


def _point(row, d: int):
    return float(row[0]) if d == 1 else tuple(float(v) for v in row)


def _points_key(cfg: RunConfig, section: str, key: str, d: int,
                default=None) -> Optional[list]:
    if not cfg.has(section, key):
        return default
    mat = cfg.get_matrix(section, key)
    if mat.shape[1] != d:
        raise ConfigError("%s: %s.%s rows must have d = %d coordinates"
                          % (cfg._where(section, key), section, key, d))
    return [_point(row, d) for row in mat]


def _synthesize(cfg: RunConfig, fam, target: str):
    """Deterministic synthesis plus grid calibration of the timed constant."""
    T = cfg.get_float("lyapunov", "T", 1.0)
    fn = lyapunov.synth_poly if isinstance(fam, PolynomialFamily) \
        else lyapunov.synth_exp
    result = fn(fam, T, target=target)
    if target == "P":
        result = _apply_overrides(cfg, result)
    radius = cfg.get_float("lyapunov", "radius", 20.0)
    report = lyapunov.verify_certificate(fam, result.timed, radius=radius)
    return replace(result, timed=report.certified), report


def _apply_overrides(cfg: RunConfig, result):
    # forward-target overrides from [lyapunov]; adjoint synthesis is left alone
    rho = cfg.get_float("lyapunov", "rho", None)
    eps_hat = cfg.get_float("lyapunov", "eps_hat", None)
    sigma = cfg.get_float("lyapunov", "sigma", None)
    delta = cfg.get_float("lyapunov", "delta", None)
    if all(v is None for v in (rho, eps_hat, sigma, delta)):
        return result
    static = result.static
    static = replace(static,
                     rho=static.rho if rho is None else rho,
                     eps_hat=static.eps_hat if eps_hat is None else eps_hat)
    timed = replace(result.timed, base=static,
                    sigma=result.timed.sigma if sigma is None else sigma,
                    delta=result.timed.delta if delta is None else delta,
                    c0=None)
    return replace(result, static=static, timed=timed)


def _bounds_params(cfg: RunConfig, d: int):
    s = cfg.get_float("bounds", "s", float(d + 3))
    if s <= d + 2:
        raise ConfigError("%s: bounds.s must exceed d + 2 = %d, got %s"
                          % (cfg._where("bounds", "s"), d + 2, _g(s)))
    mode = cfg.get_str("bounds", "window_mode", "proportional")
    if mode not in ("proportional", "fixed"):
        raise ConfigError("%s: bounds.window_mode must be proportional or "
                          "fixed, got %r"
                          % (cfg._where("bounds", "window_mode"), mode))
    if mode == "fixed":
        vals = cfg.get_floats("bounds", "window")
        if len(vals) != 4:
            raise ConfigError("%s: bounds.window needs 4 values a0 a b b0"
                              % cfg._where("bounds", "window"))
        window, t_ref = tuple(vals), None
    else:
        window, t_ref = None, cfg.get_float("bounds", "t_ref", 0.25)
    eps_scales = tuple(cfg.get_floats("bounds", "eps_scales",
                                      (0.5, 0.75, 1.0)))
    if len(eps_scales) != 3:
        raise ConfigError("%s: bounds.eps_scales needs exactly 3 values"
                          % cfg._where("bounds", "eps_scales"))
    return s, window, t_ref, eps_scales


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def cmd_check(cfg: RunConfig, out: str) -> int:
    fam = family_from_config(cfg)
    if isinstance(fam, PolynomialFamily):
        reports = hypotheses.check_polynomial(fam)
    else:
        reports = hypotheses.check_exponential(fam)
    radius = cfg.get_float("verify", "radius", 20.0)
    base_reports, row = hypotheses.check_base(fam, radius=radius)
    reports = list(reports) + list(base_reports)
    text = hypotheses.report_text(reports, row)
    _write(os.path.join(out, "hypotheses.txt"), text)
    _write(os.path.join(out, "hypotheses.csv"), hypotheses.margins_csv(reports))
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_PASS if all(r.ok for r in reports) else EXIT_MATH


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _spec_lines(label: str, result, static_rep, timed_rep) -> list:
    st, ti = result.static, result.timed
    lines = [
        "%s.form: %s" % (label, st.form),
        "%s.target: %s" % (label, st.target),
        "%s.rho: %s" % (label, _g(st.rho)),
        "%s.eps_hat: %s" % (label, _g(st.eps_hat)),
        "%s.lam: %s" % (label, _g(st.lam) if st.lam is not None else "-"),
        "%s.T: %s" % (label, _g(ti.T)),
        "%s.sigma: %s" % (label, _g(ti.sigma)),
        "%s.delta: %s" % (label, _g(ti.delta)),
        "%s.eps_T: %s" % (label, _g(ti.eps_T)),
        "%s.c0: %s" % (label, _g(ti.c0) if ti.c0 is not None else "-"),
    ]
    for tag, rep in (("static", static_rep), ("timed", timed_rep)):
        if rep is None:
            continue
        lines.append("%s.%s_sup: %s -> %s (radius %s, %s)"
                     % (label, tag, _g(rep.sup_coarse), _g(rep.sup_fine),
                        _g(rep.radius), "stable" if rep.passed else "drifting"))
    return lines


def _ledger_text(ledger, H: float, H_star: float) -> str:
    a0, a, b, b0 = ledger.window
    lines = ["constants ledger",
             "d: %d" % ledger.d,
             "s: %s" % _g(ledger.s),
             "window: %s %s %s %s" % (_g(a0), _g(a), _g(b), _g(b0)),
             "M: %s" % _g(ledger.M),
             "M_star: %s" % (_g(ledger.M_star)
                             if ledger.M_star is not None else "-"),
             "item forward adjoint boundary"]
    flags = ledger.boundary_flags or (False,) * 8
    star = ledger.c_star or (None,) * 8
    for name, c, cs, fb in zip(bounds.LEDGER_ITEMS, ledger.c, star, flags):
        lines.append("%s %s %s %s"
                     % (name, _g(c), _g(cs) if cs is not None else "-",
                        "edge" if fb else "interior"))
    lines.append("majorant: %s" % _g(H))
    lines.append("majorant_star: %s" % _g(H_star))
    return "\n".join(lines) + "\n"


def _certificate_text(cert, H: float, H_star: float) -> str:
    lines = ["bound certificate",
             "kind: %s" % cert.kind,
             "d: %d" % cert.d,
             "s: %s" % _g(cert.s),
             "eps: %s" % _g(cert.eps),
             "sigma: %s" % _g(cert.sigma),
             "rho: %s" % _g(cert.rho)]
    if cert.lam is not None:
        lines.append("lam: %s" % _g(cert.lam))
    if cert.c_hat is not None:
        lines.append("c_hat: %s" % _g(cert.c_hat))
    for name, val in (("eps_star", cert.eps_star),
                      ("sigma_star", cert.sigma_star),
                      ("rho_star", cert.rho_star),
                      ("lam_star", cert.lam_star)):
        if val is not None:
            lines.append("%s: %s" % (name, _g(val)))
    lines.append("majorant: %s" % _g(H))
    lines.append("majorant_star: %s" % _g(H_star))
    lines.append("C_cal: %s"
                 % (_g(cert.C_cal) if cert.C_cal is not None else "-"))
    return "\n".join(lines) + "\n"


def cmd_synth(cfg: RunConfig, out: str) -> int:
    fam = family_from_config(cfg)
    d = fam.dims.d
    s, window, t_ref, eps_scales = _bounds_params(cfg, d)
    radius = cfg.get_float("lyapunov", "radius", 20.0)

    forward, rep_ft = _synthesize(cfg, fam, "P")
    rep_fs = lyapunov.verify_certificate(fam, forward.static, radius=radius)
    forward = replace(forward, static=rep_fs.certified)
    adjoint, rep_at = _synthesize(cfg, fam, "P_adjoint")
    rep_as = lyapunov.verify_certificate(fam, adjoint.static, radius=radius)
    adjoint = replace(adjoint, static=rep_as.certified)

    led_f, H = verify.weighted_majorant(fam, forward, s, t=t_ref,
                                        eps_scales=eps_scales,
                                        cert_radius=radius, window=window)
    led_a, H_star = verify.weighted_majorant(fam, adjoint, s, t=t_ref,
                                             eps_scales=eps_scales,
                                             adjoint=True, cert_radius=radius,
                                             window=window)
    ledger = led_f.with_adjoint(led_a)

    if isinstance(fam, PolynomialFamily):
        kind = "polynomial"
        lam = bounds.eval_lambda_poly(fam, forward.timed.sigma,
                                      forward.static.rho)
        lam_star = bounds.eval_lambda_poly(fam, adjoint.timed.sigma,
                                           adjoint.static.rho)
        c_hat = None
    else:
        kind = "exponential"
        lam = lam_star = None
        c_hat = cfg.get_float("bounds", "c_hat", bounds.default_c_hat(d))
    cert = bounds.BoundCertificate(
        kind=kind, d=d, s=s, ledger=ledger,
        eps=forward.timed.eps_T, sigma=forward.timed.sigma,
        rho=forward.static.rho, lam=lam, c_hat=c_hat,
        eps_star=adjoint.timed.eps_T, sigma_star=adjoint.timed.sigma,
        rho_star=adjoint.static.rho, lam_star=lam_star)

    lyap_lines = ["lyapunov certificate"]
    lyap_lines += _spec_lines("forward", forward, rep_fs, rep_ft)
    lyap_lines += _spec_lines("adjoint", adjoint, rep_as, rep_at)
    _write(os.path.join(out, "lyapunov_certificate.txt"),
           "\n".join(lyap_lines) + "\n")

    time_lines = ["time-dependent weight"]
    for label, res in (("forward", forward), ("adjoint", adjoint)):
        ti = res.timed
        time_lines += ["%s.T: %s" % (label, _g(ti.T)),
                       "%s.sigma: %s" % (label, _g(ti.sigma)),
                       "%s.delta: %s" % (label, _g(ti.delta)),
                       "%s.eps_T: %s" % (label, _g(ti.eps_T)),
                       "%s.c0: %s" % (label, _g(ti.c0)),
                       "%s.G_at_T: %s" % (label, _g(ti.G(ti.T)))]
    _write(os.path.join(out, "time_spec.txt"), "\n".join(time_lines) + "\n")

    _write(os.path.join(out, "ledger.txt"), _ledger_text(ledger, H, H_star))
    _write(os.path.join(out, "certificate.txt"),
           _certificate_text(cert, H, H_star))

    print("synth: rho=%s sigma=%s delta=%s c0=%s"
          % (_g(forward.static.rho), _g(forward.timed.sigma),
             _g(forward.timed.delta), _g(forward.timed.c0)))
    print("synth: adjoint rho=%s sigma=%s c0=%s"
          % (_g(adjoint.static.rho), _g(adjoint.timed.sigma),
             _g(adjoint.timed.c0)))
    print("synth: majorant %s (adjoint %s), wrote 4 artifact files"
          % (_g(H), _g(H_star)))
    return EXIT_PASS


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _column_name(variant: str, t: float, row, k: int) -> str:
    coords = "_".join("%g" % float(v) for v in np.atleast_1d(row))
    return "column_%s_t%g_y%s_k%d.csv" % (variant, t, coords, k)


def cmd_solve(cfg: RunConfig, out: str) -> int:
    fam = family_from_config(cfg)
    d, radii, spacing, dt, theta = _grid_params(cfg)
    grid = solver.GridSpec(d, radii[-1], spacing)
    m = fam.dims.m

    if not cfg.has("solve", "sources"):
        print("solve: no sources requested; store left empty")
        return EXIT_PASS
    sources = cfg.get_matrix("solve", "sources")
    if sources.shape[1] != d:
        raise ConfigError("%s: solve.sources rows must have d = %d "
                          "coordinates" % (cfg._where("solve", "sources"), d))
    variants = cfg.get_strs("solve", "variants", ["P"])
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError("%s: solve.variants entry %r not in %s"
                              % (cfg._where("solve", "variants"), v,
                                 "/".join(VARIANTS)))
    times = cfg.get_floats("solve", "times", [0.5])
    components = cfg.get_ints("solve", "components", list(range(m)))
    for k in components:
        if not 0 <= k < m:
            raise ConfigError("%s: solve.components entry %d outside 0..%d"
                              % (cfg._where("solve", "components"), k, m - 1))
    width = cfg.get_float("solve", "width", None)
    budget = cfg.get_int("solve", "budget", 4_000_000)

    store = verify.KernelStore(os.path.join(out, "store"))
    sys_fp = verify.system_fingerprint(fam)
    wall = time.perf_counter()
    written = 0
    for variant in variants:
        handle = solver.OperatorHandle(fam, grid, variant=variant,
                                       budget=budget)
        for t in times:
            for row in sources:
                center = _point(row, d)
                for k in components:
                    tick = time.perf_counter()
                    field = verify.stored_column(handle, t, center, k,
                                                 width=width, dt=dt,
                                                 theta=theta, store=store,
                                                 sys_fp=sys_fp)
                    name = _column_name(variant, t, row, k)
                    solver.save_field_csv(os.path.join(out, name), field)
                    written += 1
                    print("solve: %s t=%g y=%s k=%d -> %s (%.3fs)"
                          % (variant, t,
                             ",".join("%g" % v for v in np.atleast_1d(row)),
                             k, name, time.perf_counter() - tick))
    print("solve: wrote %d columns in %.3fs (store size %d)"
          % (written, time.perf_counter() - wall, len(store)))
    return EXIT_PASS


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _read_calibration(path) -> Optional[float]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("C_cal"):
                    return float(line.partition("=")[2])
    except (OSError, ValueError):
        return None
    return None


def cmd_verify(cfg: RunConfig, out: str, jobs: Optional[int] = None,
               cli_seed: Optional[int] = None) -> int:
    fam = family_from_config(cfg)
    d, radii, spacing, dt, theta = _grid_params(cfg)
    grid = solver.GridSpec(d, radii[-1], spacing)
    m = fam.dims.m

    checks = cfg.get_strs("verify", "checks")
    for name in checks:
        if name not in KNOWN_CHECKS:
            raise ConfigError("%s: unknown check %r (known: %s)"
                              % (cfg._where("verify", "checks"), name,
                                 " ".join(KNOWN_CHECKS)))
    seed = cli_seed if cli_seed is not None else cfg.get_int("verify", "seed",
                                                             None)
    randomized = sorted(RANDOMIZED_CHECKS.intersection(checks))
    if randomized and seed is None:
        raise ConfigError("%s: checks %s draw random data; set verify.seed "
                          "or pass --seed" % (cfg.path, " ".join(randomized)))
    jobs = jobs if jobs else cfg.get_int("verify", "jobs", 1)

    tset = cfg.get_floats("verify", "t", [0.1, 0.5, 1.0])
    t_single = cfg.get_float("verify", "t_single", sorted(tset)[len(tset) // 2])
    xs = _points_key(cfg, "verify", "x", d, [_point(np.zeros(d), d)])
    srcs = _points_key(cfg, "verify", "sources", d,
                       _points_key(cfg, "solve", "sources", d,
                                   [_point(np.zeros(d), d)]))
    components = cfg.get_ints("verify", "components", list(range(m)))
    width = cfg.get_float("verify", "width",
                          cfg.get_float("solve", "width", None))
    cert_radius = cfg.get_float("lyapunov", "radius", 20.0)
    store = verify.KernelStore(os.path.join(out, "store"))
    src_pairs = [(y, k) for y in srcs for k in components]

    def tol(name: str, default: float) -> float:
        return cfg.get_float("verify", "tol_" + name, default)

    # synthesis is shared state, so resolve it before any thread starts
    needs_synth = {"integrability", "weighted", "decay"}.intersection(checks)
    fwd = adj = None
    if needs_synth:
        fwd = _synthesize(cfg, fam, "P")[0]
        if "weighted" in checks and cfg.get_bool("verify", "two_sided", False):
            adj = _synthesize(cfg, fam, "P_adjoint")[0]

    cal_path = os.path.join(out, "calibration.txt")
    fresh_calibration = False
    thunks = []
    for name in checks:
        if name == "domination":
            thunks.append(lambda: verify.check_domination(
                fam, grid, t_single, src_pairs, dt=dt, width=width,
                tol=tol("domination", 1e-9), seed=seed, store=store))
        elif name == "monotone":
            thunks.append(lambda: verify.check_monotone_in_R(
                fam, radii, spacing, t_single, (srcs[0], components[0]),
                dt=dt, width=width, tol=tol("monotone", 1e-8), store=store))
        elif name == "mass":
            thunks.append(lambda: verify.check_mass_and_positivity(
                fam, grid, tset, dt=dt, tol=tol("mass", 0.01),
                sources=src_pairs, width=width, store=store))
        elif name == "support":
            for k in components:
                thunks.append(lambda k=k: verify.check_support(
                    fam, k, grid, t_single, center=srcs[0], dt=dt,
                    width=width, tol_null=tol("support", 1e-10), store=store))
        elif name == "duality":
            pairs = [(xs[0], h, srcs[0], k)
                     for h in components for k in components]
            thunks.append(lambda pairs=pairs: verify.check_duality(
                fam, grid, t_single, pairs, dt=dt, width=width,
                tol=tol("duality", 0.02), theta=theta, store=store))
        elif name == "chapman":
            s_split = cfg.get_float("verify", "chapman_s", t_single / 2.0)
            thunks.append(lambda s_split=s_split:
                          verify.check_chapman_kolmogorov(
                              fam, grid, t_single, s_split, dt=dt,
                              tol=tol("chapman", 1e-9), seed=seed,
                              store=store))
        elif name == "integrability":
            t_int = cfg.get_floats("verify", "t_integrability", tset)
            thunks.append(lambda t_int=t_int:
                          verify.check_lyapunov_integrability(
                              fam, fwd.timed, grid, t_int, xs,
                              tol=tol("integrability", 0.05), dt=dt,
                              cert_radius=cert_radius, store=store))
        elif name == "weighted":
            s, _, t_ref, eps_scales = _bounds_params(cfg, d)
            t_w = cfg.get_floats("verify", "t_weighted",
                                 [t_ref if t_ref else 0.25])
            coarse = cfg.get_floats("verify", "coarse",
                                    [2.0 * spacing, radii[-1] / 2.0])
            fine = cfg.get_floats("verify", "fine", [spacing, radii[-1]])
            if len(coarse) != 2 or len(fine) != 2:
                raise ConfigError("%s: verify.coarse / verify.fine need "
                                  "'spacing radius'" % cfg.path)
            two_sided = cfg.get_bool("verify", "two_sided", False)
            C_cal = _read_calibration(cal_path)
            fresh_calibration = C_cal is None
            scale = cfg.get_float("verify", "majorant_scale", 1.0)
            override = None
            if scale != 1.0:
                # every bracket monomial has degree >= s/2 in the ledger
                # constants, so scaling them by f moves the majorant by at
                # least f^(s/2); apply that envelope uniformly in time
                href = {}
                for t in t_w:
                    _, H = verify.weighted_majorant(
                        fam, fwd, s, t=t, eps_scales=eps_scales,
                        cert_radius=cert_radius)
                    href[t] = H * scale ** (s / 2.0)

                def override(t, pts, href=href):
                    return np.full(len(np.atleast_2d(pts)), href[t])
            thunks.append(lambda t_w=t_w, coarse=coarse, fine=fine,
                          two_sided=two_sided, C_cal=C_cal,
                          override=override, s=s, eps_scales=eps_scales:
                          verify.check_weighted_bound(
                              fam, fwd, s, t_w, srcs,
                              (coarse[0], coarse[1]), (fine[0], fine[1]),
                              eps_scales=eps_scales,
                              tol=tol("weighted", 0.10), dt=dt, width=width,
                              theta=theta, two_sided=two_sided,
                              adjoint_synthesis=adj, C_cal=C_cal,
                              majorant_override=override,
                              cert_radius=cert_radius, store=store))
        elif name == "decay":
            t_dec = cfg.get_floats("verify", "t_decay", [0.25, 0.5])
            e_scale = cfg.get_float("verify", "decay_eps_scale", 0.5)
            thunks.append(lambda t_dec=t_dec, e_scale=e_scale:
                          verify.check_decay_shape(
                              fam, grid, t_dec, xs[0], components[0],
                              eps=e_scale * fwd.timed.eps_T,
                              sigma=fwd.timed.sigma, rho=fwd.timed.base.rho,
                              dt=dt, width=width,
                              slack=tol("decay", 0.5), store=store))

    wall = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(fn) for fn in thunks]
            results = [f.result() for f in futures]
    else:
        results = [fn() for fn in thunks]

    summary = verify.summary_text(results)
    _write(os.path.join(out, "verify_summary.txt"), summary)
    _write(os.path.join(out, "verify_results.csv"),
           verify.results_csv(results))
    if fresh_calibration and cfg.get_float("verify", "majorant_scale",
                                           1.0) == 1.0:
        for r in results:
            if r.check == "check_weighted_bound" and "C_cal" in r.details:
                _write(cal_path, "C_cal = %.17g\n" % r.details["C_cal"])
    formats = cfg.get_strs("output", "formats", ["txt", "csv"])
    if "svg" in formats:
        _write_plots(cfg, out, fam, grid, t_single, dt, theta, width, store,
                     results, srcs, components)
    sys.stdout.write(summary if summary.endswith("\n") else summary + "\n")
    print("verify: %d check runs in %.3fs" % (len(results),
                                              time.perf_counter() - wall))
    return EXIT_PASS if all(r.status == "pass" for r in results) else EXIT_MATH


def _write_plots(cfg, out, fam, grid, t_plot, dt, theta, width, store,
                 results, srcs, components):
    sys_fp = verify.system_fingerprint(fam)
    handle = solver.OperatorHandle(fam, grid, variant="P")
    field = verify.stored_column(handle, t_plot, srcs[0], components[0],
                                 width=width, dt=dt, theta=theta,
                                 store=store, sys_fp=sys_fp)
    pts = grid.points()
    if grid.d == 1:
        mask = np.ones(len(pts), dtype=bool)
    else:
        mask = np.abs(pts[:, 1]) < 1e-12
    axis = pts[mask, 0]
    series = [("component %d" % k, axis, field.values[mask, k])
              for k in range(fam.dims.m)]
    _write(os.path.join(out, "kernel_section.svg"),
           polyline_plot(series, title="kernel section at t=%g" % t_plot,
                         xlabel="x", ylabel="value"))
    mass = next((r for r in results
                 if r.check == "check_mass_and_positivity"), None)
    if mass is not None:
        rows = mass.details["samples"]
        ts = [r["t"] for r in rows]
        _write(os.path.join(out, "mass_decay.svg"),
               polyline_plot([("sup of evolved ones", ts,
                               [r["value"] for r in rows]),
                              ("certified envelope", ts,
                               [r["bound"] for r in rows])],
                             title="mass decay", xlabel="t", ylabel="mass"))
    weighted = next((r for r in results
                     if r.check == "check_weighted_bound"), None)
    if weighted is not None:
        by_t = {}
        for row in weighted.details["samples"]:
            by_t[row["t"]] = max(by_t.get(row["t"], 0.0), row["value"])
        ts = sorted(by_t)
        _write(os.path.join(out, "weighted_ratio.svg"),
               polyline_plot([("sup ratio", ts, [by_t[t] for t in ts])],
                             title="weighted ratio vs t", xlabel="t",
                             ylabel="ratio"))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def cmd_all(cfg: RunConfig, out: str, jobs, seed) -> int:
    for step in (cmd_check, cmd_synth, cmd_solve):
        rc = step(cfg, out)
        if rc != EXIT_PASS:
            return rc
    return cmd_verify(cfg, out, jobs=jobs, cli_seed=seed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kernelbound",
        description="hypothesis checks, Lyapunov synthesis, kernel solves, "
                    "and numerical verification for weakly coupled systems")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("check", "validate coefficient hypotheses"),
                       ("synth", "synthesize Lyapunov data and the ledger"),
                       ("solve", "compute kernel columns to disk"),
                       ("verify", "run numerical checks against the store"),
                       ("all", "check, synth, solve, then verify")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        out = _resolve_out(cfg, args.out)
        os.makedirs(out, exist_ok=True)
        if args.command == "check":
            return cmd_check(cfg, out)
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out, jobs=args.jobs, cli_seed=args.seed)
        return cmd_all(cfg, out, args.jobs, args.seed)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print("resource limit: %s" % exc, file=sys.stderr)
        return EXIT_RESOURCE
    except KernelBoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_MATH


if __name__ == "__main__":
    sys.exit(main())
