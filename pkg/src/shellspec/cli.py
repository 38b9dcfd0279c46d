"""Command-line front end.

    shellspec identities|spectrum|resolvent|diagnostics|converge --config FILE [--threads N] [--out DIR]

Exit codes: 0 pass, 1 usage or configuration error, 2 acceptance failure,
3 numerical refusal (critical coupling or singular boundary operator).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_complex
from .diagnostics import (
    cauchy_coupling_identities,
    compactness_profile,
    confinement_check,
    convergence_study,
    eta_exact_inverse_check,
    identity_suite,
    jump_relation_check,
    to_json,
    to_markdown,
)
from .gamma import classify
from .geometry import MeshError, build_quadrature
from .kernels import SpectralParam
from .operators import LowOrderWarning, assemble_cauchy, assemble_W, lambda_operators
from .resolvent import IllConditionedError, LambdaSolver, PointSource, boundary_condition_defect, krein_apply
from .spectral import (
    CriticalCouplingError,
    chebyshev_grid,
    determinant_sweep,
    mapped_coupling,
    scan,
    spectral_correspondence_test,
    sufficiency_classifier,
)

log = logging.getLogger("shellspec")

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_REFUSED = 0, 1, 2, 3


class AcceptanceFailure(Exception):
    pass


def _versions() -> dict:
    import scipy
    import sklearn

    return {"shellspec": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text)
    return path


# ---------------------------------------------------------------- commands


def cmd_identities(cfg: RunConfig, out: Path, timings: dict) -> dict:
    spec = cfg.geometry
    tol = cfg.section("tolerances")
    idc = cfg.section("identities")
    a_values = [float(a) for a in idc["a_values"]]
    report = {"geometry": spec.to_dict(), "levels": []}
    failures = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", LowOrderWarning)
        for factor in (1, 2):
            t0 = time.perf_counter()
            q = build_quadrature(spec.refined(factor) if factor > 1 else spec)
            res = identity_suite(q, cfg.mass, a_values, n_densities=int(idc["n_densities"]), seed=cfg.seed)
            if factor == 1:
                res["jump"] = jump_relation_check(q, SpectralParam(float(idc["jump_z"]), cfg.mass),
                                                  seed=cfg.seed)
            timings[f"identities_x{factor}"] = time.perf_counter() - t0
            report["levels"].append(res)
            log.info("resolution %d: N=%d done in %.1fs", q.descriptor.resolution, q.n,
                     timings[f"identities_x{factor}"])
    report["lower_order_fallback"] = any(issubclass(w.category, LowOrderWarning) for w in caught)
    base, fine = report["levels"]

    def check(name, value, ok):
        if not ok:
            failures.append(f"{name} = {value:.3e}")

    for lvl in (base, fine):
        tag = f"N={lvl['N']}"
        check(f"square_W[{tag}]", lvl["square_W"], lvl["square_W"] <= tol["square"])
        check(f"norm_W[{tag}]", lvl["norm_W"], lvl["norm_W"] >= tol["norm_lower"])
        if not math.isnan(lvl["symmetry_W"]):
            check(f"symmetry_W[{tag}]", lvl["symmetry_W"], lvl["symmetry_W"] <= tol["symmetry"])
        for a, rec in lvl["a"].items():
            t = f"{tag},a={a}"
            check(f"square_C[{t}]", rec["square_C"], rec["square_C"] <= tol["square"])
            for key in ("calderon+", "calderon-", "calderon+T", "calderon-T"):
                check(f"{key}[{t}]", rec[key], rec[key] <= tol["calderon"])
            check(f"norm_C[{t}]", rec["norm_C"], rec["norm_C"] >= tol["norm_lower"])
            for key in ("symmetry_C", "symmetry_S"):
                if not math.isnan(rec[key]):
                    check(f"{key}[{t}]", rec[key], rec[key] <= tol["symmetry"])
    for key in ("interior", "exterior"):
        check(f"jump_{key}", base["jump"][key], base["jump"][key] <= tol["jump"])
    check("square_W refinement", fine["square_W"], fine["square_W"] <= base["square_W"])
    for a in base["a"]:
        check(f"square_C refinement a={a}", fine["a"][a]["square_C"],
              fine["a"][a]["square_C"] <= base["a"][a]["square_C"])
    report["failures"] = failures
    to_json(report, out / "identities.json")
    _write(out, "identities.md", to_markdown(report, "Identity suite"))
    if failures:
        raise AcceptanceFailure("failing identities: " + "; ".join(failures))
    return report


def cmd_spectrum(cfg: RunConfig, out: Path, timings: dict) -> dict:
    c = cfg.coupling
    sp = cfg.section("spectral")
    m = cfg.mass
    note = None
    if c.is_local:
        info = classify(c)
        if info.get("critical"):
            raise CriticalCouplingError(
                f"{c.family} {c.strengths}: sgn = 4, a critical parameter in the classification of "
                "delta-shell couplings; the boundary operator loses its Fredholm control")
        if info.get("confining"):
            note = "confining coupling: the surface is impenetrable, the operator decouples into interior and exterior parts"
    q = build_quadrature(cfg.geometry)
    kw = dict(n_samples=int(sp["n_samples"]), margin=float(sp["margin"]),
              tol_root=float(sp["tol_root"]) * m, fraction=float(sp["fraction"]))
    t0 = time.perf_counter()
    s = scan(q, c, m, **kw)
    timings["scan"] = time.perf_counter() - t0
    report = s.to_dict()
    if note:
        report["note"] = note
    _write(out, "scan.csv", s.to_csv())
    if sp.get("oracle"):
        t0 = time.perf_counter()
        grid = chebyshev_grid(int(sp["oracle_factor"]) * int(sp["n_samples"]), m, float(sp["margin"]))
        roots, _ = determinant_sweep(q, c, m, grid, fraction=float(sp["fraction"]))
        timings["oracle"] = time.perf_counter() - t0
        report["oracle_roots"] = roots.tolist()
    kap = c.as_kappa()
    if kap is not None and sp.get("correspondence", True):
        sgn = kap[0] ** 2 - kap[1] ** 2 - kap[2] ** 2
        if sgn != 0 and abs(sgn - 4) > 1e-12:
            t0 = time.perf_counter()
            s2 = scan(q, mapped_coupling(c), m, **kw)
            report["correspondence"] = spectral_correspondence_test(q, c, m, scans=(s, s2))
            timings["correspondence"] = time.perf_counter() - t0
    if kap is not None and kap[2] == 0.0:
        norms = {"C": assemble_cauchy(q, SpectralParam(0.0, m)).norm(), "W": assemble_W(q).norm()}
        report["sufficiency"] = sufficiency_classifier(kap[0], kap[1], norms)
        report["sufficiency"]["norms"] = norms
    to_json(report, out / "scan.json")
    log.info("%d root(s): %s", len(s.roots), [round(r.a, 8) for r in s.roots])
    return report


def cmd_resolvent(cfg: RunConfig, out: Path, timings: dict) -> dict:
    rs = cfg.section("resolvent")
    c = cfg.coupling
    p = SpectralParam(parse_complex(rs["z"]), cfg.mass)
    src = PointSource.unit(rs["source"], [parse_complex(x) for x in rs["spinor"]])
    pts = np.asarray(rs["points"], float).reshape(-1, 3)
    q = build_quadrature(cfg.geometry)
    t0 = time.perf_counter()
    plus, _ = lambda_operators(q, c, p)
    solver = LambdaSolver(plus, float(rs["cond_tol"]))
    u, info = krein_apply(src, q, c, p, pts, solver=solver, return_info=True)
    bc = boundary_condition_defect(src, q, c, p, solver=solver)
    timings["resolvent"] = time.perf_counter() - t0
    report = {
        "z": {"re": p.z.real, "im": p.z.imag},
        "source": src.location.tolist(),
        "spinor": [{"re": x.real, "im": x.imag} for x in src.spinor],
        "points": pts.tolist(),
        "values": [[{"re": v.real, "im": v.imag} for v in row] for row in u],
        "conditioning": info,
        "boundary_condition_defect": bc,
    }
    to_json(report, out / "resolvent.json")
    if bc > float(cfg.section("tolerances")["bc_identity"]):
        raise AcceptanceFailure(f"boundary-condition identity defect {bc:.3e}")
    return report


def cmd_diagnostics(cfg: RunConfig, out: Path, timings: dict) -> dict:
    dg = cfg.section("diagnostics")
    m = cfg.mass
    specs = {"main": cfg.geometry}
    if dg.get("compare"):
        cmp_ = dg["compare"]
        specs["compare"] = replace(cfg.geometry, kind=cmp_["kind"], params=dict(cmp_.get("params", {})),
                                   resolution=int(cmp_.get("resolution", cfg.geometry.resolution)))
    report = {"profiles": {}}
    for name, spec in specs.items():
        for factor in dg["factors"]:
            t0 = time.perf_counter()
            q = build_quadrature(spec.refined(int(factor)) if int(factor) > 1 else spec)
            for op in dg["operators"]:
                prof = compactness_profile(q, op, m=m, n_sv=int(dg["n_sv"]), fraction=float(dg["fraction"]))
                report["profiles"][f"{name}.{spec.kind}.N{q.n}.{op}"] = prof
                _write(out, f"profile_{name}_N{q.n}_{op}.csv", prof.to_csv())
            timings[f"profiles_{name}_x{factor}"] = time.perf_counter() - t0
    q = build_quadrature(cfg.geometry)
    c = cfg.coupling
    if c.is_local:
        report["confinement"] = confinement_check(q, c, seed=cfg.seed)
    report["cauchy_couplings"] = cauchy_coupling_identities(q, float(dg["cauchy_a"]), m, seed=cfg.seed)
    report["eta_inverse"] = eta_exact_inverse_check(q, float(dg["eta"]), SpectralParam(0.0, m), seed=cfg.seed)
    to_json(report, out / "diagnostics.json")
    _write(out, "diagnostics.md", to_markdown(report, "Diagnostics"))
    return report


def cmd_converge(cfg: RunConfig, out: Path, timings: dict) -> dict:
    cv = cfg.section("converge")
    spec = cfg.geometry
    resolutions = [spec.resolution * int(f) for f in cv["factors"]]
    t0 = time.perf_counter()
    study = convergence_study(spec, resolutions, cfg.mass, [float(a) for a in cv["a_values"]],
                              seed=cfg.seed, log=log.info)
    timings["converge"] = time.perf_counter() - t0
    lines = ["resolution,N,h,square_W," + ",".join(
        f"square_C(a={a}),calderon+(a={a})" for a in cv["a_values"])]
    for r in study["rows"]:
        vals = [f"{r['resolution']}", f"{r['N']}", f"{r['h']:.6g}", f"{r['square_W']:.6e}"]
        for a in cv["a_values"]:
            rec = r["a"][float(a)]
            vals += [f"{rec['square_C']:.6e}", f"{rec['calderon+']:.6e}"]
        lines.append(",".join(vals))
    _write(out, "converge.csv", "\n".join(lines) + "\n")
    to_json(study, out / "converge.json")
    _write(out, "converge.md", to_markdown({"orders": study["orders"]}, "Observed orders"))
    min_order = float(cfg.section("tolerances")["min_order"])
    low = {k: v for k, v in study["orders"].items() if k.startswith("square") and not v >= min_order}
    if low:
        raise AcceptanceFailure(f"observed order below {min_order}: {low}")
    return study


COMMANDS = {
    "identities": cmd_identities,
    "spectrum": cmd_spectrum,
    "resolvent": cmd_resolvent,
    "diagnostics": cmd_diagnostics,
    "converge": cmd_converge,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shellspec", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="TOML configuration file")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for dense linear algebra")
    ap.add_argument("--out", default=None, help="output directory (overrides config 'out')")
    ap.add_argument("--resolution", type=int, default=None, help="override geometry.resolution")
    ap.add_argument("--mass", type=float, default=None, help="override mass")
    ap.add_argument("--seed", type=int, default=None, help="override seed")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config key (dotted path, TOML value)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_USAGE
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.out is not None:
        overrides["out"] = args.out
    if args.resolution is not None:
        overrides["geometry.resolution"] = args.resolution
    if args.mass is not None:
        overrides["mass"] = args.mass
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    manifest = {"command": args.command, "config_sha256": cfg.digest(), "config": cfg.data,
                "versions": _versions(), "threads": args.threads, "seed": cfg.seed}
    np.random.seed(cfg.seed)
    t0 = time.perf_counter()
    code, message = EXIT_OK, "ok"
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            COMMANDS[args.command](cfg, out, timings)
    except AcceptanceFailure as exc:
        code, message = EXIT_FAIL, str(exc)
    except (CriticalCouplingError, IllConditionedError) as exc:
        code, message = EXIT_REFUSED, f"refused: {exc}"
    except (ConfigError, MeshError, ValueError) as exc:
        code, message = EXIT_USAGE, f"config error: {exc}"
    timings["total"] = time.perf_counter() - t0
    manifest.update({"exit_code": code, "message": message, "timings": timings})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    if code != EXIT_OK:
        print(message, file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
