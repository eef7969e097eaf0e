"""Command-line front end: declarative TOML configs in, CSV/JSON/SVG out.

Commands: solve, classify, scan, bubble, pohozaev, betti, probe,
concentration, validate.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.  All outputs are deterministic for a fixed config.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib

from .mesh import FOUR_PI, SurfaceKind, build_surface_mesh
from .fields import (ProblemParams, SingularPoint, WeightMode, density,
                     effective_weights)
from .solver import SolveOptions, minimize
from . import bubbles, diagnostics, regions, svgplot


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Schema.

_SCHEMA = {
    "surface": {"kind", "resolution", "grading"},
    "problem": {"rho", "units", "h"},
    "singular": {"position", "alpha"},
    "solve": {"max_iters", "grad_tol", "weight_mode"},
    "scan": {"rho_max", "steps"},
    "bubble": {"x1", "x2", "t", "lambdas", "n_theta"},
    "probe": {"kind", "families", "lambdas", "n_theta", "alpha",
              "rho", "component"},
    "pohozaev": {"truncation"},
    "betti": {"counts"},
    "concentration": {"delta", "tau", "delta_prime", "K"},
}

_H_NAMES = {"sin": math.sin, "cos": math.cos, "exp": math.exp,
            "sqrt": math.sqrt, "pi": math.pi, "abs": abs}


def _schema_errors(cfg: dict) -> list:
    errors = []
    for section, body in cfg.items():
        if section not in _SCHEMA:
            errors.append(f"unknown section '{section}'")
            continue
        entries = body if section == "singular" else [body]
        if not isinstance(entries, list):
            entries = [entries]
        for entry in entries:
            if not isinstance(entry, dict):
                errors.append(f"section '{section}' must be a table")
                continue
            for key in entry:
                if key not in _SCHEMA[section]:
                    errors.append(f"unknown key '{section}.{key}'")
    return errors


def _position_vector(kind: SurfaceKind, coords):
    if len(coords) != 2:
        raise ConfigError("singular.position needs exactly two coordinates")
    if kind is SurfaceKind.ClosedSphere:
        colat, lon = float(coords[0]), float(coords[1])
        return np.array([math.sin(colat) * math.cos(lon),
                         math.sin(colat) * math.sin(lon),
                         math.cos(colat)])
    return np.array([float(coords[0]), float(coords[1])])


def _h_evaluator(expr):
    if expr is None or expr == "" or expr == "1":
        return None
    text = str(expr)

    def evaluate(point):
        p = np.asarray(point, dtype=float)
        names = dict(_H_NAMES)
        names["x"], names["y"] = float(p[0]), float(p[1])
        names["z"] = float(p[2]) if len(p) > 2 else 0.0
        try:
            return float(eval(text, {"__builtins__": {}}, names))
        except Exception as exc:
            raise ConfigError(f"h expression '{text}' failed: {exc}")
    return evaluate


def _semantic_errors(cfg: dict) -> list:
    errors = []
    surface = cfg.get("surface", {})
    kind_name = surface.get("kind")
    if kind_name not in ("sphere", "disk"):
        errors.append("surface.kind must be 'sphere' or 'disk'")
        return errors
    kind = SurfaceKind.ClosedSphere if kind_name == "sphere" \
        else SurfaceKind.UnitDisk
    resolution = surface.get("resolution")
    if not isinstance(resolution, int) or resolution < 1:
        errors.append("surface.resolution must be a positive integer")
        resolution = 3

    problem = cfg.get("problem", {})
    units = problem.get("units", "1")
    if units not in ("1", "4pi"):
        errors.append("problem.units must be '1' or '4pi'")
    rho = problem.get("rho")
    if rho is not None:
        if len(rho) != 2 or min(rho) <= 0:
            errors.append("problem.rho must be a pair of positive reals")
    h = problem.get("h")
    if h is not None and len(h) != 2:
        errors.append("problem.h must list one expression per component")

    positions = []
    for k, entry in enumerate(cfg.get("singular", [])):
        alpha = entry.get("alpha", ())
        if len(alpha) != 2:
            errors.append(f"singular[{k}].alpha must be a pair")
            continue
        for a in alpha:
            if not a > -1.0:
                errors.append(
                    f"singular[{k}] violates the constraint alpha_im > -1")
        try:
            positions.append(_position_vector(kind, entry.get("position", ())))
        except ConfigError as exc:
            errors.append(f"singular[{k}]: {exc}")
    spacing = 2.0 ** (1 - resolution) if kind is SurfaceKind.ClosedSphere \
        else 2.0 / max(resolution, 1)
    for a in range(len(positions)):
        for b in range(a + 1, len(positions)):
            if np.linalg.norm(positions[a] - positions[b]) < spacing:
                errors.append(
                    f"singular points {a} and {b} closer than the mesh "
                    f"can separate at this resolution")
    if kind is SurfaceKind.UnitDisk:
        for k, p in enumerate(positions):
            if np.linalg.norm(p) > 1e-12:
                errors.append(f"singular[{k}] must sit at the disk origin")
        if len(positions) > 1:
            errors.append("the disk supports a single singular point")
    return errors


def validate_config(cfg: dict) -> list:
    errors = _schema_errors(cfg)
    if not errors:
        errors = _semantic_errors(cfg)
    return errors


# ---------------------------------------------------------------------------
# Config to domain objects.

def _load_config(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}")


def _kind(cfg) -> SurfaceKind:
    return SurfaceKind.ClosedSphere if cfg["surface"]["kind"] == "sphere" \
        else SurfaceKind.UnitDisk


def _rho(cfg):
    problem = cfg.get("problem", {})
    if "rho" not in problem:
        raise ConfigError("problem.rho is required for this command")
    scale = FOUR_PI if problem.get("units", "1") == "4pi" else 1.0
    return (float(problem["rho"][0]) * scale,
            float(problem["rho"][1]) * scale)


def _params(cfg) -> ProblemParams:
    kind = _kind(cfg)
    singulars = []
    for k, entry in enumerate(cfg.get("singular", [])):
        singulars.append(SingularPoint(
            k, _position_vector(kind, entry["position"]),
            (float(entry["alpha"][0]), float(entry["alpha"][1]))))
    h = cfg.get("problem", {}).get("h")
    h_pair = (None, None) if h is None else (_h_evaluator(h[0]),
                                             _h_evaluator(h[1]))
    return ProblemParams(_rho(cfg), singulars, h_pair)


def _mesh(cfg, params):
    surface = cfg["surface"]
    return build_surface_mesh(_kind(cfg), surface["resolution"],
                              [s.position for s in params.singulars],
                              grading=float(surface.get("grading", 1.0)))


def _weights(cfg, mesh, params):
    name = cfg.get("solve", {}).get("weight_mode")
    if name is None:
        name = "green" if mesh.kind is SurfaceKind.ClosedSphere else "model"
    if name not in ("green", "model"):
        raise ConfigError("solve.weight_mode must be 'green' or 'model'")
    mode = WeightMode.GreenExact if name == "green" else WeightMode.ModelProduct
    return effective_weights(mesh, params, mode)


# ---------------------------------------------------------------------------
# Serialization helpers.

def _csv_float(v) -> str:
    return f"{float(v):.17g}"


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if hasattr(obj, "value") and obj.__class__.__module__.startswith("sutoda"):
        return obj.value
    return obj


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round_floats(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                _csv_float(v) if isinstance(v, (float, np.floating))
                else str(v) for v in row) + "\n")


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Commands.

def _cmd_solve(cfg, outdir, args):
    params = _params(cfg)
    mesh = _mesh(cfg, params)
    weights = _weights(cfg, mesh, params)
    solve = cfg.get("solve", {})
    opts = SolveOptions(max_iters=int(solve.get("max_iters", 20000)),
                        grad_tol=float(solve.get("grad_tol", 1e-8)))
    result = minimize(mesh, weights, params, opts)
    _write_json(os.path.join(outdir, "solution.json"), {
        "converged": result.converged,
        "iterations": result.iterations,
        "j_value": result.j_value,
        "residual": result.residual,
    })
    _write_csv(os.path.join(outdir, "field.csv"),
               ("vertex_id", "u1", "u2"),
               [(k, result.u.u1[k], result.u.u2[k])
                for k in range(mesh.n_vertices)])
    _write_csv(os.path.join(outdir, "trace.csv"),
               ("iter", "J", "grad_norm", "step"), result.trace)
    return 0 if result.converged else 3


def _cmd_classify(cfg, outdir, args):
    params = _params(cfg)
    alpha_pairs = [s.alpha for s in params.singulars]
    report = regions.classify_configuration(_kind(cfg), params.rho,
                                            alpha_pairs)
    _write_json(os.path.join(outdir, "classification.json"), {
        "rho": report.rho, "rho_bar": report.rho_bar, "M": report.M,
        "on_counting_boundary": report.boundary,
        "existence": report.existence.value,
        "existence_reason": report.existence_reason,
        "critical_distance": report.critical_distance,
        "disk_nonexistence": report.disk_nonexistence,
        "sphere_nonexistence":
            None if report.sphere_nonexistence is None
            else report.sphere_nonexistence.value,
        "sphere_forms": report.sphere_forms,
        "betti": report.betti,
    })
    return 0


def _cmd_scan(cfg, outdir, args):
    params_alpha = [tuple(map(float, e["alpha"]))
                    for e in cfg.get("singular", [])]
    scan_cfg = cfg.get("scan", {})
    rho_max = scan_cfg.get("rho_max", 4.0)
    if not isinstance(rho_max, list):
        rho_max = [rho_max, rho_max]
    scale = FOUR_PI if cfg.get("problem", {}).get("units") == "4pi" else 1.0
    rho_max = (float(rho_max[0]) * scale, float(rho_max[1]) * scale)
    steps = scan_cfg.get("steps", 60)
    if not isinstance(steps, list):
        steps = [steps, steps]
    scan = regions.scan_regions(_kind(cfg), params_alpha, rho_max,
                                (int(steps[0]), int(steps[1])),
                                threads=args.threads)
    rows = []
    for i in range(len(scan.rho1)):
        for j in range(len(scan.rho2)):
            rows.append((scan.rho1[i], scan.rho2[j], scan.labels[i, j],
                         scan.m_counts[i, j, 0], scan.m_counts[i, j, 1],
                         scan.m_counts[i, j, 2],
                         scan.critical_distance[i, j]))
    _write_csv(os.path.join(outdir, "regions.csv"),
               ("rho1", "rho2", "label", "M1", "M2", "M3", "gamma_distance"),
               rows)
    _write_text(os.path.join(outdir, "regions.svg"),
                svgplot.region_svg(scan))
    _write_json(os.path.join(outdir, "scan.json"), {
        "nonexistence_components": scan.nonexistence_components,
        "rho_max": list(rho_max), "steps": list(map(int, steps)),
    })
    return 0


def _cmd_bubble(cfg, outdir, args):
    params = _params(cfg)
    b = cfg.get("bubble", {})
    lambdas = [float(v) for v in b.get("lambdas",
                                       [2.0 ** k for k in range(4, 13)])]
    report = bubbles.asymptotic_report(
        params, int(b.get("x1", 0)), int(b.get("x2", 0)),
        float(b.get("t", 0.0)), lambdas, n_theta=int(b.get("n_theta", 4000)))
    regime = bubbles.classify_regime(params, int(b.get("x1", 0)),
                                     int(b.get("x2", 0))).name
    rows = []
    for quantity, entry in sorted(report["slopes"].items()):
        matched = next(p["value"] for p in entry["predicted"]
                       if p["label"] == entry["matched"])
        rows.append((regime, float(b.get("t", 0.0)), quantity,
                     entry["fitted"], matched, entry["rel_err"]))
    _write_csv(os.path.join(outdir, "bubble_report.csv"),
               ("regime", "t", "quantity", "fitted_slope",
                "predicted_slope", "rel_err"), rows)
    curve_rows = [(lam,) + tuple(report["values"][k][i]
                                 for k in ("q", "avg1", "avg2",
                                           "ent1", "ent2", "j"))
                  for i, lam in enumerate(report["lambdas"])]
    _write_csv(os.path.join(outdir, "bubble_curves.csv"),
               ("lambda", "q", "avg1", "avg2", "ent1", "ent2", "j"),
               curve_rows)
    log2 = [math.log2(lam) for lam in report["lambdas"]]
    _write_text(os.path.join(outdir, "bubble.svg"),
                svgplot.curves_svg(log2, {"J": report["values"]["j"],
                                          "Q": report["values"]["q"]}))
    return 0


def _cmd_pohozaev(cfg, outdir, args):
    params = _params(cfg)
    mesh = _mesh(cfg, params)
    weights = _weights(cfg, mesh, params)
    result = minimize(mesh, weights, params)
    if not result.converged:
        raise RuntimeError("solve did not converge; identity not evaluated")
    if mesh.kind is SurfaceKind.UnitDisk:
        report = diagnostics.pohozaev_disk(mesh, weights, params, result.u)
    else:
        trunc = float(cfg.get("pohozaev", {}).get("truncation", 1e3))
        report = diagnostics.stereographic_pohozaev(mesh, weights, params,
                                                    result.u, trunc)
    _write_json(os.path.join(outdir, "pohozaev.json"), {
        "lhs": report.lhs, "rhs": report.rhs,
        "relative_gap": report.relative_gap,
        "components": report.components,
        "solver_iterations": result.iterations,
    })
    return 0


def _cmd_betti(cfg, outdir, args):
    counts = cfg.get("betti", {}).get("counts")
    if counts is None:
        params = _params(cfg)
        counts, _ = regions.count_M(params.rho,
                                    params.alpha_rows())
    m1, m2, m3 = (int(v) for v in counts)
    (b0, b1), formula_ok = regions.join_betti(m1, m2, m3)
    payload = {"M": [m1, m2, m3], "betti": [b0, b1],
               "formula_check": "PASS" if formula_ok else "FAIL"}
    _write_json(os.path.join(outdir, "betti.json"), payload)
    print(f"(b0_reduced, b1) = ({b0}, {b1}); formula check "
          f"{payload['formula_check']}")
    return 0


def _cmd_probe(cfg, outdir, args):
    params = _params(cfg)
    p = cfg.get("probe", {})
    lambdas = [float(v) for v in p.get("lambdas",
                                       [2.0 ** k for k in range(4, 13)])]
    n_theta = int(p.get("n_theta", 2000))
    names = p.get("families", ["single_1"])
    quad = bubbles.AxialQuadrature(params, n_theta)
    sid = params.singulars[0].id
    kind = p.get("kind", "pair")
    if kind == "pair":
        families = {}
        for name in names:
            if name == "single_1":
                families[name] = diagnostics.single_bubble_family(
                    quad, sid, 0, params.singulars[0].alpha[0])
            elif name == "single_2":
                families[name] = diagnostics.single_bubble_family(
                    quad, sid, 1, params.singulars[0].alpha[1])
            elif name == "equal_scale":
                families[name] = diagnostics.equal_scale_family(
                    quad, sid, params.singulars[0].alpha)
            else:
                raise ConfigError(f"unknown probe family '{name}'")
        report = diagnostics.mt_deficit_probe(params, families, lambdas,
                                              n_theta)
        key = "j"
    else:
        raise ConfigError("probe.kind must be 'pair'")
    _write_json(os.path.join(outdir, "probe.json"), report)
    rows = []
    for name, entry in sorted(report["families"].items()):
        for lam, val in zip(report["lambdas"], entry[key]):
            rows.append((name, lam, val, params.rho[0], params.rho[1]))
    _write_csv(os.path.join(outdir, "deficit.csv"),
               ("family", "lambda", "J", "rho1", "rho2"), rows)
    return 0


def _cmd_concentration(cfg, outdir, args):
    params = _params(cfg)
    mesh = _mesh(cfg, params)
    weights = _weights(cfg, mesh, params)
    result = minimize(mesh, weights, params)
    c = cfg.get("concentration", {})
    if "delta" not in c:
        raise ConfigError("concentration.delta is required")
    ccfg = diagnostics.ConcentrationConfig(
        delta=float(c["delta"]), tau=float(c.get("tau", 0.75)),
        delta_prime=(float(c["delta_prime"]) if "delta_prime" in c
                     else None),
        K=float(c.get("K", 2.0)))
    s1, s2, t_prime, flagged = diagnostics.join_projection(
        mesh, weights, params, result.u, ccfg)

    def masses(state):
        # Candidate ids become strings so they sort next to "outside".
        return {str(k): v for k, v in state.ball_masses.items()}

    _write_json(os.path.join(outdir, "concentration.json"), {
        "component_1": {"beta": s1.beta, "sigma": s1.sigma,
                        "branch": s1.branch, "ball_masses": masses(s1)},
        "component_2": {"beta": s2.beta, "sigma": s2.sigma,
                        "branch": s2.branch, "ball_masses": masses(s2)},
        "t_prime": t_prime,
        "ambiguous": flagged,
        "solver_converged": result.converged,
    })
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "classify": _cmd_classify,
    "scan": _cmd_scan,
    "bubble": _cmd_bubble,
    "pohozaev": _cmd_pohozaev,
    "betti": _cmd_betti,
    "probe": _cmd_probe,
    "concentration": _cmd_concentration,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sutoda",
        description="Singular SU(3) Toda system toolkit")
    parser.add_argument("command",
                        choices=sorted(_COMMANDS) + ["validate"])
    parser.add_argument("config", help="path to a TOML run configuration")
    parser.add_argument("--output-dir", default=".")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    diags = validate_config(cfg)
    if args.command == "validate":
        for d in diags:
            print(d)
        return 0 if not diags else 2
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return 2

    np.random.seed(args.seed)
    os.makedirs(args.output_dir, exist_ok=True)
    try:
        return _COMMANDS[args.command](cfg, args.output_dir, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
