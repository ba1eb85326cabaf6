"""Batch experiment runner.

Usage: ``percospec <subcommand> --config cfg.json [--seed N] [--workers N]
[--out DIR]``.  Subcommands: growth, percolate, ids, free-ids, bounds,
exponents, chain, lamplighter.  Each run writes CSV/JSON artifacts plus a
manifest into the output directory; rerunning with an identical config
reproduces identical CSV and report bytes, independent of the worker count.

Exit codes: 0 success, 1 validation, 2 resource budget, 3 oracle violation,
4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics, bounds as bounds_mod, cayley, percolation, spectra
from .errors import BudgetError, OracleViolationError, ValidationError

ENV_BUDGET = "PERCOSPEC_BUDGET_VERTICES"

_BC_ALL = ("neumann", "adjacency", "dirichlet")


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------

def _check_keys(section, allowed, path):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown keys {unknown} in {path}")


def _require(cfg, key, subcommand):
    if key not in cfg:
        raise ValidationError(f"section {key!r} is required for {subcommand}")
    return cfg[key]


def _as_int(value, path, minimum=None):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValidationError(f"{path} must be an integer")
    if minimum is not None and value < minimum:
        raise ValidationError(f"{path} must be >= {minimum}")
    return value


def _as_float(value, path):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationError(f"{path} must be a number")
    return float(value)


def validate_config(raw: dict, subcommand: str) -> dict:
    """Validate the experiment configuration; unknown keys are rejected."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    _check_keys(raw, ("seed", "workers", "output_dir", "budget_vertices",
                      "group", "percolation", "window", "spectra", "fits"),
                "config")
    cfg = dict(raw)
    if "seed" not in cfg:
        raise ValidationError("seed is mandatory (config key or --seed)")
    _as_int(cfg["seed"], "seed")
    cfg.setdefault("workers", 1)
    _as_int(cfg["workers"], "workers", minimum=1)
    cfg.setdefault("output_dir", "out")
    if "budget_vertices" in cfg:
        _as_int(cfg["budget_vertices"], "budget_vertices", minimum=1)

    if "group" in cfg:
        g = cfg["group"]
        _check_keys(g, ("kind", "rank", "modulus", "generators"), "group")
        kind = g.get("kind")
        if kind not in ("free_abelian", "heisenberg", "lamplighter"):
            raise ValidationError(f"group.kind {kind!r} not recognised")
        if kind == "free_abelian":
            _as_int(g.get("rank", 0), "group.rank", minimum=1)
        if kind == "lamplighter":
            _as_int(g.get("modulus", 0), "group.modulus", minimum=2)
    if "percolation" in cfg:
        pc = cfg["percolation"]
        _check_keys(pc, ("kind", "p", "tail_max", "n_samples"), "percolation")
        if pc.get("kind") not in ("site", "bond"):
            raise ValidationError("percolation.kind must be site or bond")
        p = _as_float(pc.get("p", -1), "percolation.p")
        if not 0.0 <= p <= 1.0:
            raise ValidationError("percolation.p must lie in [0, 1]")
    if "window" in cfg:
        w = cfg["window"]
        _check_keys(w, ("radius", "depth", "depths", "return_max"), "window")
        for key in ("radius", "depth", "return_max"):
            if key in w:
                _as_int(w[key], f"window.{key}", minimum=1)
        if "depths" in w and not all(isinstance(d, int) for d in w["depths"]):
            raise ValidationError("window.depths must be a list of integers")
    if "spectra" in cfg:
        sp = cfg["spectra"]
        _check_keys(sp, ("boundary_conditions", "energy_grid", "n_samples",
                         "dense_cap", "couplings"), "spectra")
        for bc in sp.get("boundary_conditions", []):
            if bc not in _BC_ALL:
                raise ValidationError(f"unknown boundary condition {bc!r}")
        if "energy_grid" in sp:
            eg = sp["energy_grid"]
            _check_keys(eg, ("min", "max", "points", "values", "scale"),
                        "spectra.energy_grid")
            if "values" not in eg:
                for key in ("min", "max", "points"):
                    if key not in eg:
                        raise ValidationError(
                            "energy_grid needs values or min/max/points")
        if "n_samples" in sp:
            _as_int(sp["n_samples"], "spectra.n_samples", minimum=1)
        if "dense_cap" in sp:
            _as_int(sp["dense_cap"], "spectra.dense_cap", minimum=1)
    if "fits" in cfg:
        _check_keys(cfg["fits"], ("growth_n_min", "growth_n_max",
                                  "van_hove_range", "lifshitz_range",
                                  "dirichlet_n_max", "line_max"), "fits")
    return cfg


def build_group(cfg: dict) -> cayley.GroupSpec:
    g = cfg["group"]
    kind = g["kind"]
    if kind == "free_abelian":
        gens = g.get("generators")
        gens = [tuple(v) for v in gens] if gens else None
        return cayley.GroupSpec.free_abelian(g["rank"], generators=gens)
    if kind == "heisenberg":
        return cayley.GroupSpec.heisenberg()
    return cayley.GroupSpec.lamplighter(g["modulus"])


def build_model(cfg: dict) -> percolation.PercolationModel:
    pc = cfg["percolation"]
    return percolation.PercolationModel(pc["kind"], float(pc["p"]), cfg["seed"])


def energy_grid(cfg: dict) -> np.ndarray:
    eg = cfg["spectra"]["energy_grid"]
    if "values" in eg:
        return np.asarray(eg["values"], dtype=np.float64)
    if eg.get("scale") == "log":
        return np.geomspace(eg["min"], eg["max"], eg["points"])
    return np.linspace(eg["min"], eg["max"], eg["points"])


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) if isinstance(x, (int, float, np.integer,
                                                        np.floating))
                              else str(x) for x in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_digest(cfg: dict) -> str:
    relevant = {k: v for k, v in cfg.items()
                if k not in ("workers", "output_dir")}
    blob = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out: Path, subcommand: str, cfg: dict, outputs: list,
                   started: float) -> None:
    write_json(out / "manifest.json", {
        "subcommand": subcommand,
        "config": cfg,
        "config_digest": config_digest(cfg),
        "code_version": __version__,
        "wall_time_s": round(time.time() - started, 3),
        "outputs": sorted(outputs),
    })


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_growth(cfg: dict, out: Path) -> list:
    group = build_group(cfg)
    window = _require(cfg, "window", "growth")
    n_max = window.get("radius")
    if n_max is None:
        raise ValidationError("growth needs window.radius")
    fits = cfg.get("fits", {})
    n_min = fits.get("growth_n_min", 4)
    if n_max - n_min + 1 < 5:
        raise ValidationError(
            f"growth fit needs at least 5 radii: radius {n_max} vs "
            f"fits.growth_n_min {n_min}")
    profile = cayley.growth_profile(group, n_max, cfg.get("budget_vertices"))
    cls = asymptotics.fit_growth(profile, n_min=n_min,
                                 n_max=fits.get("growth_n_max"))
    write_csv(out / "growth.csv", ["n", "volume"],
              zip(profile.radii.tolist(), profile.volumes.tolist()))
    write_json(out / "growth_fit.json", {
        "classification": cls.label,
        "loglog": vars(cls.loglog),
        "semilog": vars(cls.semilog),
        "loglog_curvature": cls.loglog_curvature,
        "semilog_curvature": cls.semilog_curvature,
    })
    return ["growth.csv", "growth_fit.json"]


def run_percolate(cfg: dict, out: Path) -> list:
    group = build_group(cfg)
    model = build_model(cfg)
    radius = _require(cfg, "window", "percolate").get("radius")
    if radius is None:
        raise ValidationError("percolate needs window.radius")
    pc = cfg["percolation"]
    n_samples = pc.get("n_samples", 500)
    tail_max = pc.get("tail_max", 12)
    window = cayley.enumerate_ball(group, radius, cfg.get("budget_vertices"))
    stats = percolation.cluster_stats(model, window, n_samples,
                                      tail_grid=range(1, tail_max + 1),
                                      workers=cfg["workers"])
    with open(out / "tail.csv", "w") as fh:
        percolation.export_cluster_stats(stats, fh)
    write_json(out / "percolate_report.json", {
        "samples": stats.samples,
        "tau_fit": vars(stats.tau_fit),
        "clusters_per_vertex": {"value": stats.clusters_per_vertex[0],
                                "stderr": stats.clusters_per_vertex[1]},
        "deleted_density": {"value": stats.deleted_density[0],
                            "stderr": stats.deleted_density[1]},
        "deleted_density_expected":
            percolation.deleted_density_expected(model, window.k),
    })
    return ["tail.csv", "percolate_report.json"]


def run_ids(cfg: dict, out: Path) -> list:
    group = build_group(cfg)
    model = build_model(cfg)
    window = _require(cfg, "window", "ids")
    if (window.get("radius") is None) == (window.get("depth") is None):
        raise ValidationError("ids needs exactly one of window.radius or window.depth")
    sp = _require(cfg, "spectra", "ids")
    grid = energy_grid(cfg)
    bcs = sp.get("boundary_conditions", list(_BC_ALL))
    outputs = []
    summary = {}
    for bc in bcs:
        est = spectra.empirical_ids(
            group, model, bc, radius=window.get("radius"),
            depth=window.get("depth"), n_samples=sp.get("n_samples", 100),
            energy_grid=grid, workers=cfg["workers"],
            dense_cap=sp.get("dense_cap", spectra.DENSE_CAP),
            budget=cfg.get("budget_vertices"))
        with open(out / f"ids_{bc}.csv", "w") as fh:
            spectra.export_ids_csv(est, fh)
        write_csv(out / f"ids_{bc}_bracket.csv", ["E", "low", "high"],
                  zip(est.energies, est.bracket_low, est.bracket_high))
        summary[bc] = {"n_at_zero": est.n_at_zero[0],
                       "n_at_zero_stderr": est.n_at_zero[1]}
        outputs += [f"ids_{bc}.csv", f"ids_{bc}_bracket.csv"]
    write_json(out / "ids_report.json", summary)
    return outputs + ["ids_report.json"]


def run_free_ids(cfg: dict, out: Path) -> list:
    group = build_group(cfg)
    grid = energy_grid(cfg)
    outputs = []
    if group.kind == "free_abelian":
        if group.rank > 4:
            raise ValidationError("torus evaluation supports rank <= 4")
        rows = []
        for e in grid:
            val = spectra.free_ids_zd(group.rank, float(e))
            rows.append((e, val.value, val.error, val.method))
        write_csv(out / "free_ids.csv", ["E", "value", "error", "method"], rows)
        outputs.append("free_ids.csv")
    radius = cfg.get("window", {}).get("radius")
    if radius is not None:
        trace = spectra.free_ids_ball(group, radius, grid,
                                      budget=cfg.get("budget_vertices"))
        rows = [(n, e, v) for n, vals in trace.trace
                for e, v in zip(grid, vals)]
        write_csv(out / "free_ids_ball.csv", ["n", "E", "value"], rows)
        outputs.append("free_ids_ball.csv")
    if not outputs:
        raise ValidationError("free-ids needs a free_abelian group or window.radius")
    return outputs


def run_bounds(cfg: dict, out: Path) -> list:
    group = build_group(cfg)
    fits = cfg.get("fits", {})
    n_max = fits.get("dirichlet_n_max", 8)
    line_max = fits.get("line_max", 64)
    budget = cfg.get("budget_vertices")
    reports = {}
    if group.kind != "lamplighter":
        growth = cayley.growth_profile(group, max(2 * n_max, 16), budget)
        ball = cayley.enumerate_ball(group, n_max, budget)
        ball_family = [cayley.induced_subgraph(ball, ball.ball_indices(n))
                       for n in range(1, n_max + 1)]
        reports["adjacency_lower_balls"] = vars(
            bounds_mod.lower_bound_check_adjacency(ball_family, growth))
        if group.kind == "free_abelian":
            line_ball = cayley.enumerate_ball(group, line_max // 2 + 2, budget)
            lengths = sorted({n for n in (2, 4, 8, 16, 32, 64)
                              if n <= line_max} | {line_max})
            lines = [cayley.line_subgraph(line_ball, n) for n in lengths]
            reports["adjacency_lower_lines"] = vars(
                bounds_mod.lower_bound_check_adjacency(
                    lines, cayley.growth_profile(group, line_max // 2 + 2, budget)))
            reports["neumann_lower_lines"] = vars(
                bounds_mod.lower_bound_check_neumann(lines))
        reports["dirichlet_upper"] = vars(
            bounds_mod.upper_bound_check_dirichlet(group, range(2, n_max + 1),
                                                   budget))
    else:
        depths = cfg.get("window", {}).get("depths", [2, 3, 4, 5])
        tets = {}
        for depth in depths:
            rep = bounds_mod.tetrahedron_checks(group.modulus, depth,
                                                budget=budget)
            tets[str(depth)] = vars(rep)
        reports["tetrahedron"] = tets
    write_json(out / "bounds_report.json", reports)
    return ["bounds_report.json"]


def run_exponents(cfg: dict, out: Path) -> list:
    group = build_group(cfg)
    fits = cfg.get("fits", {})
    digest = config_digest(cfg)
    reports = []

    window = cfg.get("window", {})
    n_max = window.get("radius", 20)
    profile = cayley.growth_profile(group, n_max, cfg.get("budget_vertices"))
    cls = asymptotics.fit_growth(profile, n_min=fits.get("growth_n_min", 4))
    reports.append({"kind": "growth", "classification": cls.label,
                    "slope": cls.loglog.slope, "stderr": cls.loglog.stderr,
                    "r2": cls.loglog.r2, "range": cls.loglog.fit_range,
                    "inputs_digest": digest})

    if group.kind == "free_abelian" and group.rank <= 4:
        lo, hi = fits.get("van_hove_range", (1e-3, 1e-1))
        grid = np.geomspace(lo, hi, 20)
        vals = np.array([spectra.free_ids_zd(group.rank, float(e)).value
                         for e in grid])
        fit = asymptotics.fit_van_hove(grid, vals, e_range=(lo, hi))
        reports.append({"kind": fit.kind, "slope": fit.slope,
                        "stderr": fit.stderr, "r2": fit.r2,
                        "range": fit.fit_range, "inputs_digest": digest})

    if group.kind == "free_abelian" and group.rank == 1 \
            and cfg.get("percolation", {}).get("kind") == "site":
        p = float(cfg["percolation"]["p"])
        lo, hi = fits.get("lifshitz_range", (0.005, 0.2))
        grid = np.geomspace(lo, hi, 40)
        shift = p * (1 - p)
        values = spectra.line_site_ids_oracle(p, grid, "neumann")
        fit = asymptotics.fit_lifshitz(grid, values, shift, e_range=(lo, hi))
        reports.append({"kind": "lifshitz-neumann", "slope": fit.slope,
                        "stderr": fit.stderr, "r2": fit.r2,
                        "range": fit.fit_range, "inputs_digest": digest})

        line_max = fits.get("line_max", 64)
        ball = cayley.enumerate_ball(group, line_max // 2 + 2,
                                     cfg.get("budget_vertices"))
        ns = list(range(2, line_max + 1))
        family = [cayley.line_subgraph(ball, n) for n in ns]
        thresholds = [2 * (1 - np.cos(np.pi / n)) for n in ns]
        inputs = bounds_mod.sandwich_inputs(family, thresholds, "neumann",
                                            labels=ns)
        alpha_n = bounds_mod.lower_bound_check_neumann(family).constants["alpha_N"]
        # the lower envelope only reaches energies the family certifies
        lo_eff = max(lo, float(np.min(thresholds)))
        sw = asymptotics.sandwich_check(grid, values, shift,
                                        lambda x: np.sqrt(alpha_n / x), inputs,
                                        e_range=(lo_eff, hi))
        reports.append({"kind": "sandwich-neumann", "a": sw.a, "b": sw.b,
                        "upper_violations": sw.upper_violations,
                        "lower_violations": sw.lower_violations,
                        "envelope_ok": sw.envelope_ok,
                        "range": sw.e_range, "inputs_digest": digest})

        na = spectra.line_site_ids_oracle(p, grid, "adjacency")
        fit_a = asymptotics.fit_lifshitz(grid, na, shift=0.0, e_range=(lo, hi))
        reports.append({"kind": "lifshitz-adjacency", "slope": fit_a.slope,
                        "stderr": fit_a.stderr, "r2": fit_a.r2,
                        "range": fit_a.fit_range, "inputs_digest": digest})

    write_json(out / "exponents.json", reports)
    return ["exponents.json"]


def _chain_task(ctx, i):
    s = percolation.sample(ctx["model"], ctx["ball"], i)
    counts = spectra.five_operator_counts(s, ctx["grid"], ctx["couplings"],
                                          ctx["dense_cap"])
    return np.array([counts[name] for name in ctx["names"]])


def run_chain(cfg: dict, out: Path) -> list:
    from ._parallel import run_indexed
    group = build_group(cfg)
    model = build_model(cfg)
    if model.kind != "site":
        raise ValidationError("chain compares site-model operators")
    radius = _require(cfg, "window", "chain").get("radius")
    if radius is None:
        raise ValidationError("chain needs window.radius")
    sp = _require(cfg, "spectra", "chain")
    grid = energy_grid(cfg)
    couplings = [float(c) for c in sp.get("couplings", (1.0, 10.0, 100.0))]
    n_samples = sp.get("n_samples", 100)
    ball = cayley.enumerate_ball(group, radius, cfg.get("budget_vertices"))
    names = (["neumann_extended", "free"]
             + [f"anderson:{lam:g}" for lam in couplings]
             + ["adjacency", "dirichlet"])
    ctx = {"model": model, "ball": ball, "grid": grid, "couplings": couplings,
           "dense_cap": sp.get("dense_cap", spectra.DENSE_CAP), "names": names}
    rows = run_indexed(_chain_task, range(n_samples), cfg["workers"], ctx)
    stack = np.stack(rows)          # (samples, operators, energies)
    means = stack.mean(axis=0)
    diffs = means[:-1] - means[1:]
    worst = float(diffs.min())
    per_sample_ok = bool(np.all(stack[:, :-1, :] >= stack[:, 1:, :] - 1e-12))
    write_csv(out / "chain.csv", ["E"] + names,
              [(e, *means[:, j]) for j, e in enumerate(grid)])
    write_json(out / "chain_report.json", {
        "names": names, "n_samples": n_samples,
        "ordering_violations": 0 if per_sample_ok else 1,
        "min_adjacent_margin": worst,
        "per_sample_ordering_holds": per_sample_ok,
    })
    return ["chain.csv", "chain_report.json"]


def run_lamplighter(cfg: dict, out: Path) -> list:
    group = build_group(cfg)
    if group.kind != "lamplighter":
        raise ValidationError("lamplighter subcommand needs a lamplighter group")
    window = cfg.get("window", {})
    depths = window.get("depths", [2, 3, 4, 5])
    return_max = window.get("return_max", 8)
    budget = cfg.get("budget_vertices")
    tets = {}
    for depth in depths:
        rep = bounds_mod.tetrahedron_checks(group.modulus, depth, budget=budget)
        tets[str(depth)] = vars(rep)
    values = []
    for n in range(1, return_max + 1):
        rp = spectra.return_probability(group, n, budget)
        values.append((n, rp.steps, rp.value))
    write_csv(out / "return_probability.csv", ["n", "steps", "value"], values)
    vals = np.array([v for _, _, v in values])
    neg_log = -np.log(vals)
    write_json(out / "lamplighter_report.json", {
        "tetrahedron": tets,
        "return_probability": {
            "first_value": vals[0],
            "expected_first": 1.0 / (2 * group.modulus),
            "neg_log_increasing": bool(np.all(np.diff(neg_log) > 0)),
            "log_convex": bool(np.all(np.diff(np.log(vals), 2) >= -1e-12)),
        },
    })
    return ["return_probability.csv", "lamplighter_report.json"]


_SUBCOMMANDS = {
    "growth": run_growth,
    "percolate": run_percolate,
    "ids": run_ids,
    "free-ids": run_free_ids,
    "bounds": run_bounds,
    "exponents": run_exponents,
    "chain": run_chain,
    "lamplighter": run_lamplighter,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="percospec",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=sorted(_SUBCOMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    started = time.time()
    try:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ValidationError(f"cannot read config: {err}")
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.workers is not None:
            raw["workers"] = args.workers
        if args.out is not None:
            raw["output_dir"] = args.out
        env_budget = os.environ.get(ENV_BUDGET)
        if env_budget is not None:
            raw["budget_vertices"] = int(env_budget)
        cfg = validate_config(raw, args.subcommand)
        out = Path(cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        outputs = _SUBCOMMANDS[args.subcommand](cfg, out)
        write_manifest(out, args.subcommand, cfg, outputs, started)
    except ValidationError as err:
        print(f"percospec: validation error: {err}", file=sys.stderr)
        return 1
    except BudgetError as err:
        print(f"percospec: resource budget exceeded: {err}", file=sys.stderr)
        return 2
    except OracleViolationError as err:
        print(f"percospec: oracle violation: {err}", file=sys.stderr)
        return 3
    except Exception as err:  # noqa: BLE001
        print(f"percospec: internal error: {type(err).__name__}: {err}",
              file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
