"""Batch experiment runner: ``linobs run | mesh-info | schema``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import calculus as calc
from ._spectral import GapAmbiguityError
from .continuation import TheoremViolation, extend, solve_linearized, verify_obstruction_theorem
from .mesh import CellComplex, MeshError, build_circle, build_icosphere, build_torus
from .models import ModelError, build_model, harmonic_triple_integral, model_semilinear_sphere
from .noether import CompositionError, assemble, rigid_cosymmetries, verify_noether_correspondence
from .obstruction import is_conservative, obstruction_charges, random_on_shell
from .topology import compute_homology

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_MODEL = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    "composition": 1e-12,
    "charge": 1e-8,
    "on_shell": 1e-8,
    "soundness": 1e-6,
    "noether": 1e-10,
}
SAMPLED = {"noether-verify", "cosymmetries", "conservative", "verify-theorem"}
PLOT_KINDS = ("charge-vs-amplitude", "residual-history", "mesh-convergence")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def load_schema(name: str) -> dict:
    return json.loads(resources.files("linobs").joinpath("schemas", f"{name}.schema.json").read_text())


def load_config(path: str | Path, seed: int | None = None) -> dict:
    """Parse and validate a config file; ``seed`` overrides the file's seed.

    Raises:
        ConfigError: on unreadable JSON, schema violations or missing seeds.
    """
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, load_schema("config"))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    if seed is not None:
        cfg["seed"] = seed
    sampled = SAMPLED & set(cfg["analyses"]) or any(f["kind"] == "random" for f in cfg.get("fields", []))
    if sampled and "seed" not in cfg:
        raise ConfigError("a seed is required for sampled analyses")
    cfg["tolerances"] = {**DEFAULT_TOLERANCES, **cfg.get("tolerances", {})}
    return cfg


def build_mesh(mesh_cfg: dict) -> CellComplex:
    kind = mesh_cfg["kind"]
    side = mesh_cfg.get("side_length", 2 * np.pi)
    if kind == "circle":
        return build_circle(mesh_cfg.get("m", 64), side)
    if kind == "torus":
        if "dimension" not in mesh_cfg or "m" not in mesh_cfg:
            raise ConfigError("torus meshes need dimension and m")
        return build_torus(mesh_cfg["dimension"], mesh_cfg["m"], side)
    if "subdivisions" not in mesh_cfg:
        raise ConfigError("icosphere meshes need subdivisions")
    return build_icosphere(mesh_cfg["subdivisions"])


def mesh_summary(K: CellComplex) -> dict:
    return {
        "name": K.name,
        "dimension": K.dimension,
        "kind": K.kind,
        "signature": K.signature,
        "cell_counts": [int(c) for c in K.cell_counts],
        "euler_characteristic": int(K.euler_characteristic()),
        "total_volume": float(K.total_volume()),
        "well_centered": bool(np.all(K.well_centered)),
        "params": {k: v for k, v in K.params.items()},
    }


def _model(cfg: dict, K: CellComplex):
    alg = calc.get_algebra(cfg["algebra"]) if cfg.get("algebra") else None
    return build_model(cfg["model"]["name"], K, alg, l=cfg["model"].get("l", 1))


def _fields(model, specs: list, rng) -> list:
    """``(label, cochain, amplitude)`` triples from field specs."""
    out = []
    K = model.complex
    for i, s in enumerate(specs):
        kind, scale = s["kind"], s.get("scale", 1.0)
        label = s.get("label")
        if kind == "constant":
            if model.g != 1 or model.field_slot.degree != 0:
                raise ConfigError("constant fields need a scalar 0-form model")
            v = s.get("value", 1.0)
            out.append((label or f"constant={v:g}", model.field(v * np.ones(K.n_cells(0))), v))
        elif kind == "basis":
            basis = solve_linearized(model)
            j = s.get("index", 0)
            if j >= len(basis):
                raise ConfigError(f"basis index {j} out of range ({len(basis)} modes)")
            out.append((label or f"basis{j}", basis[j] * scale, scale))
        elif kind == "random":
            for c in range(s.get("count", 1)):
                psi = random_on_shell(model, rng)
                out.append((f"{label or 'random'}{c}", psi * (scale / calc.norm(psi)), scale))
        elif kind == "harmonic":
            if "harmonics" not in model.params:
                raise ConfigError("harmonic fields need the sphere model")
            l, m = model.params["l"], s.get("m", 0)
            if abs(m) > l:
                raise ConfigError(f"|m| must be <= l = {l}")
            H = model.params["harmonics"]
            out.append((label or f"Y{l},{m}", model.field(scale * H[:, m + l]), scale))
        else:
            acc = model.zero_field()
            for t in s.get("terms", []):
                if len(t["axes"]) != model.field_slot.degree or len(t["coeff"]) != model.g:
                    raise ConfigError("constant-form term does not match the field slot")
                acc = acc + model.field(calc.constant_form(K, len(t["axes"]), tuple(t["axes"]), t["coeff"],
                                                           algebra=model.algebra).values)
            out.append((label or f"form{i}", acc * scale, scale))
    return out


def _plain(x):
    """JSON-safe copy with numpy scalars and arrays converted."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def _sphere_convergence(cfg: dict, study: dict) -> dict:
    l = cfg["model"].get("l", 1)
    m = study.get("m", 0)
    ref = harmonic_triple_integral((l, m), (l, m), (l, m))
    rows = []
    for s in study["subdivisions"]:
        K = build_icosphere(s)
        model = model_semilinear_sphere(K, l)
        psi = model.field(model.params["harmonics"][:, m + l])
        gen = [g for g in model.generators if g.label == f"Y{l},{m}"][0]
        hd = compute_homology(K)
        rep = obstruction_charges(model, psi, hd, homogeneity=False, generators=[gen])
        h = float(K.primal_volumes[1].max())
        q = rep.entries[0].periods[0]
        rows.append({"subdivisions": s, "h": h, "charge": q, "abs_error": abs(q - ref)})
    hs = np.log([r["h"] for r in rows])
    es = np.log([max(r["abs_error"], 1e-300) for r in rows])
    slope = float(np.polyfit(hs, es, 1)[0])
    return {"reference": ref, "generator": f"Y{l},{m}", "rows": rows, "slope": slope}


def run_config(cfg: dict) -> tuple[dict, dict]:
    """Execute a validated config.

    Returns:
        ``(report, files)`` where ``files`` maps relative output paths to text.
    """
    tol = cfg["tolerances"]
    seed = cfg.get("seed")
    s0 = seed or 0
    rng = np.random.default_rng(s0)
    K = build_mesh(cfg["mesh"])
    model = _model(cfg, K)
    report = {
        "name": cfg["name"],
        "version": __version__,
        "seed": seed,
        "config": {k: v for k, v in cfg.items() if k != "output"},
        "mesh": mesh_summary(K),
        "model": {
            "name": model.name,
            "stage": model.stage,
            "m": model.m,
            "field_slot": model.field_slot.describe(),
            "eq_slot": model.eq_slot.describe(),
            "generators": [g.label for g in model.generators],
            "params": {k: v for k, v in model.params.items() if k != "harmonics"},
        },
        "analyses": {},
        "assertions": [],
        "status": "ok",
    }
    files = {f"meshes/{K.name}.json": json.dumps(K.to_json() if cfg["mesh"].get("export") else mesh_summary(K),
                                                 sort_keys=True)}
    hd_box = {}

    def hd():
        if "hd" not in hd_box:
            hd_box["hd"] = compute_homology(K, s0)
        return hd_box["hd"]

    field_specs = cfg.get("fields") or [{"kind": "basis", "index": 0}]
    fields = _fields(model, field_specs, rng)
    A = report["analyses"]
    for name in cfg["analyses"]:
        if name == "betti":
            h = hd()
            A[name] = {
                "betti": list(h.betti),
                "gap_ratios": {str(p): r for p, r in h.gap_ratios.items()},
                "harmonic_residuals": {str(p): r for p, r in h.harmonic_residuals.items()},
                "period_condition": {str(p): h.condition(p) for p in range(K.dimension + 1)},
            }
            files["betti_periods.csv"] = h.to_csv()
        elif name == "noether-verify":
            try:
                direct, adjoint = assemble(model, tol["composition"])
                comp = {"direct": direct.residuals, "adjoint": adjoint.residuals}
                report["assertions"].append({"name": "noether-compositions", "passed": True,
                                             "detail": f"all compositions <= {tol['composition']:g}"})
            except CompositionError as exc:
                comp = {}
                report["assertions"].append({"name": "noether-compositions", "passed": False, "detail": str(exc)})
            A[name] = {"compositions": comp,
                       "correspondence": verify_noether_correspondence(model, hd(), s0, tol=tol["noether"]),
                       "model_check": model.check(s0)}
        elif name == "cosymmetries":
            stages = sorted({g.stage for g in model.generators})
            out = []
            for s in stages:
                cb = rigid_cosymmetries(model, s, s0)
                out.append({"stage": s, "dim": cb.dim, "labels": cb.labels, "triviality": cb.triviality,
                            "generators": [g.label for g in cb.generators],
                            "generator_residuals": cb.generator_residuals, "gap_ratio": cb.gap_ratio})
            A[name] = {"stages": out}
        elif name == "charges":
            opts = cfg.get("charges", {})
            recs = []
            for label, psi, amp in fields:
                rep = obstruction_charges(model, psi, hd(), tol["charge"], tol["on_shell"],
                                          homogeneity=opts.get("homogeneity", True))
                recs.append({"field": label, "amplitude": amp, **rep.to_json()})
            A[name] = {"fields": recs}
            if "convergence" in opts:
                if cfg["mesh"]["kind"] != "icosphere":
                    raise ConfigError("charge convergence studies run on icospheres")
                A[name]["convergence"] = _sphere_convergence(cfg, opts["convergence"])
            files["periods.csv"] = _periods_csv(recs)
        elif name == "conservative":
            opts = cfg.get("conservative", {})
            sampler = _abelian_sampler(model) if opts.get("restrict") == "abelian" else None
            A[name] = {"generators": [
                is_conservative(model, g, opts.get("samples", 10), hd(), tol["charge"], s0, sampler)
                for g in model.generators]}
        elif name == "extend":
            opts = cfg.get("extend", {})
            recs = []
            for label, psi, amp in fields:
                res = extend(model, psi, opts.get("t_max", 1.0), opts.get("steps", 6), hd(), s0,
                             opts.get("max_iter", 40), tol["charge"])
                recs.append({"field": label, "amplitude": amp, **res.to_json()})
            A[name] = {"fields": recs}
            files["residuals.csv"] = _residuals_csv(recs)
        elif name == "verify-theorem":
            opts = cfg.get("verify", {})
            try:
                A[name] = verify_obstruction_theorem(
                    model, opts.get("n_samples", 10), hd(), s0, opts.get("t_max", 1.0), opts.get("steps", 4),
                    opts.get("amplitude", 0.1), opts.get("max_basis", 9), tol["soundness"])
                report["assertions"].append({"name": "obstruction-implication", "passed": True,
                                             "detail": "extended samples carry no charge"})
            except TheoremViolation as exc:
                A[name] = {"implication_holds": False, "samples": [exc.witness]}
                report["witness"] = exc.witness
                report["assertions"].append({"name": "obstruction-implication", "passed": False,
                                             "detail": str(exc)})
    if not all(a["passed"] for a in report["assertions"]):
        report["status"] = "assertion-failed"
    report = _plain(report)
    for kind in PLOT_KINDS:
        try:
            files[f"plots/{kind}.csv"] = emit_plot_data(report, kind)
        except ValueError:
            pass
    files.setdefault("periods.csv", _periods_csv([]))
    files.setdefault("residuals.csv", _residuals_csv([]))
    return report, files


def _abelian_sampler(model):
    basis = [b for b in solve_linearized(model) if not np.any(b.values[:, 1:])]
    if not basis:
        raise ConfigError("abelian restriction needs a Lie-valued model")

    def sample(rng):
        return model.field(sum(c * b.values for c, b in zip(rng.standard_normal(len(basis)), basis)))

    return sample


def _periods_csv(recs: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    gens = [e["label"] for e in recs[0]["entries"]] if recs else []
    w.writerow(["field", "cycle"] + gens)
    for r in recs:
        if not r["entries"]:
            continue
        for i, cyc in enumerate(r["entries"][0]["cycles"]):
            w.writerow([r["field"], cyc] + [repr(float(e["periods"][i])) for e in r["entries"]])
    return buf.getvalue()


def _residuals_csv(recs: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "t", "iteration", "residual"])
    for r in recs:
        for t, h in zip(r["t_grid"], r["histories"]):
            for i, x in enumerate(h):
                w.writerow([r["field"], repr(float(t)), i, repr(float(x))])
    return buf.getvalue()


def emit_plot_data(report: dict, kind: str) -> str:
    """Plot-ready CSV extracted from a report.

    Args:
        report: a run report (as written to ``report.json``).
        kind: ``charge-vs-amplitude``, ``residual-history`` or ``mesh-convergence``.

    Raises:
        ValueError: if the report lacks the requested series.
    """
    A = report.get("analyses", {})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if kind == "charge-vs-amplitude":
        recs = [r for r in A.get("charges", {}).get("fields", []) if r.get("amplitude") is not None and r["entries"]]
        if len(recs) < 2:
            raise ValueError("report has no charge series over amplitudes")
        w.writerow(["amplitude [field units]", f"charge [{recs[0]['entries'][0]['label']} period]"])
        for r in sorted(recs, key=lambda r: r["amplitude"]):
            w.writerow([repr(float(r["amplitude"])), repr(float(r["entries"][0]["periods"][0]))])
    elif kind == "residual-history":
        recs = A.get("extend", {}).get("fields", [])
        if not recs:
            raise ValueError("report has no extension runs")
        w.writerow(["field", "t [continuation parameter]", "iteration", "residual [weighted norm]"])
        for r in recs:
            for t, h in zip(r["t_grid"], r["histories"]):
                for i, x in enumerate(h):
                    w.writerow([r["field"], repr(float(t)), i, repr(float(x))])
    elif kind == "mesh-convergence":
        conv = A.get("charges", {}).get("convergence")
        if not conv:
            raise ValueError("report has no mesh-convergence series")
        w.writerow(["h [max edge length]", "charge [period]", "abs_error [period]"])
        for r in conv["rows"]:
            w.writerow([repr(float(r["h"])), repr(float(r["charge"])), repr(float(r["abs_error"]))])
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    return buf.getvalue()


def write_outputs(out: Path, report: dict, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    jsonschema.validate(report, load_schema("report"))
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    for rel, text in files.items():
        p = out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report, files = run_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeshError, ModelError, GapAmbiguityError) as exc:
        print(f"mesh/model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    out = Path(args.out or cfg.get("output") or Path("runs") / cfg["name"])
    write_outputs(out, report, files)
    failed = [a for a in report["assertions"] if not a["passed"]]
    for a in failed:
        print(f"assertion failed: {a['name']}: {a['detail']}", file=sys.stderr)
    if failed and "witness" in report:
        print(json.dumps(report["witness"], sort_keys=True)[:4000], file=sys.stderr)
    print(f"{cfg['name']}: {report['status']} -> {out}")
    return EXIT_ASSERT if failed else EXIT_OK


def cmd_mesh_info(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        K = build_mesh(cfg["mesh"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as exc:
        print(f"mesh/model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    print(json.dumps(_plain(mesh_summary(K)), sort_keys=True, indent=2))
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(load_schema("config" if args.config else "report"), indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="linobs", description="Linearization obstruction experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.set_defaults(func=cmd_run)
    m = sub.add_parser("mesh-info", help="summarize the mesh of a config")
    m.add_argument("config")
    m.set_defaults(func=cmd_mesh_info)
    s = sub.add_parser("schema", help="print the report schema")
    s.add_argument("--config", action="store_true", help="print the config schema instead")
    s.set_defaults(func=cmd_schema)
    args = p.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
