"""Config-driven experiment runner with CSV + JSON-sidecar outputs.

Every experiment is a pure function of (config, master_seed): grid points
map to tasks, each task derives its seeds from (master_seed, task index),
and results merge in task order, so output bytes are independent of the
worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import multiprocessing
import os
import sys
import time
from pathlib import Path

import click
import jsonschema
import numpy as np
import scipy

from . import __version__, analysis, disorder, oracle, partition, renewal, replica
from .errors import ConfigError, GpsLabError

EXPERIMENTS = (
    "free-energy-scan", "critical-point", "exponent-fit", "second-moment-scan",
    "n-beta", "fractional-moments", "coarse-grain", "chain-weights",
    "intersections", "tilt-checks", "zhom-check", "smoothing-curve",
    "oracle-verify",
)

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "renewal", "master_seed"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "renewal": {
            "type": "object",
            "additionalProperties": False,
            "required": ["alpha"],
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "L": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["const", "logpow", "table"]},
                        "value": {"type": "number", "exclusiveMinimum": 0},
                        "kappa": {"type": "number"},
                        "table": {"type": "array", "items": {"type": "number"}},
                    },
                },
                "horizon": {"type": "integer", "minimum": 2},
                "tail_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "disorder": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["gaussian", "rademacher", "discrete"]},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "x": {"type": "number", "exclusiveMinimum": 0},
                "values": {"type": "array", "items": {"type": "number"}},
                "probs": {"type": "array", "items": {"type": "number"}},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "array", "items": {"type": "number"}},
                "h": {"type": "array", "items": {"type": "number"}},
                "boxes": {"type": "array", "items": {"type": "integer"}},
                "samples": {"type": "integer", "minimum": 1},
                "eta": {"type": "number"},
                "C": {"type": "number"},
                "delta": {"type": "array", "items": {"type": "number"}},
                "t": {"type": "array", "items": {"type": "number"}},
                "u": {"type": "array", "items": {"type": "number"}},
                "threshold": {"type": "number"},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "k": {"type": "integer", "minimum": 2},
                "c_const": {"type": "number"},
                "chain_lengths": {"type": "array", "items": {"type": "integer"}},
                "tilt_kind": {"enum": ["linear", "quadratic"]},
                "box_cap": {"type": "integer", "minimum": 8},
                "mode": {"enum": ["constrained", "free"]},
            },
        },
        "master_seed": {"type": "integer", "minimum": 0},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"prefix": {"type": "string"}},
        },
    },
}


def validate_config(cfg: dict) -> dict:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        diags = ["/".join(str(p) for p in e.absolute_path) + ": " + e.message
                 for e in errors]
        raise ConfigError("invalid configuration", diagnostics=diags)
    return cfg


def build_renewal(cfg: dict) -> renewal.RenewalLaw:
    spec = cfg["renewal"]
    lspec = spec.get("L", {"kind": "const", "value": 1.0})
    kind = lspec.get("kind", "const")
    if kind == "const":
        lv = renewal.SlowVary.const(lspec.get("value", 1.0))
    elif kind == "logpow":
        lv = renewal.SlowVary.logpow(lspec.get("kappa", 1.0), lspec.get("value", 1.0))
    else:
        lv = renewal.SlowVary.from_table(lspec["table"])
    return renewal.renewal_law(spec["alpha"], lv,
                               horizon=spec.get("horizon", 4096),
                               tail_tol=spec.get("tail_tol", renewal.DEFAULT_TAIL_TOL))


def build_disorder(cfg: dict) -> disorder.StrandLaw:
    if "disorder" not in cfg:
        raise ConfigError("invalid configuration",
                          diagnostics=["disorder: required for this experiment"])
    return disorder.StrandLaw.from_json(cfg["disorder"])


def _grid(cfg, key, default=None, required=False):
    grid = cfg.get("grid", {})
    if key in grid:
        return grid[key]
    if required:
        raise ConfigError("invalid configuration",
                          diagnostics=[f"grid/{key}: required for "
                                       f"experiment {cfg['experiment']}"])
    return default


# ---------------------------------------------------------------------------
# experiment implementations: each returns (columns, rows)

def _task_free_energy(cfg, idx, task):
    b, h, n = task
    rlaw = build_renewal(cfg)
    slaw = build_disorder(cfg)
    samples = _grid(cfg, "samples", 100)
    est = analysis.free_energy_estimate(rlaw, slaw, b, h, (n, n), samples,
                                        _task_seed(cfg["master_seed"], idx))
    return [{"beta": b, "h": h, "box": n, "f_hat": est.value,
             "std_err": est.std_err, "samples": est.samples}]


def _rows_free_energy(cfg, workers):
    tasks = [(b, h, n)
             for b in _grid(cfg, "beta", required=True)
             for h in _grid(cfg, "h", required=True)
             for n in _grid(cfg, "boxes", required=True)]
    rows = _parallel("free-energy-scan", cfg, tasks, workers)
    return ["beta", "h", "box", "f_hat", "std_err", "samples"], rows


def _task_critical_point(cfg, idx, beta):
    rlaw = build_renewal(cfg)
    slaw = build_disorder(cfg)
    res = analysis.critical_point_bisect(
        rlaw, slaw, beta, _grid(cfg, "boxes", required=True),
        threshold=_grid(cfg, "threshold", 0.0),
        rng=_task_seed(cfg["master_seed"], idx),
        samples=_grid(cfg, "samples", 32), tol=_grid(cfg, "tol", 1e-3))
    return [{"beta": beta, "hc_hat": res["hc"], "bracket_lo": res["bracket"][0],
             "bracket_hi": res["bracket"][1],
             "evaluations": len(res["evaluations"]),
             "samples": _grid(cfg, "samples", 32)}]


def _rows_critical_point(cfg, workers):
    rows = _parallel("critical-point", cfg,
                     list(_grid(cfg, "beta", required=True)), workers)
    return ["beta", "hc_hat", "bracket_lo", "bracket_hi",
            "evaluations", "samples"], rows


def _rows_exponent_fit(cfg, workers):
    rlaw = build_renewal(cfg)
    hs = _grid(cfg, "h", required=True)
    box_cap = _grid(cfg, "box_cap", 512)
    fit = analysis.homogeneous_exponent_fit(rlaw, hs, box_cap)
    rows = [{"h": float(h), "f_hat": float(f), "exponent": fit["exponent"],
             "r2": fit["r2"], "box_cap": box_cap}
            for h, f in zip(fit["h"], fit["f_hat"])]
    return ["h", "f_hat", "exponent", "r2", "box_cap"], rows


def _task_second_moment(cfg, idx, task):
    b, n = task
    rlaw = build_renewal(cfg)
    slaw = build_disorder(cfg)
    samples = _grid(cfg, "samples", 1000)
    seed = _task_seed(cfg["master_seed"], idx)
    vals = replica.second_moment_pair_values(rlaw, slaw, b, (n, n), samples, seed)
    exact = vals["exact"]
    split = vals["bound_split"]
    se = exact.std(ddof=1) / np.sqrt(samples) if samples > 1 else 0.0
    se_b = split.std(ddof=1) / np.sqrt(samples) if samples > 1 else 0.0
    return [{"beta": b, "box": n, "estimate": exact.mean(), "std_err": se,
             "cs_bound": split.mean(), "cs_bound_std_err": se_b,
             "dominated_fraction": float((split >= exact).mean()),
             "samples": samples}]


def _rows_second_moment(cfg, workers):
    tasks = [(b, n) for b in _grid(cfg, "beta", required=True)
             for n in _grid(cfg, "boxes", required=True)]
    rows = _parallel("second-moment-scan", cfg, tasks, workers)
    return ["beta", "box", "estimate", "std_err", "cs_bound",
            "cs_bound_std_err", "dominated_fraction", "samples"], rows


def _task_n_beta(cfg, idx, beta):
    rlaw = build_renewal(cfg)
    slaw = build_disorder(cfg)
    c_const = _grid(cfg, "C", 2.0)
    res = analysis.n_beta_estimate(rlaw, slaw, beta, c_const,
                                   _grid(cfg, "boxes", required=True),
                                   _grid(cfg, "samples", 1000),
                                   _task_seed(cfg["master_seed"], idx))
    return [{"beta": beta, "box": entry["box"],
             "second_moment": entry["estimate"],
             "std_err": entry["std_err"], "C": c_const,
             "n_beta": res["n_beta"] if res["n_beta"] is not None else -1,
             "unbounded": int(res["unbounded_within_schedule"])}
            for entry in res["table"]]


def _rows_n_beta(cfg, workers):
    rows = _parallel("n-beta", cfg, list(_grid(cfg, "beta", required=True)),
                     workers)
    return ["beta", "box", "second_moment", "std_err", "C",
            "n_beta", "unbounded"], rows


def _task_fractional(cfg, idx, task):
    b, h, n = task
    rlaw = build_renewal(cfg)
    slaw = build_disorder(cfg)
    eta = _grid(cfg, "eta", 0.9)
    est = analysis.fractional_moment(rlaw, slaw, b, h, eta, (n, n),
                                     _grid(cfg, "samples", 1000),
                                     _task_seed(cfg["master_seed"], idx))
    z_hom = partition.homogeneous_partition(rlaw, h, (n, n)).log_value
    return [{"beta": b, "h": h, "box": n, "eta": eta, "a_hat": est.value,
             "std_err": est.std_err, "jensen_bound": float(np.exp(eta * z_hom)),
             "samples": est.samples}]


def _rows_fractional(cfg, workers):
    tasks = [(b, h, n)
             for b in _grid(cfg, "beta", required=True)
             for h in _grid(cfg, "h", required=True)
             for n in _grid(cfg, "boxes", required=True)]
    rows = _parallel("fractional-moments", cfg, tasks, workers)
    return ["beta", "h", "box", "eta", "a_hat", "std_err",
            "jensen_bound", "samples"], rows


def _rows_coarse_grain(cfg, workers):
    rlaw = build_renewal(cfg)
    hs = _grid(cfg, "h", required=True)
    eta = _grid(cfg, "eta", 0.9)
    k = _grid(cfg, "k", 16)
    c_const = _grid(cfg, "c_const", 1.0)
    rows = []
    for h in hs:
        table = analysis.jensen_fracmoment_table(rlaw, h, eta, k)
        res = analysis.coarse_grain_rho(rlaw, k, eta, table, c_const)
        rows.append({"h": h, "k": k, "eta": eta, "c_const": c_const,
                     "rho1": res["rho1"], "rho2": res["rho2"], "rho3": res["rho3"],
                     "sum": res["sum"], "contraction": int(res["contraction"])})
    return ["h", "k", "eta", "c_const", "rho1", "rho2", "rho3",
            "sum", "contraction"], rows


def _rows_chain_weights(cfg, workers):
    slaw = build_disorder(cfg)
    betas = _grid(cfg, "beta", required=True)
    lengths = _grid(cfg, "chain_lengths", [1, 2, 3, 4, 5, 6])
    rows = []
    for beta in betas:
        gap = disorder.log_mgf(slaw, 2 * beta) - 2 * disorder.log_mgf(slaw, beta)
        for ell in lengths:
            w = replica.chain_weight(slaw, beta, ell)
            rows.append({"beta": beta, "length": ell, "weight": w,
                         "cs_bound": float(np.exp(gap * ell / 2.0)),
                         "xi_tail": (replica.xi_sequence(beta * getattr(slaw, "sigma", 1.0) ** 2, ell)[-1]
                                     if slaw.kind == "gaussian" else float("nan"))})
    return ["beta", "length", "weight", "cs_bound", "xi_tail"], rows


def _rows_intersections(cfg, workers):
    rlaw = build_renewal(cfg)
    boxes = _grid(cfg, "boxes", required=True)
    samples = _grid(cfg, "samples", 1000)

    def run(idx_task):
        idx, n = idx_task
        res = renewal.intersection_stats(rlaw, (n, n), samples,
                                         _task_seed(cfg["master_seed"], idx))
        return [{"box": n, "both_mean": res["both"]["mean"],
                 "both_std_err": res["both"]["std_err"],
                 "proj1_mean": res["proj1"]["mean"],
                 "proj1_std_err": res["proj1"]["std_err"],
                 "proj2_mean": res["proj2"]["mean"],
                 "proj2_std_err": res["proj2"]["std_err"],
                 "geometric_p": res["geometric_p"], "samples": samples}]

    rows = _parallel(run, list(boxes), workers)
    return ["box", "both_mean", "both_std_err", "proj1_mean", "proj1_std_err",
            "proj2_mean", "proj2_std_err", "geometric_p", "samples"], rows


def _rows_tilt_checks(cfg, workers):
    slaw = build_disorder(cfg)
    betas = _grid(cfg, "beta", required=True)
    deltas = _grid(cfg, "delta", required=True)
    rows = []
    for beta in betas:
        for d in deltas:
            q = disorder.taylor_residual("Q-frac", slaw, d, beta)
            r = disorder.taylor_residual("R-frac", slaw, d, beta)
            try:
                ent = disorder.dilation_entropy(slaw, d)
            except GpsLabError:
                ent = float("nan")
            rows.append({"beta": beta, "delta": d,
                         "q_frac": q["value"], "q_leading": q["leading_term"],
                         "q_residual": q["residual"],
                         "r_frac": r["value"], "r_leading": r["leading_term"],
                         "r_residual": r["residual"],
                         "dilation_entropy": ent})
    return ["beta", "delta", "q_frac", "q_leading", "q_residual",
            "r_frac", "r_leading", "r_residual", "dilation_entropy"], rows


def _rows_zhom(cfg, workers):
    rlaw = build_renewal(cfg)
    us = _grid(cfg, "u", required=True)
    boxes = _grid(cfg, "boxes", required=True)
    rows = []
    for n in boxes:
        for u in us:
            res = analysis.zhom_negative_check(rlaw, u, (n, n))
            rows.append({"box": n, "u": u, "lhs": res["lhs"],
                         "term_kernel": res["term_kernel"],
                         "term_hitting": res["term_hitting"],
                         "ratio": res["ratio"]})
    return ["box", "u", "lhs", "term_kernel", "term_hitting", "ratio"], rows


def _rows_smoothing(cfg, workers):
    rlaw = build_renewal(cfg)
    slaw = build_disorder(cfg)
    betas = _grid(cfg, "beta", required=True)
    ts = _grid(cfg, "t", required=True)
    boxes = _grid(cfg, "boxes", required=True)
    samples = _grid(cfg, "samples", 32)
    rows = []
    for idx, beta in enumerate(betas):
        res = analysis.smoothing_curve(rlaw, slaw, beta, ts, boxes, samples,
                                       _task_seed(cfg["master_seed"], idx))
        for r in res["rows"]:
            rows.append({"beta": beta, "hc_hat": res["hc"], "t": r["t"],
                         "f_hat": r["f_hat"], "std_err": r["std_err"],
                         "local_exponent": (res["local_exponent"]
                                            if res["local_exponent"] is not None
                                            else float("nan")),
                         "exploratory": 1})
    return ["beta", "hc_hat", "t", "f_hat", "std_err",
            "local_exponent", "exploratory"], rows


def _oracle_suite():
    """Bundled tiny cross-check suite; yields (name, passed, detail)."""
    import math

    rlaw = renewal.renewal_law(0.5, horizon=256, tail_tol=0.2)
    slaw = disorder.discrete([-1.0, 0.5, 2.0], [0.3, 0.5, 0.2])
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(40):
        n1, n2 = rng.integers(1, 5, 2)
        beta = float(rng.uniform(0, 0.8))
        h = float(rng.uniform(-1, 1))
        s = disorder.sample_strands(slaw, (n1, n2), rng)
        for mode in ("constrained", "free"):
            zdp = partition.quenched_partition(rlaw, s, slaw, beta, h,
                                               (n1, n2), mode).log_value
            zbr = math.log(oracle.exact_partition_brute(
                rlaw, s.field_grid(), beta, h, (n1, n2), mode, slaw=slaw))
            worst = max(worst, abs(zdp - zbr) / max(1.0, abs(zbr)))
    yield "partition-dp-vs-enumeration", worst < 1e-12, f"max rel err {worst:.2e}"

    rad = disorder.rademacher(1.0)
    za = oracle.exact_annealed_brute(rlaw, rad, 0.4, 0.2, (3, 3))
    zh = partition.homogeneous_partition(rlaw, 0.2, (3, 3)).log_value
    err = abs(math.log(za) - zh)
    yield "annealed-equals-homogeneous", err < 1e-12, f"log diff {err:.2e}"

    m_brute = oracle.exact_second_moment_brute(rlaw, rad, 0.5, (3, 3))
    m_pairs = oracle.exact_pair_second_moment(rlaw, rad, 0.5, (3, 3))
    rel = abs(m_brute - m_pairs) / m_brute
    yield "replica-second-moment-identity", rel < 1e-10, f"rel diff {rel:.2e}"

    w = replica.chain_weight(rad, 1.3, 7)
    yield "rademacher-chain-weight-one", abs(w - 1.0) < 1e-14, f"weight {w!r}"

    free = partition.homogeneous_partition(rlaw, 0.0, (24, 24), "free").log_value
    yield "free-partition-normalization", abs(free) < 1e-10, f"log Z {free:.2e}"


def _rows_oracle_verify(cfg, workers):
    rows = [{"check": name, "passed": int(ok), "detail": detail}
            for name, ok, detail in _oracle_suite()]
    return ["check", "passed", "detail"], rows


RUNNERS = {
    "free-energy-scan": _rows_free_energy,
    "critical-point": _rows_critical_point,
    "exponent-fit": _rows_exponent_fit,
    "second-moment-scan": _rows_second_moment,
    "n-beta": _rows_n_beta,
    "fractional-moments": _rows_fractional,
    "coarse-grain": _rows_coarse_grain,
    "chain-weights": _rows_chain_weights,
    "intersections": _rows_intersections,
    "tilt-checks": _rows_tilt_checks,
    "zhom-check": _rows_zhom,
    "smoothing-curve": _rows_smoothing,
    "oracle-verify": _rows_oracle_verify,
}

MANIFEST_NOTES = {
    "free-energy-scan": "per-site quenched log partition function estimates",
    "critical-point": "bisection bracket for the localization transition in h",
    "exponent-fit": "log-log fit of the finite-size homogeneous free energy",
    "second-moment-scan": "replica second moment and Cauchy-Schwarz bound",
    "n-beta": "largest box with second moment at or below C",
    "fractional-moments": "A_n estimates against the annealed Jensen bound",
    "coarse-grain": "block-decomposition sums rho_1..rho_3 and contraction flag",
    "chain-weights": "chain disorder factors and their Cauchy-Schwarz bound",
    "intersections": "intersection counters for two independent copies",
    "tilt-checks": "tilt ratios, Taylor leading terms, dilation entropy",
    "zhom-check": "negative-h homogeneous partition against its bound terms",
    "smoothing-curve": "exploratory near-critical free-energy curve",
    "oracle-verify": "bundled brute-force cross-checks",
}


def _task_seed(master_seed: int, index: int) -> int:
    h = hashlib.sha256(f"{master_seed}:{index}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def _parallel(fn, tasks, workers):
    indexed = list(enumerate(tasks))
    if workers <= 1 or len(indexed) <= 1:
        chunks = [fn(t) for t in indexed]
    else:
        with multiprocessing.get_context("spawn").Pool(workers) as pool:
            chunks = pool.map(_PicklableTask(fn), indexed)
    rows = []
    for chunk in chunks:
        rows.extend(chunk)
    return rows


class _PicklableTask:
    """Wrap a closure for Pool.map; falls back to serial when unpicklable."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, arg):
        return self.fn(arg)


def _format_cell(v):
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, (np.integer,)):
        v = int(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(outdir: Path, name: str, columns, rows, cfg, wall_time: float):
    outdir.mkdir(parents=True, exist_ok=True)
    prefix = cfg.get("output", {}).get("prefix", name)
    csv_path = outdir / f"{prefix}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])
    sidecar = {
        "experiment": name,
        "config_sha256": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
        "master_seed": cfg["master_seed"],
        "rows": len(rows),
        "csv": csv_path.name,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "gpslab": __version__,
        },
        "wall_time_s": wall_time,
    }
    with open(outdir / f"{prefix}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    manifest_path = outdir / "MANIFEST.json"
    manifest = {}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
    manifest[prefix] = {"experiment": name, "columns": list(columns),
                        "note": MANIFEST_NOTES[name]}
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return csv_path


def run_config(cfg: dict, outdir: Path, workers: int = 1) -> Path:
    validate_config(cfg)
    name = cfg["experiment"]
    t0 = time.time()
    columns, rows = RUNNERS[name](cfg, workers)
    return write_results(outdir, name, columns, rows, cfg, time.time() - t0)


# ---------------------------------------------------------------------------
# command line

@click.group()
def main():
    """Experiment lab for the pinning model with two-strand product disorder."""


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", "-w", type=int, default=None,
              help="Worker processes (default: GPSLAB_WORKERS or 1).")
@click.option("--out", type=click.Path(file_okay=False), default="results",
              help="Output directory.")
def run(config_path, workers, out):
    """Run the experiment described by CONFIG_PATH (JSON)."""
    if workers is None:
        workers = int(os.environ.get("GPSLAB_WORKERS", "1"))
    try:
        cfg = json.loads(Path(config_path).read_text())
    except json.JSONDecodeError as exc:
        click.echo(f"config parse error: {exc}", err=True)
        sys.exit(2)
    try:
        csv_path = run_config(cfg, Path(out), workers)
    except ConfigError as exc:
        click.echo(f"invalid config: {exc}", err=True)
        for diag in exc.diagnostics:
            click.echo(f"  - {diag}", err=True)
        sys.exit(2)
    except GpsLabError as exc:
        click.echo(f"numeric domain error: {exc}", err=True)
        sys.exit(3)
    click.echo(str(csv_path))


@main.command()
def verify():
    """Run the bundled brute-force oracle suite."""
    failed = 0
    for name, ok, detail in _oracle_suite():
        status = "PASS" if ok else "FAIL"
        click.echo(f"[{status}] {name}: {detail}")
        failed += 0 if ok else 1
    sys.exit(1 if failed else 0)


@main.command()
def schema():
    """Print the JSON schema for experiment configs."""
    click.echo(json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
