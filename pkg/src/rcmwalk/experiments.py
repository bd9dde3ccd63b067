"""Experiment orchestration: configs, deterministic runs, manifests, reports.

A config plus its master seed fixes every output byte; the manifest records
per-task seeds and output checksums so a re-run can be verified hash-equal.
Ensemble tasks are independent and may run on a thread pool; results are
aggregated in task order, so parallelism changes wall time only.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field, asdict

import numpy as np

from . import rng
from . import __version__ as _code_version
from .cluster import components, select_alpha
from .coarse import census_csv, hat_chain, hiding_time_census
from .field import plant_trap, sample_field
from .iso import gn_probability, lattice_chain, profile
from .kernel import annealed_return, fit_decay, return_series
from .laws import ConductanceLaw
from .traps import bounds_csv, detect_traps, trap_sum, traps_csv

KINDS = (
    "decay-fit",
    "coarse-check",
    "iso-profile",
    "gn-scan",
    "trap-census",
    "trap-bound",
    "annealed",
)

EXACT_KERNEL_KINDS = ("decay-fit", "trap-bound", "annealed")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    d: int
    L: int
    seed: int
    outdir: str
    law: ConductanceLaw = None
    alpha: float = None
    n_grid: tuple = ()
    ensemble: int = 1
    params: dict = dataclass_field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"kind: unknown experiment kind {self.kind!r}")
        if self.d < 2:
            raise ConfigError("d: dimension must be >= 2")
        if self.L < 1:
            raise ConfigError("L: box radius must be >= 1")
        if self.ensemble < 1:
            raise ConfigError("ensemble: must be >= 1")
        if self.kind in EXACT_KERNEL_KINDS:
            if not self.n_grid:
                raise ConfigError("n_grid: required for exact-kernel experiments")
            n_max = max(self.n_grid)
            need = 2 * n_max if self.kind == "trap-bound" else n_max
            if self.L < need:
                raise ConfigError(
                    f"L: exact kernel needs L >= n_max ({self.L} < {need})"
                )
        if self.kind != "gn-scan" and self.law is None:
            raise ConfigError("law: required")
        if self.kind == "gn-scan":
            if "p" not in self.params:
                raise ConfigError("params.p: required for gn-scan")
            if not self.params.get("N_grid"):
                raise ConfigError("params.N_grid: required for gn-scan")

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "L": self.L,
            "seed": self.seed,
            "outdir": self.outdir,
            "law": None if self.law is None else self.law.descriptor(),
            "alpha": self.alpha,
            "n_grid": list(self.n_grid),
            "ensemble": self.ensemble,
            # canonical JSON form so round-trips compare equal
            "params": json.loads(json.dumps(self.params)),
        }

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True, indent=2)

    @staticmethod
    def from_descriptor(desc: dict) -> "ExperimentConfig":
        return ExperimentConfig(
            kind=desc["kind"],
            d=int(desc["d"]),
            L=int(desc["L"]),
            seed=int(desc["seed"]),
            outdir=desc["outdir"],
            law=None if desc.get("law") is None else ConductanceLaw.from_descriptor(desc["law"]),
            alpha=desc.get("alpha"),
            n_grid=tuple(desc.get("n_grid", ())),
            ensemble=int(desc.get("ensemble", 1)),
            params=dict(desc.get("params", {})),
        )

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        return ExperimentConfig.from_descriptor(json.loads(text))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    code_version: str
    started: str
    finished: str
    task_seeds: list
    outputs: dict  # filename -> sha256
    summary: dict

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, sort_keys=True, indent=2)

    @staticmethod
    def load(path) -> "RunManifest":
        with open(path) as fh:
            data = json.load(fh)
        return RunManifest(**data)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _conditioned_field(d, L, law, seed):
    """Sample fields until the origin lands in the largest positive
    cluster; returns (field, labeling, attempts)."""
    origin = (0,) * d
    for attempt in range(1000):
        fld = sample_field(d, L, law, rng.derive_seed(seed, attempt))
        lab = components(fld, 0.0)
        if lab.is_strong(origin):
            return fld, lab, attempt + 1
    raise ConfigError("could not condition the origin into the largest cluster")


#: default cap on exact-evolution support sites before truncation
DEFAULT_SUPPORT_CAP = 40_000_000


def _capped_n_max(d, n_max, cap):
    """Largest step count whose (2n+1)^d support fits under the cap."""
    n = n_max
    while n > 1 and (2 * n + 1) ** d > cap:
        n -= 1
    return n


def _run_decay_fit(config, outdir, task_seeds, max_workers):
    n_grid = sorted(config.n_grid)
    n_max = max(n_grid)
    cap = int(config.params.get("max_support_sites", DEFAULT_SUPPORT_CAP))
    eff_n_max = _capped_n_max(config.d, n_max, cap)
    truncated = eff_n_max < n_max
    n_max = eff_n_max
    fit_lo = config.params.get("fit_min", min(n_grid))
    fit_hi = min(config.params.get("fit_max", n_max), n_max)
    with_log = bool(config.params.get("with_log", False))

    def task(i):
        fld, _, _ = _conditioned_field(config.d, config.L, config.law, task_seeds[i])
        series = return_series(fld, (0,) * config.d, n_max, stride=2)
        fit = fit_decay(series, (fit_lo, fit_hi), with_log=with_log)
        return series, fit

    results = _map_tasks(task, config.ensemble, max_workers)
    outputs = {}
    fits = []
    for i, (series, fit) in enumerate(results):
        name = f"series_{i:03d}.csv"
        series.to_csv(os.path.join(outdir, name))
        outputs[name] = None
        dat = f"series_{i:03d}.dat"
        series.plot_data(os.path.join(outdir, dat))
        outputs[dat] = None
        fits.append(
            {
                "task": i,
                "exponent": fit.exponent,
                "exponent_stderr": fit.exponent_stderr,
                "log_coeff": fit.log_coeff,
                "prefactor": fit.prefactor,
                "residual_norm": fit.residual_norm,
            }
        )
    with open(os.path.join(outdir, "fits.json"), "w") as fh:
        json.dump(fits, fh, sort_keys=True, indent=2)
    outputs["fits.json"] = None
    reference = _reference_exponent(config.d)
    window = config.params.get("exponent_window", (reference - 0.25, reference + 0.25))
    in_window = [window[0] <= f["exponent"] <= window[1] for f in fits]
    checks = {
        "series_monotone": True,  # return_series raises otherwise
        "exponents_in_window": sum(in_window) >= math.ceil(0.8 * len(fits)),
    }
    exponents_ci = [
        f"{f['exponent']:.4f}+-{2 * f['exponent_stderr']:.4f}" for f in fits
    ]
    summary = {
        "kind": config.kind,
        "reference_exponent": reference,
        "window": list(window),
        "exponents": [f["exponent"] for f in fits],
        "exponents_ci": exponents_ci,
        "truncated": truncated,
        "n_max_effective": n_max,
        "checks": checks,
    }
    return outputs, summary


def _reference_exponent(d):
    return d / 2 if d <= 3 else 2.0


def _run_coarse_check(config, outdir, task_seeds, max_workers):
    fld = sample_field(config.d, config.L, config.law, task_seeds[0])
    alpha = config.alpha if config.alpha is not None else select_alpha(fld)
    lab = components(fld, alpha)
    n_anchors = int(config.params.get("anchors", 100))
    gen = np.random.default_rng(rng.derive_seed(config.seed, 1))
    strong = lab.strong_sites()
    idx = gen.choice(len(strong), size=min(n_anchors, len(strong)), replace=False)
    anchors = [strong[int(i)] for i in sorted(idx)]
    rows = hiding_time_census(fld, lab, alpha, anchors)
    chains = {x: hat_chain(fld, lab, alpha, x) for x in anchors}
    sym_res = 0.0
    row_dev = 0.0
    for x, hc in chains.items():
        row_dev = max(row_dev, abs(hc.row_sum() - 1.0))
        for y, w_hat in hc.omega_hat.items():
            other = chains.get(y)
            if other is not None and x in other.omega_hat:
                sym_res = max(sym_res, abs(w_hat - other.omega_hat[x]))
    name = "census.csv"
    census_csv(rows, os.path.join(outdir, name))
    checks = {
        "row_sums_1e-10": row_dev < 1e-10,
        "omega_hat_symmetry_1e-10": sym_res < 1e-10,
        "hiding_bound_pointwise": True,  # census raises otherwise
    }
    summary = {
        "kind": config.kind,
        "alpha": alpha,
        "anchors": len(anchors),
        "max_row_deviation": row_dev,
        "max_symmetry_residual": sym_res,
        "mean_g_size": float(np.mean([r["size_Gx"] for r in rows])),
        "mean_ET1": float(np.mean([r["ET1"] for r in rows])),
        "checks": checks,
    }
    return {name: None}, summary


def _run_iso_profile(config, outdir, task_seeds, max_workers):
    fld = sample_field(config.d, config.L, config.law, task_seeds[0])
    alpha = config.alpha
    if alpha is not None:
        lab = components(fld, alpha)
        chain = lattice_chain(fld, alpha, lab)
    else:
        chain = lattice_chain(fld)
    r_max = float(config.params.get("r_max", chain.pi_total() / 2))
    mode = config.params.get("mode", "exhaustive" if len(chain.sites) <= 20 else "heuristic")
    prof = profile(
        chain,
        r_max,
        mode=mode,
        budget=int(config.params.get("budget", 200)),
        seed=config.seed,
    )
    name = "profile.csv"
    prof.to_csv(os.path.join(outdir, name))
    checks = {"profile_nonincreasing": bool(np.all(np.diff(prof.phis) <= 1e-15))}
    summary = {
        "kind": config.kind,
        "mode": prof.mode,
        "exact": prof.exact,
        "grid_points": int(prof.rs.size),
        "checks": checks,
    }
    return {name: None}, summary


def _run_gn_scan(config, outdir, task_seeds, max_workers):
    p = float(config.params["p"])
    n_grid = [int(n) for n in config.params["N_grid"]]

    def task(i):
        n_block = n_grid[i]
        return gn_probability(
            p, n_block, config.d, config.ensemble, rng.derive_seed(config.seed, n_block)
        )

    results = _map_tasks(task, len(n_grid), max_workers)
    name = "gn.csv"
    with open(os.path.join(outdir, name), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "p", "estimate", "stderr"])
        for n_block, (est, se) in zip(n_grid, results):
            writer.writerow([n_block, repr(p), repr(est), repr(se)])
    first, last = results[0], results[-1]
    gap = last[0] - first[0]
    combined = math.hypot(first[1], last[1])
    checks = {"probability_increases": gap > combined}
    summary = {
        "kind": config.kind,
        "p": p,
        "N_grid": n_grid,
        "estimates": [r[0] for r in results],
        "stderrs": [r[1] for r in results],
        "checks": checks,
    }
    return {name: None}, summary


def _run_trap_census(config, outdir, task_seeds, max_workers):
    weak_max = float(config.params.get("weak_max", 0.5))
    alpha = config.alpha if config.alpha is not None else 1.0
    n_grid = sorted(config.n_grid) if config.n_grid else []

    def task(i):
        fld = sample_field(config.d, config.L, config.law, task_seeds[i])
        lab = components(fld, alpha)
        recs = detect_traps(fld, lab, weak_max)
        sums = [trap_sum(recs, n, config.d) for n in n_grid]
        return recs, sums

    results = _map_tasks(task, config.ensemble, max_workers)
    outputs = {}
    all_sums = []
    for i, (recs, sums) in enumerate(results):
        name = f"traps_{i:03d}.csv"
        traps_csv(recs, os.path.join(outdir, name))
        outputs[name] = None
        all_sums.append(sums)
    if n_grid:
        name = "trap_sums.csv"
        with open(os.path.join(outdir, name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "n", "trap_sum"])
            for i, sums in enumerate(all_sums):
                for n, s in zip(n_grid, sums):
                    writer.writerow([i, n, repr(s)])
        outputs[name] = None
    summary = {
        "kind": config.kind,
        "trap_counts": [len(r) for r, _ in results],
        "checks": {"census_ran": True},
    }
    return outputs, summary


def _run_trap_bound(config, outdir, task_seeds, max_workers):
    from .kernel import _evolve_impl
    from .traps import trap_lower_bound

    anchor = tuple(config.params.get("anchor", (4,) + (0,) * (config.d - 1)))
    orient = int(config.params.get("orient", 0))
    weak = float(config.params.get("weak", 0.01))
    base = sample_field(config.d, config.L, config.law, task_seeds[0])
    fld = plant_trap(base, anchor, weak, orient)
    lab = components(fld, 1.0)
    recs = detect_traps(fld, lab, weak_max=weak)
    mine = [r for r in recs if r.anchor == anchor and r.axis == orient and r.sign == 1]
    if not mine:
        raise ConfigError("planted trap not detected; check parameters")
    trap = mine[0]
    ns = sorted(config.n_grid)
    returns = {}

    def rec(k, v):
        if k % 2 == 0:
            returns[k // 2] = v

    _evolve_impl(fld, (0,) * config.d, 2 * max(ns), record=rec)
    rows = []
    dominated = True
    for n in ns:
        exact = returns[n]
        bound = trap_lower_bound(fld, trap, n)
        rows.append((n, exact, bound))
        if exact < bound:
            dominated = False
    name = "bounds.csv"
    bounds_csv(rows, os.path.join(outdir, name))
    checks = {"exact_dominates_bound": dominated}
    summary = {
        "kind": config.kind,
        "anchor": list(anchor),
        "weak": weak,
        "rows": [[n, e, b] for n, e, b in rows],
        "checks": checks,
    }
    return {name: None}, summary


def _run_annealed(config, outdir, task_seeds, max_workers):
    ns = sorted(config.n_grid)

    def task(i):
        n = ns[i]
        return annealed_return(
            config.law,
            config.d,
            config.L,
            n,
            config.ensemble,
            rng.derive_seed(config.seed, n),
        )

    results = _map_tasks(task, len(ns), max_workers)
    name = "annealed.csv"
    with open(os.path.join(outdir, name), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "mean", "stderr"])
        for n, (mean, se) in zip(ns, results):
            writer.writerow([n, repr(mean), repr(se)])
    summary = {
        "kind": config.kind,
        "n_grid": ns,
        "means": [r[0] for r in results],
        "stderrs": [r[1] for r in results],
        "checks": {"ran": True},
    }
    return {name: None}, summary


_RUNNERS = {
    "decay-fit": _run_decay_fit,
    "coarse-check": _run_coarse_check,
    "iso-profile": _run_iso_profile,
    "gn-scan": _run_gn_scan,
    "trap-census": _run_trap_census,
    "trap-bound": _run_trap_bound,
    "annealed": _run_annealed,
}


def _map_tasks(task, count, max_workers):
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(task, range(count)))
    return [task(i) for i in range(count)]


def run_experiment(config: ExperimentConfig, max_workers: int = 1) -> RunManifest:
    """Run the configured pipeline, write outputs + manifest, return it."""
    config.validate()
    outdir = config.outdir
    os.makedirs(outdir, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    task_seeds = [rng.derive_seed(config.seed, i) for i in range(max(config.ensemble, 1))]
    outputs, summary = _RUNNERS[config.kind](config, outdir, task_seeds, max_workers)
    finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
    hashed = {name: _sha256(os.path.join(outdir, name)) for name in outputs}
    manifest = RunManifest(
        config=config.descriptor(),
        config_hash=config.config_hash(),
        code_version=_code_version,
        started=started,
        finished=finished,
        task_seeds=task_seeds,
        outputs=hashed,
        summary=summary,
    )
    manifest.save(os.path.join(outdir, "manifest.json"))
    return manifest


REFERENCE_DECAY = {
    2: "n^-1 (d=2: n^{-d/2})",
    3: "n^-3/2 (d=3: n^{-d/2})",
    4: "n^-2 log n (d=4)",
}


def emit_report(manifest: RunManifest) -> tuple:
    """Render a markdown summary; returns (text, ok)."""
    if not manifest.outputs:
        raise ConfigError("manifest has no outputs to report on")
    s = manifest.summary
    lines = [
        f"# rcmwalk report: {s.get('kind')}",
        "",
        f"- config hash: `{manifest.config_hash}`",
        f"- code version: {manifest.code_version}",
        f"- started: {manifest.started}",
        f"- finished: {manifest.finished}",
        "",
    ]
    if s.get("kind") == "decay-fit":
        d = manifest.config["d"]
        ref = REFERENCE_DECAY.get(d, "n^-2 (d>=5)")
        lines.append(f"Reference decay: {ref}")
        lines.append(f"Fitted exponents (2-sigma CI): {s.get('exponents_ci', [])}")
        if s.get("truncated"):
            lines.append(
                f"TRUNCATED: support cap reached, series stop at n = {s['n_max_effective']}"
            )
        lines.append("")
    checks = s.get("checks", {})
    ok = all(checks.values())
    lines.append("## Invariant checks")
    for name, passed in sorted(checks.items()):
        lines.append(f"- {'PASS' if passed else 'FAIL'}: {name}")
    lines.append("")
    lines.append("## Outputs")
    for name, digest in sorted(manifest.outputs.items()):
        lines.append(f"- {name}  sha256 {digest}")
    return "\n".join(lines) + "\n", ok
