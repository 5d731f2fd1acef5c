"""Configuration-driven experiments: ensembles, estimators, reports and plots.

Output directory layout::

    manifest.json        written first; config, config hash, seeds, environment
    ensembles/N*/c*.npz  replica snapshots in chunks (resumable)
    report.json          ChaosReport (rows, fits, meta)
    timeseries.csv       one row per (N, t)
    *.svg                plots
    timing.json          wall-clock timing (the only non-deterministic file)
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .chaos_metrics import (ChaosReport, exp_decay_fit, fisher_rel, lln_rate_fit, omega_inf,
                            omega_j, omega_N, one_particle_moments, rel_entropy_to_gaussian)
from .chaotic_init import DensitySpec, kac_sphere_marginal_w1, marginal_samples
from .config import ExperimentConfig
from .kac_process import EnsembleLaw, replica_seed, run_replica
from .kernels import InvalidInput
from .limit_eq import (bkw_moment, bkw_reference_from_K, bkw_relative_entropy,
                       maxwellian_reference)
from .plots import emit_plot

CHUNK = 256
STATIC_KINDS = ("LLNRates", "ConditionedProductRates", "PoincareMarginals")


def derive_seed(seed, *tags):
    text = ":".join([str(int(seed))] + [str(t) for t in tags])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def build_reference(cfg: ExperimentConfig):
    kind = cfg.reference.get("kind", "maxwellian")
    if kind == "maxwellian":
        return maxwellian_reference(cfg.d)
    if kind == "bkw":
        return bkw_reference_from_K(cfg.init.density.K, cfg.kernel, cfg.d, cfg.time_scale)
    if kind == "density":
        return DensitySpec.from_dict(cfg.reference["density"])
    return cfg.init.density


def _grid(cfg):
    return [0.0] if cfg.kind in STATIC_KINDS else list(cfg.t_grid)


def build_manifest(cfg: ExperimentConfig):
    grid = _grid(cfg)
    return {
        "format": "kaclab-run/1",
        "code_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "grid": grid,
        "ensembles": {str(N): {"base_seed": derive_seed(cfg.seed, "ensemble", N),
                               "replica_seeds": [replica_seed(derive_seed(cfg.seed, "ensemble", N),
                                                              r) for r in range(cfg.R)]}
                      for N in cfg.N},
        "environment": {"python": sys.version.split()[0], "numpy": np.__version__,
                        "platform": platform.machine(),
                        "note": "worker count (KACLAB_WORKERS) never changes results"},
        "results": ["report.json", "timeseries.csv"],
        "timing": "timing.json",
    }


def _write_json(path, obj):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _run_chunk(cfg, N, base, grid, lo, hi):
    snaps, counts, frozen, failed = [], [], [], []
    for r in range(lo, hi):
        try:
            s, c, f = run_replica(cfg.init, N, cfg.kernel, grid, base, r, cfg.scheme,
                                  cfg.time_scale)
        except Exception as exc:  # recorded and excluded, never silently dropped
            failed.append((r, f"{type(exc).__name__}: {exc}"))
            continue
        snaps.append(s)
        counts.append(c)
        frozen.append(f)
    return snaps, counts, frozen, failed


def ensemble_for(cfg: ExperimentConfig, N, out: Path, log=None):
    """Run (or resume) the replicas for one N, chunk by chunk."""
    grid = np.asarray(_grid(cfg))
    base = derive_seed(cfg.seed, "ensemble", N)
    folder = out / "ensembles" / f"N{N:05d}"
    folder.mkdir(parents=True, exist_ok=True)
    data, coll, frozen, ids, failures = [], [], [], [], []
    for c, lo in enumerate(range(0, cfg.R, CHUNK)):
        hi = min(cfg.R, lo + CHUNK)
        path = folder / f"c{c:05d}.npz"
        if path.exists():
            z = np.load(path, allow_pickle=False)
            good = list(z["ids"])
            snaps, counts, fr = list(z["snaps"]), list(z["counts"]), list(z["frozen"])
            failed = [(int(r), str(m)) for r, m in zip(z["failed_ids"], z["failed_msgs"])]
        else:
            snaps, counts, fr, failed = _run_chunk(cfg, N, base, grid, lo, hi)
            bad = {r for r, _ in failed}
            good = [r for r in range(lo, hi) if r not in bad]
            tmp = folder / f"c{c:05d}.tmp.npz"
            np.savez(tmp, snaps=np.array(snaps), counts=np.array(counts, dtype=np.int64),
                     frozen=np.array(fr, dtype=bool), ids=np.array(good, dtype=np.int64),
                     failed_ids=np.array([r for r, _ in failed], dtype=np.int64),
                     failed_msgs=np.array([m for _, m in failed], dtype=str))
            os.replace(tmp, path)
            if log:
                log(f"  N={N}: replicas {lo}..{hi - 1} done")
        data.extend(snaps)
        coll.extend(counts)
        frozen.extend(fr)
        ids.extend(good)
        failures.extend(failed)
    if not data:
        raise RuntimeError(f"every replica failed for N={N}")
    ens = EnsembleLaw(N, np.asarray(data[0]).shape[-1], cfg.kernel, grid, np.array(data),
                      [replica_seed(base, r) for r in ids], base, cfg.scheme, cfg.time_scale,
                      cfg.init.to_dict(), np.array(frozen), np.array(coll))
    return ens, failures


def _pooled_one(ens, k, cap, seed):
    x = ens.data[:, k].reshape(-1, ens.d)
    if cap is not None and len(x) > cap:
        rng = np.random.default_rng(seed)
        x = x[np.sort(rng.choice(len(x), cap, replace=False))]
    return x


def _reference_values(ref, t, d):
    from .limit_eq import ReferenceSolution
    if isinstance(ref, ReferenceSolution) and ref.kind == "bkw":
        return bkw_moment(ref, t, 4), bkw_relative_entropy(ref, t)
    if isinstance(ref, ReferenceSolution) and ref.kind == "maxwellian":
        return float(d * (d + 2)), 0.0
    return None, None


def _time_rows(cfg, ens, ref, report, js):
    est = cfg.estimators
    N = ens.N
    for k, t in enumerate(ens.grid):
        row = {"t": float(t), "N": N}
        for j in js:
            if j > N:
                continue
            o = omega_j(ens, ref, j, k, pooled=est.pooled, n_boot=est.n_boot,
                        seed=derive_seed(cfg.seed, "omega", j, N, k), max_samples=est.max_samples,
                        n_exact=est.n_exact, n_dirs=est.n_dirs)
            if j in (1, 2):
                row[f"omega_{j}"] = o.value
                row[f"omega_{j}_se"] = o.stderr
            row["n_samples"] = o.n
        if est.omega_inf:
            o = omega_inf(ens, ref, k, seed=derive_seed(cfg.seed, "omega_inf", N, k),
                          n_exact=max(est.n_exact, N))
            row["omega_inf"], row["omega_inf_se"] = o.value, o.stderr
        if est.omega_N and N <= 16:
            o = omega_N(ens, ref, k, n_boot=est.n_boot, seed=derive_seed(cfg.seed, "omega_N", N, k))
            row["omega_N"], row["omega_N_se"] = o.value, o.stderr
        mom = one_particle_moments(ens.data[:, k], clusters=N)
        row.update(mom)
        ref_m4, ref_h = _reference_values(ref, float(t), ens.d)
        row["reference_m4"] = ref_m4
        row["reference_entropy_rel"] = ref_h
        cap = est.max_samples
        if est.entropy:
            x = _pooled_one(ens, k, cap, derive_seed(cfg.seed, "sub", N, k))
            h = rel_entropy_to_gaussian(x, n_boot=max(est.n_boot, 2),
                                        seed=derive_seed(cfg.seed, "H", N, k) % 2 ** 32)
            row["entropy_rel"], row["entropy_rel_se"] = h.value, h.stderr
        if est.fisher:
            x = _pooled_one(ens, k, min(cap or 4000, 4000), derive_seed(cfg.seed, "subF", N, k))
            fi = fisher_rel(x, n_boot=max(min(est.n_boot, 4), 2),
                            seed=derive_seed(cfg.seed, "I", N, k) % 2 ** 32)
            row["fisher_rel"], row["fisher_rel_se"] = fi.value, fi.stderr
        report.add_row(**row)


def _series(report, key, by="N", x="t"):
    groups = {}
    for row in report.rows:
        if row.get(key) is None:
            continue
        groups.setdefault(row[by], []).append((row[x], row[key], row.get(f"{key}_se") or 0.0))
    return [{"label": f"{by}={g}", "x": [p[0] for p in pts], "y": [p[1] for p in pts],
             "yerr": [p[2] for p in pts]} for g, pts in sorted(groups.items())]


def _rate_fit(points):
    try:
        return lln_rate_fit(points).to_dict()
    except InvalidInput as e:
        return {"skipped": str(e)}


def _monotone_within(vals, ses, k_se=2.0):
    return all(b <= a + k_se * math.hypot(sa, sb)
               for a, b, sa, sb in zip(vals, vals[1:], ses, ses[1:]))


def _analyse(cfg, ensembles, ref, report, out):
    est = cfg.estimators
    plots = []
    kind = cfg.kind
    if kind in ("ChaosPropagation", "Equilibration", "HTheorem"):
        for N, ens in ensembles.items():
            _time_rows(cfg, ens, ref, report, est.omega_j)
        for key in ("omega_1", "omega_2", "entropy_rel"):
            ser = _series(report, key)
            if ser:
                fname = f"{key}_vs_t.svg"
                emit_plot(ser, "semilogy", out / fname, title=f"{key} along the flow",
                          xlabel="t", ylabel=key)
                plots.append(fname)
        for N in ensembles:
            rows = [r for r in report.rows if r["N"] == N]
            if kind == "ChaosPropagation" and rows and rows[0].get("omega_2") is not None:
                report.meta.setdefault("sup_omega_2", {})[str(N)] = max(r["omega_2"]
                                                                        for r in rows)
            if kind == "Equilibration" and rows and rows[0].get("omega_1") is not None:
                half = rows[len(rows) // 2:]
                rate, r2 = exp_decay_fit([r["t"] for r in half], [r["omega_1"] for r in half],
                                         [r["omega_1_se"] for r in half])
                report.fits[f"omega_1_tail_N{N}"] = {"rate": rate, "r2": r2}
            if kind == "HTheorem" and rows and rows[0].get("entropy_rel") is not None:
                vals = [r["entropy_rel"] for r in rows]
                ses = [r["entropy_rel_se"] for r in rows]
                report.meta.setdefault("entropy_monotone_2se", {})[str(N)] = \
                    _monotone_within(vals, ses)
        if kind == "ChaosPropagation" and "sup_omega_2" in report.meta:
            pts = [(int(N), v, None) for N, v in report.meta["sup_omega_2"].items()]
            report.fits["sup_omega_2_vs_N"] = _rate_fit(pts)
    else:
        for N, ens in ensembles.items():
            if kind == "LLNRates":
                o = omega_inf(ens, ref, 0, seed=derive_seed(cfg.seed, "omega_inf", N),
                              n_exact=max(est.n_exact, N))
                report.add_row(t=0.0, N=N, omega_inf=o.value, omega_inf_se=o.stderr,
                               n_samples=ens.R)
            elif kind == "ConditionedProductRates":
                o = omega_j(ens, ref, 1, 0, pooled=True, n_boot=est.n_boot,
                            seed=derive_seed(cfg.seed, "omega", 1, N),
                            max_samples=est.max_samples, n_exact=est.n_exact, n_dirs=est.n_dirs)
                exact = None
                dens = cfg.init.density
                if cfg.init.sphere == "kac" and dens.kind in ("gauss", "mixture") and N >= 16:
                    exact = kac_sphere_marginal_w1(dens, N, cfg.init.energy or 1.0)
                report.add_row(t=0.0, N=N, omega_1=o.value, omega_1_se=o.stderr,
                               omega_1_exact=exact, n_samples=o.n)
            else:  # PoincareMarginals
                _time_rows(cfg, ens, ref, report, est.omega_j)
        keys = {"LLNRates": ["omega_inf"], "ConditionedProductRates": ["omega_1", "omega_1_exact"],
                "PoincareMarginals": ["omega_1", "omega_2", "omega_N"]}[kind]
        ser = []
        for key in keys:
            pts = [(r["N"], r[key], r.get(f"{key}_se")) for r in report.rows
                   if r.get(key) is not None]
            if pts:
                report.fits[f"{key}_vs_N"] = _rate_fit(pts)
                ser.append({"label": key, "x": [p[0] for p in pts], "y": [p[1] for p in pts],
                            "yerr": [p[2] or 0.0 for p in pts]})
        if any(any(y > 0 for y in s["y"]) for s in ser):
            emit_plot(ser, "loglog", out / "rates_vs_N.svg", title=f"{kind}: rates in N",
                      xlabel="N", ylabel="estimate", fit=True)
            plots.append("rates_vs_N.svg")
    return plots


def run_experiment(cfg: ExperimentConfig, *, log=None):
    """Run one experiment end to end; returns a dict of written files.

    Reruns with an identical config reuse completed replica chunks and
    produce byte-identical report.json and timeseries.csv.
    """
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(cfg)
    mpath = out / "manifest.json"
    if mpath.exists():
        old = json.loads(mpath.read_text())
        if old.get("config_hash") != manifest["config_hash"]:
            raise RuntimeError(f"{out} holds a run of a different config; use a new output dir")
    _write_json(mpath, manifest)
    t0 = time.perf_counter()
    ref = build_reference(cfg)
    report = ChaosReport(meta={"kind": cfg.kind, "name": cfg.name,
                               "config_hash": manifest["config_hash"],
                               "manifest": "manifest.json", "reference": _ref_dict(ref)})
    ensembles, failures = {}, {}
    for N in cfg.N:
        if log:
            log(f"N={N}: {cfg.R} replicas")
        ens, failed = ensemble_for(cfg, N, out, log)
        ensembles[N] = ens
        failures[str(N)] = {"count": len(failed), "replicas": [r for r, _ in failed],
                            "errors": sorted({m for _, m in failed})}
    report.meta["failures"] = failures
    report.meta["replicas_used"] = {str(N): e.R for N, e in ensembles.items()}
    plots = _analyse(cfg, ensembles, ref, report, out)
    report.write_json(out / "report.json")
    report.write_csv(out / "timeseries.csv")
    _write_json(out / "timing.json", {"elapsed_s": time.perf_counter() - t0})
    return {"manifest": str(mpath), "report": str(out / "report.json"),
            "csv": str(out / "timeseries.csv"), "plots": [str(out / p) for p in plots]}


def _ref_dict(ref):
    return ref.to_dict() if hasattr(ref, "to_dict") else {"repr": repr(ref)}


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
