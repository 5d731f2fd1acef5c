"""Experiment configuration: YAML files parsed into dataclasses.

Errors are collected rather than raised one at a time, and each one names
the offending field and, when the file was read from disk, its line.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .chaotic_init import DensitySpec, InitSpec
from .kac_process import TIME_SCALES
from .kernels import ANGULAR_CONVENTIONS, VARIANTS, CollisionKernel, InvalidInput

EXPERIMENT_KINDS = ("ChaosPropagation", "Equilibration", "LLNRates", "ConditionedProductRates",
                    "HTheorem", "PoincareMarginals")
REFERENCE_KINDS = ("maxwellian", "bkw", "density", "init")
SCHEMES = ("ssa", "rejection")


class ConfigError(InvalidInput):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class EstimatorOptions:
    omega_j: list = field(default_factory=lambda: [1, 2])
    pooled: bool = True
    omega_inf: bool = False
    omega_N: bool = False
    entropy: bool = False
    fisher: bool = False
    n_boot: int = 10
    max_samples: int | None = None
    n_exact: int = 2048
    n_dirs: int = 64


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    output: str
    kernel: CollisionKernel
    N: list
    R: int
    t_grid: list
    init: InitSpec
    reference: dict
    estimators: EstimatorOptions = field(default_factory=EstimatorOptions)
    scheme: str = "ssa"
    time_scale: str = "ordered"
    d: int = 3
    name: str = ""

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "seed": self.seed, "output": self.output,
                "kernel": self.kernel.to_dict(), "N": list(self.N), "R": self.R,
                "t_grid": [float(t) for t in self.t_grid], "init": self.init.to_dict(),
                "reference": self.reference, "estimators": asdict(self.estimators),
                "scheme": self.scheme, "time_scale": self.time_scale, "d": self.d}

    def config_hash(self):
        blob = dict(self.to_dict())
        blob.pop("output")  # where results go does not change them
        text = json.dumps(blob, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _line_index(text):
    """Map dotted field paths to 1-based line numbers of a YAML document."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                lines[f"{path}[{i}]"] = v.start_mark.line + 1
                walk(v, f"{path}[{i}]")

    if root is not None:
        walk(root, "")
    return lines


def _grid(spec, err):
    if isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError):
            err("t_grid", "range form needs numeric start, stop and num")
            return [0.0]
        if num < 1:
            err("t_grid", "num must be >= 1")
            return [0.0]
        if num == 1:
            return [start]
        return [start + (stop - start) * k / (num - 1) for k in range(num)]
    if isinstance(spec, (list, tuple)):
        try:
            return [float(x) for x in spec]
        except (TypeError, ValueError):
            err("t_grid", "entries must be numbers")
            return [0.0]
    err("t_grid", "must be a list of times or {start, stop, num}")
    return [0.0]


def parse_config(data, lines=None, source="<config>"):
    """Build an ExperimentConfig from a plain dict; raises ConfigError listing every problem."""
    lines = lines or {}
    errors = []

    def err(path, msg):
        ln = lines.get(path)
        where = f"{source}:{ln}: " if ln else f"{source}: "
        errors.append(f"{where}{path}: {msg}")

    if not isinstance(data, dict):
        raise ConfigError([f"{source}: top level must be a mapping"])
    known = {"kind", "name", "seed", "output", "kernel", "N", "R", "t_grid", "init", "reference",
             "estimators", "scheme", "time_scale", "d"}
    for k in data:
        if k not in known:
            err(str(k), "unknown field")

    kind = data.get("kind")
    if kind not in EXPERIMENT_KINDS:
        err("kind", f"must be one of {', '.join(EXPERIMENT_KINDS)}")
    seed = data.get("seed")
    if seed is None:
        err("seed", "missing; a seed is mandatory (no wall-clock seeding)")
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        err("seed", "must be a nonnegative integer")
    output = data.get("output")
    if not isinstance(output, str) or not output:
        err("output", "missing output directory")

    kdata = data.get("kernel", {"variant": "mg"})
    kernel = CollisionKernel.mg()
    if not isinstance(kdata, dict):
        err("kernel", "must be a mapping")
    else:
        if kdata.get("variant", "mg") not in VARIANTS:
            err("kernel.variant", f"must be one of {', '.join(VARIANTS)}")
        elif kdata.get("angular_mass", "normalized") not in ANGULAR_CONVENTIONS:
            err("kernel.angular_mass", f"must be one of {', '.join(ANGULAR_CONVENTIONS)}")
        else:
            try:
                kernel = CollisionKernel.from_dict(kdata)
            except InvalidInput as e:
                err("kernel", str(e))

    Ns = data.get("N")
    if isinstance(Ns, int) and not isinstance(Ns, bool):
        Ns = [Ns]
    if not isinstance(Ns, list) or not Ns or not all(isinstance(n, int) and n >= 1 for n in Ns):
        err("N", "must be a positive integer or a nonempty list of them")
        Ns = [2]
    elif Ns != sorted(Ns) or len(set(Ns)) != len(Ns):
        err("N", "list must be strictly increasing")
    R = data.get("R")
    if not isinstance(R, int) or isinstance(R, bool) or R < 1:
        err("R", "must be a positive integer")
        R = 1
    grid = _grid(data.get("t_grid", [0.0]), err)
    if any(not math.isfinite(t) or t < 0 for t in grid):
        err("t_grid", "times must be finite and nonnegative")
    elif any(b <= a for a, b in zip(grid, grid[1:])):
        err("t_grid", "times must be strictly increasing")

    scheme = data.get("scheme", "ssa")
    if scheme not in SCHEMES:
        err("scheme", f"must be one of {', '.join(SCHEMES)}")
    time_scale = data.get("time_scale", "ordered")
    if time_scale not in TIME_SCALES:
        err("time_scale", f"must be one of {', '.join(TIME_SCALES)}")

    d = data.get("d")
    idata = data.get("init")
    init = None
    if not isinstance(idata, dict):
        err("init", "missing init block")
    else:
        if "d" not in idata and "density" not in idata and isinstance(d, int):
            idata = {**idata, "d": d}
        try:
            init = InitSpec.from_dict(idata)
        except (InvalidInput, KeyError, TypeError) as e:
            err("init", f"invalid: {e}")
    if init is not None:
        if d is not None and d != init.d:
            err("d", f"disagrees with the init dimension {init.d}")
        d = init.d
    if d is None:
        d = 3
    if not isinstance(d, int) or d < 1:
        err("d", "must be a positive integer")
        d = 3

    if init is not None:
        E = float(init.energy if init.energy is not None else d)
        if init.kind in ("uniform_sphere", "conditioned") and min(Ns) < 2:
            err("N", "sphere initial data need N >= 2")
        if init.kind in ("uniform_sphere", "conditioned") and init.sphere == "kac" and d != 1:
            err("init.sphere", "the Kac sphere needs d = 1")
        if init.kind == "conditioned" and init.sphere == "boltzmann" and d < 2:
            err("init.sphere", "conditioning on the Boltzmann sphere needs d >= 2")
        if init.kind == "conditioned" and init.density is not None:
            if float(sum(abs(x) for x in init.density.mean())) > 1e-6:
                err("init.density", "conditioned products need a centered density (mean 0)")
            if abs(init.density.energy() - E) > 1e-6 * max(1.0, E):
                err("init.density", f"conditioned products need energy per particle {E}, "
                                    f"the density has {init.density.energy():.6g}")
        if kernel.variant == "hs" and init.density is not None:
            if float(sum(abs(x) for x in init.density.mean())) > 1e-6:
                err("init.density", "hard spheres require a centered initial density "
                                    "(mean velocity 0)")
            if abs(init.density.energy() - d) > 1e-6 * d:
                err("init.density", f"hard spheres require unit energy per component "
                                    f"(E|v|^2 = {d}), the density has "
                                    f"{init.density.energy():.6g}")
        if kernel.variant == "hs" and init.kind == "uniform_sphere" and init.energy not in (
                None, float(d)):
            err("init.energy", "hard spheres require unit energy per component")

    ref = data.get("reference", {"kind": "maxwellian"})
    if not isinstance(ref, dict) or ref.get("kind") not in REFERENCE_KINDS:
        err("reference.kind", f"must be one of {', '.join(REFERENCE_KINDS)}")
        ref = {"kind": "maxwellian"}
    if ref.get("kind") == "bkw":
        if not kernel.is_maxwell:
            err("reference.kind", "the BKW reference needs a Maxwell-type kernel")
        if init is None or init.density is None or init.density.kind != "bkw":
            err("reference.kind", "the BKW reference needs a BKW initial density")
    if ref.get("kind") == "density":
        try:
            DensitySpec.from_dict(ref.get("density", {}))
        except (InvalidInput, KeyError, TypeError) as e:
            err("reference.density", f"invalid: {e}")
    if ref.get("kind") == "init" and (init is None or init.density is None):
        err("reference.kind", "'init' reference needs an init density")

    edata = data.get("estimators", {}) or {}
    est = EstimatorOptions()
    if not isinstance(edata, dict):
        err("estimators", "must be a mapping")
    else:
        for k, v in edata.items():
            if not hasattr(est, k):
                err(f"estimators.{k}", "unknown estimator option")
            else:
                setattr(est, k, v)
        if not isinstance(est.omega_j, list) or not all(isinstance(j, int) and j >= 1
                                                       for j in est.omega_j):
            err("estimators.omega_j", "must be a list of positive integers")
        elif est.omega_j and max(est.omega_j) > min(Ns):
            err("estimators.omega_j", "j cannot exceed the smallest N")
        if not isinstance(est.n_boot, int) or est.n_boot < 0:
            err("estimators.n_boot", "must be a nonnegative integer")

    if kind == "LLNRates" or kind == "ConditionedProductRates":
        if len(Ns) < 4 or Ns[-1] < 4 * Ns[0]:
            err("N", f"{kind} fits a rate: need >= 4 values of N spanning >= 2 octaves")
    if kind == "ConditionedProductRates" and init is not None and init.kind != "conditioned":
        err("init.kind", "ConditionedProductRates needs conditioned initial data")
    if kind == "PoincareMarginals" and init is not None and init.kind != "uniform_sphere":
        err("init.kind", "PoincareMarginals needs uniform-sphere initial data")
    if kind in ("Equilibration", "HTheorem", "ChaosPropagation") and len(grid) < 2:
        err("t_grid", f"{kind} needs at least two grid times")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(kind, int(seed), output, kernel, list(Ns), int(R), grid, init, ref,
                            est, scheme, time_scale, int(d), str(data.get("name", "")))


def load_config(path):
    path = Path(path)
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}: " if mark else f"{path}: "
        raise ConfigError([f"{where}YAML syntax error: {e}"]) from None
    return parse_config(data, _line_index(text), str(path))


def validate_config(path):
    """Return (config, []) when valid, else (None, list of error strings)."""
    try:
        return load_config(path), []
    except ConfigError as e:
        return None, e.errors
    except OSError as e:
        return None, [f"{path}: cannot read: {e}"]
