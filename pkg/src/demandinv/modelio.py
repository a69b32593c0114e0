"""File formats: JSON model files with truth sidecars, experiment spec files,
long-form trace CSVs, and the band/degeneracy/manifest reports.

All floats are serialized via Python's shortest round-trip repr, so
write-then-read reproduces doubles bit-exactly and repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .core import InvalidInputError, as_mean_utility, as_share_vector
from .harness import DegeneracyStats, ExperimentSpec, TraceBand
from .logit import LogitMarket
from .purechar import PureCharMarket
from .solvers import InversionResult, SolverConfig

ARTIFACT_VERSION = "1"

TRACE_COLUMNS = (
    "replication_id",
    "method",
    "iteration",
    "error_maxnorm",
    "welfare_evals",
    "share_evals",
    "jacobian_evals",
)

_MODEL_KEYS = {"family", "J", "M", "n", "beta", "z", "nu", "seed"}
_SPEC_KEYS = {
    "model_family",
    "J",
    "M",
    "n",
    "replications",
    "methods",
    "delta_norm",
    "solver",
    "master_seed",
}


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _require(doc: dict, keys, what: str) -> None:
    missing = [k for k in keys if k not in doc]
    if missing:
        raise InvalidInputError(f"{what} is missing keys: {', '.join(missing)}")


def _reject_unknown(doc: dict, allowed, what: str) -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise InvalidInputError(f"{what} has unknown keys: {', '.join(unknown)}")


# ---------------------------------------------------------------------------
# model files


def model_to_dict(market, seed=None) -> dict:
    if isinstance(market, LogitMarket):
        family, nu = "logit", market.nu
    elif isinstance(market, PureCharMarket):
        family, nu = "purechar", market.nu_rest
    else:
        raise InvalidInputError(f"cannot serialize model of type {type(market).__name__}")
    doc = {
        "family": family,
        "J": market.J,
        "M": market.M,
        "n": market.n,
        "beta": market.beta.tolist(),
        "z": market.z.tolist(),
        "nu": nu.tolist(),
    }
    if seed is not None:
        doc["seed"] = int(seed)
    return doc


def market_from_dict(doc):
    if not isinstance(doc, dict):
        raise InvalidInputError("model file must hold a JSON object")
    _require(doc, ("family", "J", "M", "n", "beta", "z", "nu"), "model file")
    _reject_unknown(doc, _MODEL_KEYS, "model file")
    family = doc["family"]
    J, M, n = int(doc["J"]), int(doc["M"]), int(doc["n"])
    z = np.asarray(doc["z"], dtype=float)
    nu = np.asarray(doc["nu"], dtype=float)
    beta = np.asarray(doc["beta"], dtype=float)
    if z.shape != (J, M):
        raise InvalidInputError(f"z has shape {z.shape}, expected ({J}, {M})")
    if family == "logit":
        if nu.shape != (n, M):
            raise InvalidInputError(f"nu has shape {nu.shape}, expected ({n}, {M})")
        return LogitMarket(z=z, nu=nu, beta=beta)
    if family == "purechar":
        if nu.shape != (n, M - 1):
            raise InvalidInputError(f"nu has shape {nu.shape}, expected ({n}, {M - 1})")
        return PureCharMarket(z=z, nu_rest=nu, beta=beta)
    raise InvalidInputError(f"unknown model family {family!r}")


def save_model(path, market, seed=None) -> None:
    write_json(path, model_to_dict(market, seed=seed))


def load_model(path):
    return market_from_dict(read_json(path))


def truth_path_for(model_path) -> Path:
    return Path(model_path).with_suffix(".truth.json")


def save_truth(path, x_star, sigma_star) -> None:
    write_json(
        path,
        {
            "x_star": np.asarray(x_star, dtype=float).tolist(),
            "sigma_star": np.asarray(sigma_star, dtype=float).tolist(),
        },
    )


def load_truth(path):
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise InvalidInputError("truth file must hold a JSON object")
    _require(doc, ("x_star", "sigma_star"), "truth file")
    return as_mean_utility(doc["x_star"]), as_share_vector(doc["sigma_star"])


def load_shares(path):
    """Share vector from a JSON file: a bare array, or an object with a
    'shares' or 'sigma_star' key (truth sidecars work directly)."""
    doc = read_json(path)
    if isinstance(doc, dict):
        values = doc.get("shares", doc.get("sigma_star"))
        if values is None:
            raise InvalidInputError("shares file needs a 'shares' or 'sigma_star' key")
    else:
        values = doc
    return as_share_vector(values)


# ---------------------------------------------------------------------------
# experiment spec files


def spec_to_dict(spec: ExperimentSpec) -> dict:
    cfg = spec.solver_cfg
    return {
        "model_family": spec.model_family,
        "J": spec.J,
        "M": spec.M,
        "n": spec.n,
        "replications": spec.replications,
        "methods": list(spec.methods),
        "delta_norm": spec.delta_norm,
        "master_seed": spec.master_seed,
        "solver": {
            "max_iterations": cfg.max_iterations,
            "gradient_tolerance": cfg.gradient_tolerance,
            "initial_radius": cfg.initial_radius,
            "radius_max": cfg.radius_max,
            "accept_ratio": cfg.accept_ratio,
            "expand_ratio": cfg.expand_ratio,
            "shrink_factor": cfg.shrink_factor,
            "expand_factor": cfg.expand_factor,
            "regularization_floor": cfg.regularization_floor,
        },
    }


def spec_from_dict(doc) -> ExperimentSpec:
    if not isinstance(doc, dict):
        raise InvalidInputError("experiment spec must hold a JSON object")
    _require(doc, ("model_family", "J", "M", "n", "replications"), "experiment spec")
    _reject_unknown(doc, _SPEC_KEYS, "experiment spec")
    solver_doc = doc.get("solver", {})
    if not isinstance(solver_doc, dict):
        raise InvalidInputError("'solver' must be an object of SolverConfig fields")
    try:
        solver_cfg = SolverConfig(**solver_doc)
    except TypeError as exc:
        raise InvalidInputError(f"bad solver settings: {exc}") from None
    kwargs = {}
    if "methods" in doc:
        kwargs["methods"] = tuple(doc["methods"])
    if "delta_norm" in doc:
        kwargs["delta_norm"] = float(doc["delta_norm"])
    return ExperimentSpec(
        model_family=doc["model_family"],
        J=int(doc["J"]),
        M=int(doc["M"]),
        n=int(doc["n"]),
        replications=int(doc["replications"]),
        solver_cfg=solver_cfg,
        master_seed=int(doc.get("master_seed", 0)),
        **kwargs,
    )


def spec_sha256(spec: ExperimentSpec) -> str:
    canonical = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# run artifacts


def write_trace_csv(path, results: dict) -> None:
    """Long-form raw traces, one row per accepted iterate, sorted by
    (method, replication_id, iteration). Evaluation counts are cumulative."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for method, replication in sorted(results):
            res: InversionResult = results[(method, replication)]
            for k in range(res.error_trace.size):
                welfare, shares, jacobian = res.eval_trace[k]
                writer.writerow(
                    [
                        replication,
                        method,
                        k,
                        repr(float(res.error_trace[k])),
                        int(welfare),
                        int(shares),
                        int(jacobian),
                    ]
                )


def read_trace_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise InvalidInputError(f"trace CSV has unexpected header {reader.fieldnames}")
        rows = []
        for row in reader:
            rows.append(
                {
                    "replication_id": int(row["replication_id"]),
                    "method": row["method"],
                    "iteration": int(row["iteration"]),
                    "error_maxnorm": float(row["error_maxnorm"]),
                    "welfare_evals": int(row["welfare_evals"]),
                    "share_evals": int(row["share_evals"]),
                    "jacobian_evals": int(row["jacobian_evals"]),
                }
            )
        return rows


def bands_to_dict(bands: TraceBand) -> dict:
    methods = {}
    for method in sorted(bands.per_method):
        band = bands.per_method[method]
        rate = band.empirical_rate
        methods[method] = {
            "min": [float(v) for v in band.minimum],
            "median": [float(v) for v in band.median],
            "max": [float(v) for v in band.maximum],
            "empirical_rate": None if math.isnan(rate) else float(rate),
        }
    return {"iterations": [int(i) for i in bands.iterations], "methods": methods}


def degeneracy_to_dict(deg: DegeneracyStats, threshold: float = 1e-14) -> dict:
    return {
        "threshold": threshold,
        "fraction_below": deg.fraction_below(threshold),
        "replications": [
            {
                "replication_id": r,
                "min_inside_share": float(deg.min_inside_share[r]),
                "outside_share": float(deg.outside_share[r]),
                "min_overall": float(deg.min_overall[r]),
            }
            for r in range(deg.min_overall.size)
        ],
    }


def manifest_dict(spec: ExperimentSpec, failures: dict) -> dict:
    return {
        "artifact_version": ARTIFACT_VERSION,
        "master_seed": spec.master_seed,
        "spec_sha256": spec_sha256(spec),
        "spec": spec_to_dict(spec),
        "failures": {
            f"{method}:{replication}": message
            for (method, replication), message in sorted(failures.items())
        },
    }


def inversion_result_to_dict(res: InversionResult, method: str) -> dict:
    return {
        "method": method,
        "converged": bool(res.converged),
        "iterations_used": int(res.iterations_used),
        "error_final": float(res.error_trace[-1]),
        "x_final": res.x_final.tolist(),
        "eval_counts": {k: int(res.eval_counts[k]) for k in sorted(res.eval_counts)},
    }
