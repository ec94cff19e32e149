"""Configuration-driven pipeline driver.

Subcommands cover the whole workflow: designs (``sample``), surrogate
construction (``build``), accuracy reports (``validate``), sensitivity
tables (``sobol``), desorption curves (``tds``), posterior sampling
(``infer``) and the partition-versus-design benchmark grid
(``bench-dropwave``). Runs are driven by a versioned JSON configuration;
unknown keys are rejected up front so typos fail loudly before any
computation starts.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover - declared dependency
    jsonschema = None

from . import dram as dram_mod
from . import metrics, models, multielement, persist
from .design_space import Domain, split_regular
from .kriging import GaConfig
from .pce import sobol_indices
from .sampling import (
    DEFAULT_N_CANDIDATES,
    ExperimentalDesign,
    load_ed_csv,
    mipt_fill,
    save_ed_csv,
)

logger = logging.getLogger("mepck")

CONFIG_VERSION = 1

_PHYSICS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "Q": {"type": "number"},
        "D_o": {"type": "number"},
        "T_o": {"type": "number"},
        "L": {"type": "number"},
        "theta_L0": {"type": "number"},
        "N_L": {"type": "number"},
        "alpha": {"type": "number"},
        "beta": {"type": "number"},
        "phi": {"type": ["number", "null"]},
        "phi_bar": {"type": ["number", "null"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "forward": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["dropwave", "tds", "table"]},
                "n_traps": {"type": "integer", "minimum": 0},
                "grid_nodes": {"type": "integer", "minimum": 51},
                "T_bar_max": {"type": "number", "exclusiveMinimum": 1.0},
                "n_out": {"type": "integer", "minimum": 10},
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "path": {"type": "string"},
                "physics": _PHYSICS_SCHEMA,
            },
        },
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lower", "upper"],
            "properties": {
                "lower": {"type": "array", "items": {"type": "number"}},
                "upper": {"type": "array", "items": {"type": "number"}},
            },
        },
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "required": ["counts"],
            "properties": {
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
        "refine": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "accuracy_goal": {"type": "number"},
                "min_per_cell": {"type": "integer", "minimum": 2},
                "max_rounds": {"type": "integer", "minimum": 0},
                "validation_size": {"type": "integer", "minimum": 2},
            },
        },
        "ed": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "per_cell": {"type": "integer", "minimum": 2},
                "n_candidates": {"type": "integer", "minimum": 1},
            },
        },
        "pce": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "degrees": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "q": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "ga": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "population": {"type": "integer", "minimum": 2},
                "generations": {"type": "integer", "minimum": 0},
                "tournament": {"type": "integer", "minimum": 1},
                "crossover_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "mutation_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "mutation_scale": {"type": "number", "minimum": 0},
                "elitism": {"type": "integer", "minimum": 0},
            },
        },
        "validation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"size": {"type": "integer", "minimum": 2}},
        },
        "dram": {
            "type": "object",
            "additionalProperties": False,
            "required": ["T", "theta0", "sigma_eps", "prior_lower", "prior_upper"],
            "properties": {
                "T": {"type": "integer", "minimum": 2},
                "burn_in": {"type": "integer", "minimum": 0},
                "theta0": {"type": "array", "items": {"type": "number"}},
                "sigma_eps": {"type": "number", "exclusiveMinimum": 0},
                "n0": {"type": "integer", "minimum": 0},
                "s_d": {"type": ["number", "null"]},
                "dr_gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "adapt_epsilon": {"type": "number", "minimum": 0},
                "prior_lower": {"type": "array", "items": {"type": "number"}},
                "prior_upper": {"type": "array", "items": {"type": "number"}},
                "hdr_levels": {"type": "array", "items": {"type": "number"}},
            },
        },
        "tds_run": {
            "type": "object",
            "additionalProperties": False,
            "required": ["traps"],
            "properties": {
                "traps": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["dH_bar", "logN_bar"],
                    "properties": {
                        "dH_bar": {"type": "array", "items": {"type": "number"}},
                        "logN_bar": {"type": "array", "items": {"type": "number"}},
                    },
                },
                "grid_nodes": {"type": "integer", "minimum": 51},
                "T_bar_max": {"type": "number", "exclusiveMinimum": 1.0},
                "n_out": {"type": "integer", "minimum": 10},
                "noisy": {"type": "boolean"},
                "noise_factor": {"type": "number", "minimum": 0},
                "physics": _PHYSICS_SCHEMA,
            },
        },
        "bench": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"scale": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
        },
    },
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if jsonschema is None:
        raise RuntimeError("jsonschema is required to validate run configurations")
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc.message}") from exc
    return cfg


def _physics(cfg_block) -> models.TdsConfig:
    return models.TdsConfig(**(cfg_block or {}))


def make_forward(cfg: dict):
    """Forward-model callable (row -> scalar) named by the configuration."""
    fwd = cfg.get("forward")
    if fwd is None:
        raise ConfigError("this command needs a 'forward' block")
    kind = fwd["kind"]
    if kind == "dropwave":
        return lambda x: models.dropwave(x[0], x[1])
    if kind == "tds":
        return models.TdsForward(
            _physics(fwd.get("physics")),
            n_traps=fwd.get("n_traps", 1),
            grid_nodes=fwd.get("grid_nodes", 121),
            T_bar_max=fwd.get("T_bar_max", 5.0),
            n_out=fwd.get("n_out", 200),
            rtol=fwd.get("rtol", 1e-5),
        )
    raise ConfigError("the 'table' forward model provides samples, not evaluations")


def _domain(cfg) -> Domain:
    if "domain" not in cfg:
        raise ConfigError("this command needs a 'domain' block")
    return Domain(cfg["domain"]["lower"], cfg["domain"]["upper"])


def _ga(cfg) -> GaConfig:
    return GaConfig(**cfg.get("ga", {}))


def _degrees(cfg):
    lo, hi = cfg.get("pce", {}).get("degrees", [2, 6])
    return tuple(range(lo, hi + 1))


def _qnorm(cfg) -> float:
    return cfg.get("pce", {}).get("q", 0.95)


def _outdir(cfg, args) -> str:
    out = args.out or cfg.get("output_dir", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _seed(cfg, args) -> int:
    return args.seed if args.seed is not None else cfg.get("seed", 0)


def cmd_sample(cfg, args) -> int:
    out = _outdir(cfg, args)
    rng = np.random.default_rng(_seed(cfg, args))
    forward = make_forward(cfg)
    domain = _domain(cfg)
    partition = split_regular(domain, cfg["partition"]["counts"])
    per_cell = cfg.get("ed", {}).get("per_cell", 100)
    n_cand = cfg.get("ed", {}).get("n_candidates", DEFAULT_N_CANDIDATES)
    ed = ExperimentalDesign.empty(domain.ndim)
    for j, cell in enumerate(partition.cells):
        ed = mipt_fill(ed, cell, per_cell, n_cand, rng, forward, cell_tag=j)
        mask = cell.contains_many(ed.inputs)
        cell_ed = ExperimentalDesign(
            ed.inputs[mask], ed.outputs[mask], validate=False
        )
        save_ed_csv(os.path.join(out, f"ed_cell_{j}.csv"), cell_ed)
        logger.info("cell %d: %d samples", j, len(cell_ed))
    return 0


def _build_from_table(cfg, domain, partition_counts):
    table = load_ed_csv(cfg["forward"]["path"])
    partition = split_regular(domain, partition_counts)
    locals_, reports = [], []
    for j, cell in enumerate(partition.cells):
        local, report = multielement._fit_cell(
            cell, table, j, _degrees(cfg), _qnorm(cfg), _ga(cfg), np.random.default_rng(0)
        )
        locals_.append(local)
        reports.append(report)
    return multielement.MultielementPck(partition, tuple(locals_), tuple(reports))


def build_model(cfg, seed):
    domain = _domain(cfg)
    counts = cfg["partition"]["counts"]
    if cfg["forward"]["kind"] == "table":
        return _build_from_table(cfg, domain, counts)
    forward = make_forward(cfg)
    return multielement.build(
        forward,
        domain,
        counts,
        per_cell_n=cfg.get("ed", {}).get("per_cell", 100),
        rng=np.random.default_rng(seed),
        n_candidates=cfg.get("ed", {}).get("n_candidates", DEFAULT_N_CANDIDATES),
        degrees=_degrees(cfg),
        q=_qnorm(cfg),
        ga_config=_ga(cfg),
    )


def cmd_build(cfg, args) -> int:
    out = _outdir(cfg, args)
    seed = _seed(cfg, args)
    t0 = time.perf_counter()
    model = build_model(cfg, seed)
    t_c = time.perf_counter() - t0
    persist.save_model(
        os.path.join(out, "model.json"),
        model,
        metadata={"seed": seed, "config_version": CONFIG_VERSION},
    )
    report = {
        "n_cells": model.n_cells,
        "cells": [
            {
                "cell_index": r.cell_index,
                "n_design": r.n_design,
                "n_terms": r.n_terms,
                "sigma2": r.sigma2,
                "nugget": r.nugget,
                "fit_seconds": r.fit_seconds,
            }
            for r in model.report
        ],
        "construction_seconds": t_c,
    }
    persist.atomic_write_text(
        os.path.join(out, "build_report.json"), json.dumps(report, indent=1)
    )
    logger.info("built %d cells in %.1fs", model.n_cells, t_c)
    return 0


def _validation_set(cfg, domain, rng, forward):
    size = cfg.get("validation", {}).get("size", 1000)
    X = domain.lower + rng.random((size, domain.ndim)) * domain.widths
    y = np.array([forward(x) for x in X])
    return X, y


def cmd_validate(cfg, args) -> int:
    out = _outdir(cfg, args)
    if not args.model:
        raise ConfigError("validate needs --model")
    model = persist.load_model(args.model)
    forward = make_forward(cfg)
    rng = np.random.default_rng(_seed(cfg, args) + 1)
    X, y = _validation_set(cfg, model.partition.parent, rng, forward)
    t0 = time.perf_counter()
    pred = model.predict_many(X)
    t_e = time.perf_counter() - t0
    report = metrics.compute_metrics(y, pred, evaluation_seconds=t_e)
    persist.write_validation_csv(
        os.path.join(out, "validation_report.csv"),
        [dict(model=os.path.basename(args.model), **{
            "NAAE": report.naae, "NMAE": report.nmae, "NRMSE": report.nrmse,
            "R2": report.r2, "t_c": None, "t_e": report.evaluation_seconds_per_point,
            "t_e_VS": report.evaluation_seconds,
        })],
    )
    summary = "\n".join(
        f"{k}: {v}" for k, v in report.as_dict().items()
    )
    persist.atomic_write_text(os.path.join(out, "validation_summary.txt"), summary + "\n")
    print(summary)
    return 0


def cmd_sobol(cfg, args) -> int:
    out = _outdir(cfg, args)
    if not args.model:
        raise ConfigError("sobol needs --model")
    model = persist.load_model(args.model)
    domain = model.partition.parent
    rows = []
    for j, local in enumerate(model.locals):
        try:
            first, total = sobol_indices(local.trend)
        except ValueError:
            continue
        for i in range(domain.ndim):
            rows.append([f"cell_{j}", i + 1, first[i], total[i]])
    pilot = multielement.fit_pilot(model, domain)
    first, total = sobol_indices(pilot)
    for i in range(domain.ndim):
        rows.append(["pooled", i + 1, first[i], total[i]])
    lines = ["scope,dimension,first_order,total"]
    for scope, dim, f, t in rows:
        lines.append(f"{scope},{dim},{f!r},{t!r}")
    persist.atomic_write_text(os.path.join(out, "sobol.csv"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_tds(cfg, args) -> int:
    out = _outdir(cfg, args)
    run = cfg.get("tds_run")
    if run is None:
        raise ConfigError("tds needs a 'tds_run' block")
    curve = models.tds_solve(
        _physics(run.get("physics")),
        models.TrapSet(run["traps"]["dH_bar"], run["traps"]["logN_bar"]),
        grid_nodes=run.get("grid_nodes", 201),
        T_bar_max=run.get("T_bar_max", 5.0),
        n_out=run.get("n_out", 200),
    )
    persist.write_flux_csv(os.path.join(out, "tds_flux.csv"), curve)
    persist.write_gnuplot_script(
        os.path.join(out, "tds_flux.gp"), "tds_flux.csv",
        "Desorption flux", "T/T_o", "J (nondimensional)",
    )
    if run.get("noisy", False):
        rng = np.random.default_rng(_seed(cfg, args))
        noisy, sd = models.synthetic_experiment(
            curve, rng, run.get("noise_factor", 0.4)
        )
        persist.write_csv(
            os.path.join(out, "tds_flux_noisy.csv"),
            ["T_bar", "J_bar"],
            zip(curve.T_bar, noisy),
        )
        logger.info("noise sd %.3e", sd)
    return 0


def tds_response(model, t_grid, n_traps=2):
    """theta -> flux vector on the temperature grid, through the surrogate."""
    t_grid = np.asarray(t_grid, dtype=float)
    g = t_grid.size

    def response(theta):
        X = np.empty((g, 1 + 2 * n_traps))
        X[:, 0] = t_grid
        X[:, 1:] = np.asarray(theta, dtype=float)[None, :]
        return model.predict_many(X)

    return response


def cmd_infer(cfg, args) -> int:
    out = _outdir(cfg, args)
    if not args.model or not args.data:
        raise ConfigError("infer needs --model and --data")
    model = persist.load_model(args.model)
    t_grid, j_obs = persist.read_flux_csv(args.data)
    dcfg = cfg.get("dram")
    if dcfg is None:
        raise ConfigError("infer needs a 'dram' block")
    d = len(dcfg["theta0"])
    problem = dram_mod.InferenceProblem(
        surrogate=tds_response(model, t_grid, n_traps=(d // 2)),
        observations=j_obs,
        sigma_eps=dcfg["sigma_eps"],
        prior_lower=dcfg["prior_lower"],
        prior_upper=dcfg["prior_upper"],
    )
    config = dram_mod.DramConfig(
        T=dcfg["T"],
        burn_in=dcfg.get("burn_in", 0),
        theta0=np.asarray(dcfg["theta0"], dtype=float),
        n0=dcfg.get("n0", 500),
        s_d=dcfg.get("s_d"),
        dr_gamma=dcfg.get("dr_gamma", 0.2),
        adapt_epsilon=dcfg.get("adapt_epsilon", 1e-10),
        seed=_seed(cfg, args),
    )
    t0 = time.perf_counter()
    chain = dram_mod.dram_sample(problem, config)
    logger.info("chain of %d in %.1fs", config.T, time.perf_counter() - t0)
    persist.write_chain_csv(os.path.join(out, "chain.csv"), chain)
    diag = dram_mod.chain_diagnostics(chain)
    persist.atomic_write_text(
        os.path.join(out, "diagnostics.txt"),
        json.dumps(diag, indent=1) + "\n",
    )
    post = chain.post_burn()
    hdr_table = {}
    for level in dcfg.get("hdr_levels", [0.5, 0.8]):
        for j in range(d):
            try:
                iv = dram_mod.hdr(post[:, j], level)
            except ValueError:
                iv = []
            hdr_table[(level, f"theta_{j + 1}")] = iv
    persist.write_hdr_csv(os.path.join(out, "hdr.csv"), hdr_table)
    return 0


def cmd_bench_dropwave(cfg, args) -> int:
    out = _outdir(cfg, args)
    scale = cfg.get("bench", {}).get("scale", 1.0)
    seed = _seed(cfg, args)
    domain = Domain([-10.0, -10.0], [10.0, 10.0])
    base_eds = [360, 720, 1440, 2880]
    partitions = {1: (1, 1), 2: (2, 2), 3: (3, 3)}
    vs_size = max(200, int(round(20_000 * scale)))
    rng = np.random.default_rng(seed + 999)
    X_val = domain.lower + rng.random((vs_size, 2)) * domain.widths
    y_val = models.dropwave_rows(X_val)
    rows = []
    for p_idx, counts in partitions.items():
        n_cells = counts[0] * counts[1]
        for e_idx, total in enumerate(base_eds, start=1):
            per_cell = max(10, int(round(total * scale / n_cells)))
            t0 = time.perf_counter()
            model = multielement.build(
                lambda x: models.dropwave(x[0], x[1]),
                domain,
                counts,
                per_cell_n=per_cell,
                rng=np.random.default_rng(seed + 13 * p_idx + e_idx),
                degrees=_degrees(cfg),
                q=_qnorm(cfg),
                ga_config=_ga(cfg),
            )
            t_c = time.perf_counter() - t0
            t0 = time.perf_counter()
            pred = model.predict_many(X_val)
            t_e_vs = time.perf_counter() - t0
            rep = metrics.compute_metrics(y_val, pred)
            rows.append(
                dict(
                    model=f"M{e_idx}^{p_idx}",
                    NAAE=rep.naae, NMAE=rep.nmae, NRMSE=rep.nrmse, R2=rep.r2,
                    t_c=t_c, t_e=t_e_vs / vs_size, t_e_VS=t_e_vs,
                )
            )
            logger.info("%s: R2=%.3f", rows[-1]["model"], rep.r2)
    persist.write_validation_csv(os.path.join(out, "bench_dropwave.csv"), rows)
    persist.write_gnuplot_script(
        os.path.join(out, "bench_dropwave.gp"), "bench_dropwave.csv",
        "Evaluation time vs error", "NRMSE", "t_e [s]", columns=(4, 7),
    )
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "build": cmd_build,
    "validate": cmd_validate,
    "sobol": cmd_sobol,
    "tds": cmd_tds,
    "infer": cmd_infer,
    "bench-dropwave": cmd_bench_dropwave,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mepck",
        description="Multi-element PCK surrogates and DRAM calibration",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--model", default=None, help="model file (validate/sobol/infer)")
    parser.add_argument("--data", default=None, help="observation CSV (infer)")
    parser.add_argument("--threads", type=int, default=None, help="thread budget hint")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s"
    )
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))

    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
