"""Command-line front end.

Commands: build, simulate, detect, sweep, optimize, cost-curve.
Exit codes: 0 success, 1 runtime/numeric failure, 2 config/validation failure.

Run configs are JSON::

    {"version": 1,
     "scenario": "illustrative",            # or "frontier", {"frontier_row": k},
                                            # "model", "model_path", "problem", "problem_path"
     "detector": {"h": 0.7, "c": 0.001, "horizon": 10000},
     "experiment": {...command specific...},
     "output": {"directory": "out", "formats": ["csv", "json"]},
     "seed": 7}
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import problems, scenarios
from .detector import DetectorConfig, outcome_from_trace, stopping_time
from .filter import FilterUnderflow, filter_run, read_observations_csv, write_trace_csv
from .model import AugmentedModel, ModelError, build_augmented, model_from_dict, model_to_dict
from .simulate import (SWEEP_COLUMNS, OptimizerConfig, _json_safe, cost_curve, monte_carlo,
                       optimize_threshold, sample_trajectory, write_rows_csv)

CONFIG_VERSION = 1
MODEL_SOURCES = ("scenario", "model", "model_path", "problem", "problem_path")


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_GRID = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1}
_EXPERIMENT_SCHEMAS = {
    "simulate": {"type": "object", "properties": {}, "additionalProperties": False},
    "detect": {"type": "object", "properties": {"observations": {"type": "string"}},
               "additionalProperties": False},
    "sweep": {"type": "object", "properties": {
        "h_grid": _GRID, "runs": {"type": "integer", "minimum": 1}, "crn": {"type": "boolean"}},
        "additionalProperties": False},
    "cost-curve": {"type": "object", "properties": {
        "h_grid": _GRID, "runs": {"type": "integer", "minimum": 1}, "crn": {"type": "boolean"}},
        "additionalProperties": False},
    "optimize": {"type": "object", "properties": {
        "n_steps": {"type": "integer", "minimum": 1}, "eta0": {"type": "number", "minimum": 0},
        "decay": _NUM, "delta": {"type": "number", "exclusiveMinimum": 0},
        "samples_per_eval": {"type": "integer", "minimum": 1},
        "h0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "sign": {"enum": [-1, 1]}, "crn": {"type": "boolean"},
        "curve_grid": _GRID, "curve_runs": {"type": "integer", "minimum": 1}},
        "additionalProperties": False},
}
CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "scenario": {"oneOf": [{"enum": ["illustrative", "frontier"]},
                               {"type": "object", "properties": {"frontier_row": {"type": "integer", "minimum": 1,
                                                                               "maximum": len(scenarios.FRONTIER_ROWS)}},
                                "required": ["frontier_row"], "additionalProperties": False}]},
        "model": {"type": "object"},
        "model_path": {"type": "string"},
        "problem": {"type": "object"},
        "problem_path": {"type": "string"},
        "detector": {"type": "object", "properties": {
            "h": {"type": "number", "minimum": 0, "maximum": 1},
            "c": {"type": "number", "minimum": 0},
            "horizon": {"type": "integer", "minimum": 1}}, "additionalProperties": False},
        "experiment": {"type": "object"},
        "output": {"type": "object", "properties": {
            "directory": {"type": "string"},
            "formats": {"type": "array", "items": {"enum": ["csv", "json"]}, "minItems": 1}},
            "additionalProperties": False},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    },
    "required": ["version"],
    "additionalProperties": False,
}


def _validate(doc, schema, prefix: str = "") -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        pointer = prefix + "/" + "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"{pointer}: {exc.message}") from None


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_config(path, command: str) -> dict:
    cfg = _read_json(path) if path else {"version": CONFIG_VERSION, "scenario": "illustrative"}
    _validate(cfg, CONFIG_SCHEMA)
    sources = [k for k in MODEL_SOURCES if k in cfg]
    if len(sources) != 1:
        raise ConfigError(f"/: exactly one model source required ({', '.join(MODEL_SOURCES)}), got {sources}")
    _validate(cfg.get("experiment", {}), _EXPERIMENT_SCHEMAS[command], "/experiment")
    if cfg.get("scenario") == "frontier" and command != "sweep":
        raise ConfigError("/scenario: 'frontier' batch mode is only available to sweep")
    base = Path(path).parent if path else Path(".")
    for key in ("model_path", "problem_path"):
        if key in cfg:
            cfg[key] = str(base / cfg[key])
    return cfg


def resolve_models(cfg: dict) -> list[tuple[str | None, AugmentedModel]]:
    """(tag, augmented model) pairs for the configured model source."""
    scen = cfg.get("scenario")
    if scen == "illustrative":
        return [(None, build_augmented(scenarios.illustrative_model()))]
    if scen == "frontier":
        return [(row.tag, build_augmented(scenarios.frontier_model(row))) for row in scenarios.FRONTIER_ROWS]
    if isinstance(scen, dict):
        return [(None, build_augmented(scenarios.frontier_model(scenarios.FRONTIER_ROWS[scen["frontier_row"] - 1])))]
    if "model" in cfg:
        return [(None, build_augmented(model_from_dict(cfg["model"])))]
    if "model_path" in cfg:
        return [(None, build_augmented(model_from_dict(_read_json(cfg["model_path"]))))]
    doc = cfg["problem"] if "problem" in cfg else _read_json(cfg["problem_path"])
    return [(None, build_augmented(problems.build(doc)))]


def _detector(cfg: dict, allow_zero_c: bool = False) -> tuple[float, float, int]:
    """(h, c, horizon) from the config; c = 0 is accepted only for cost sweeps."""
    d = cfg.get("detector", {})
    h = d.get("h", 0.7)
    c = d.get("c", scenarios.DELAY_PENALTY)
    horizon = d.get("horizon", scenarios.HORIZON)
    if not (allow_zero_c and c == 0):
        DetectorConfig(h, c, horizon)
    return h, c, horizon


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in cfg:
        return cfg["seed"]
    seed = secrets.randbits(63)
    print(f"seed: {seed}")
    return seed


def _outdir(args, cfg) -> Path:
    out = Path(args.out or cfg.get("output", {}).get("directory", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _formats(args, cfg) -> list[str]:
    if args.format:
        return [args.format]
    return cfg.get("output", {}).get("formats", ["csv", "json"])


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(_json_safe(doc), fh, indent=2)
        fh.write("\n")


# -- commands -------------------------------------------------------------------

def cmd_build(args) -> int:
    doc = _read_json(args.spec)
    if isinstance(doc, dict) and doc.get("kind") in problems.SPEC_SCHEMAS:
        model = problems.build(doc)
    elif isinstance(doc, dict) and "A_alpha" in doc:
        model = model_from_dict(doc)
    else:
        raise ConfigError(f"/kind: {args.spec} is neither a problem spec nor a model document")
    aug = build_augmented(model)
    text = json.dumps(model_to_dict(model), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    na, nb = model.spaces.n_alpha, model.spaces.n_beta
    nnz = int(np.count_nonzero(aug.a))
    print(f"N={na + nb} (n_alpha={na}, n_beta={nb}); nonzero transitions {nnz}/{aug.n ** 2}; "
          f"upper-right block zero: {not np.any(aug.a[:na, na:])}", file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, "simulate")
    (_, aug), = resolve_models(cfg)
    h, _, horizon = _detector(cfg)
    seed = _seed(args, cfg)
    out = _outdir(args, cfg)
    traj = sample_trajectory(aug, horizon, seed)
    outcome = outcome_from_trace(traj.m2, h, traj.nu, horizon)
    beliefs = filter_run(aug, traj.y)
    y2 = traj.y.reshape(traj.horizon, -1)
    rows = [{"k": k + 1, "state": int(s) + 1, "mode": 1 if s < aug.n_alpha else 2,
             **{("y" if y2.shape[1] == 1 else f"y{j + 1}"): float(v) for j, v in enumerate(y2[k])}}
            for k, s in enumerate(traj.states)]
    ycols = ["y"] if y2.shape[1] == 1 else [f"y{j + 1}" for j in range(y2.shape[1])]
    comment = f"# seed={seed} model={aug.digest()}"
    write_rows_csv(out / "trajectory.csv", rows, ["k", "state", "mode", *ycols], comment)
    with open(out / "trace.csv", "w", newline="") as fh:
        fh.write(comment + "\n")
        write_trace_csv(fh, traj.y, beliefs)
    nu = "none" if traj.nu is None else traj.nu
    if outcome.censored:
        print(f"nu={nu} tau=censored (no alarm by k={horizon}, h={h})")
    else:
        print(f"nu={nu} tau={outcome.tau} delay={outcome.delay} false_alarm={outcome.false_alarm}")
    return 0


def cmd_detect(args) -> int:
    cfg = load_config(args.config, "detect")
    (_, aug), = resolve_models(cfg)
    h, _, _ = _detector(cfg)
    path = args.observations or cfg.get("experiment", {}).get("observations")
    if not path:
        raise ConfigError("/experiment/observations: an observation CSV is required (or --observations)")
    try:
        ys = read_observations_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _outdir(args, cfg)
    beliefs = filter_run(aug, ys)
    trace = np.array([b.m2 for b in beliefs])
    with open(out / "trace.csv", "w", newline="") as fh:
        fh.write(f"# model={aug.digest()} h={h}\n")
        write_trace_csv(fh, ys, beliefs)
    tau = stopping_time(trace, h)
    if tau is None:
        print(f"no alarm in {len(trace) - 1} observations (h={h}, max statistic {trace.max():.6g})")
    else:
        print(f"alarm tau={tau} m2={trace[tau]:.6g} (h={h})")
    return 0


def _report_files(out: Path, stem: str, reports, formats) -> None:
    rows = [r for rep in reports for r in rep.rows]
    head = reports[0]
    if "csv" in formats:
        write_rows_csv(out / f"{stem}.csv", rows, SWEEP_COLUMNS, head.header_comment())
    if "json" in formats:
        doc = head.to_dict()
        doc["rows"] = [row for rep in reports for row in rep.to_dict()["rows"]]
        if len(reports) > 1:
            doc["model_digest"] = [rep.model_digest for rep in reports]
        _write_json(out / f"{stem}.json", doc)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, "sweep")
    exp = cfg.get("experiment", {})
    grid = exp.get("h_grid", [round(0.1 * i, 1) for i in range(1, 10)])
    _, c, horizon = _detector(cfg, allow_zero_c=True)
    seed = _seed(args, cfg)
    out = _outdir(args, cfg)
    reports = []
    for tag, aug in resolve_models(cfg):
        rep = monte_carlo(aug, grid, exp.get("runs", 1000), seed, c, horizon,
                          workers=args.workers, crn=exp.get("crn", True))
        if tag is not None:
            for r in rep.rows:
                r["tag"] = tag
        reports.append(rep)
        for r in rep.rows:
            print(f"{(tag or ''):>10} h={r['h']:.3f} ADD={r['add']:.2f}±{r['add_se']:.2f} "
                  f"PFA={r['pfa_stat']:.4f}±{r['pfa_se']:.4f} cost={r['cost']:.4f}±{r['cost_se']:.4f}")
    _report_files(out, "sweep", reports, _formats(args, cfg))
    return 0


def cmd_cost_curve(args) -> int:
    cfg = load_config(args.config, "cost-curve")
    exp = cfg.get("experiment", {})
    grid = exp.get("h_grid", [round(0.05 * i, 2) for i in range(1, 20)])
    (_, aug), = resolve_models(cfg)
    _, c, horizon = _detector(cfg, allow_zero_c=True)
    seed = _seed(args, cfg)
    out = _outdir(args, cfg)
    rep = cost_curve(aug, c, grid, exp.get("runs", 1000), seed, horizon,
                     crn=exp.get("crn", True), workers=args.workers)
    for r in rep.rows:
        print(f"h={r['h']:.3f} cost={r['cost']:.4f}±{r['cost_se']:.4f}")
    _report_files(out, "cost_curve", [rep], _formats(args, cfg))
    return 0


def cmd_optimize(args) -> int:
    cfg = load_config(args.config, "optimize")
    exp = dict(cfg.get("experiment", {}))
    (_, aug), = resolve_models(cfg)
    _, c, horizon = _detector(cfg)
    seed = _seed(args, cfg)
    out = _outdir(args, cfg)
    curve_grid = exp.pop("curve_grid", None)
    curve_runs = exp.pop("curve_runs", 1000)
    opt = OptimizerConfig(horizon=horizon, **exp)
    res = optimize_threshold(aug, c, opt, seed, workers=args.workers)
    formats = _formats(args, cfg)
    comment = f"# seed={seed} model={aug.digest()} c={c!r} horizon={horizon}"
    if "csv" in formats:
        res.to_csv(out / "optimizer_trace.csv", comment)
    summary = {"h_star": res.h_star, "phi_star": res.phi_star, "seed": seed, "c": c,
               "model_digest": aug.digest(), "config": {k: getattr(opt, k) for k in opt.__dataclass_fields__}}
    if "json" in formats:
        summary["trace"] = res.rows
    _write_json(out / "optimize.json", summary)
    if curve_grid:
        rep = cost_curve(aug, c, curve_grid, curve_runs, seed, horizon, workers=args.workers)
        _report_files(out, "cost_curve", [rep], formats)
    print(f"h*={res.h_star:.4f} (phi*={res.phi_star:.4f}) after {opt.n_steps} steps")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "cost-curve": cmd_cost_curve,
}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmmqcd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    b = sub.add_parser("build", help="compile a structured problem spec into a model JSON")
    b.add_argument("spec")
    b.add_argument("--out", help="output model JSON path (default: stdout)")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run config JSON (default: illustrative scenario)")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--workers", type=_positive, default=1)
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=["csv", "json"])
        if name == "detect":
            p.add_argument("--observations", help="observation CSV with header 'k, y...'")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "build":
            return cmd_build(args)
        return COMMANDS[args.command](args)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FilterUnderflow, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
