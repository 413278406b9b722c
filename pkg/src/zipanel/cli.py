"""Command-line front end.

One subcommand per pipeline stage: ``simulate`` writes a synthetic panel
and its analytic truth; ``fit`` estimates the per-period mixtures and
saves a model bundle; ``effect`` and ``bootstrap`` produce effect CSVs
(the latter with percentile bands); ``placebo``, ``compare`` and
``select`` run the corresponding diagnostics.  All outputs are written
atomically and carry the config hash, seed and package version, so a
rerun with the same config and seed is byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from importlib.metadata import PackageNotFoundError, version as pkg_version

import numpy as np
import pandas as pd

from .bootstrap import BootstrapPlan, EffectTarget, bootstrap_effects
from .data import build_diff_samples, ingest_csv, panel_frame, trim
from .design import ModelFormula
from .diagnostics import (
    NeighborGraph,
    build_wd,
    fit_comparison_ladder,
    fit_spillover_model,
    ladder_to_frame,
    placebo_test,
)
from .effects import effects_to_frame, treatment_contrast
from .errors import ConfigError, ZipanelError
from .mixture import MixtureModel, load_bundle
from .selection import backward_select, kmedoids, profile_medoids
from .synth import Scenario, generate

logger = logging.getLogger(__name__)

try:
    VERSION = pkg_version("zipanel")
except PackageNotFoundError:  # running from a checkout
    VERSION = "0.0.0"


# ---------------------------------------------------------------------------
# provenance and atomic IO


def _config_hash(config):
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _atomic_write(path, writer):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-zipanel-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(frame, path, meta):
    def writer(fh):
        fh.write(
            f"# zipanel {meta['version']} config_hash={meta['config_hash']} "
            f"seed={meta['seed']}\n"
        )
        frame.to_csv(fh, index=False)

    _atomic_write(path, writer)
    logger.info("wrote %s", path)


def _write_json(payload, path, meta):
    body = {"meta": meta, **payload}

    def writer(fh):
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _atomic_write(path, writer)
    logger.info("wrote %s", path)


def read_output_csv(path):
    """Read back a provenance-stamped CSV written by this CLI."""
    return pd.read_csv(path, comment="#", float_precision="round_trip")


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None


def _require(config, key):
    if key not in config:
        raise ConfigError(f"config is missing required key {key!r}")
    return config[key]


def _load_dataset(config):
    path = _require(config, "data")
    if not os.path.exists(path):
        raise ConfigError(f"data file not found: {path}")
    data = ingest_csv(path, _require(config, "schema"))
    rules = config.get("trim", {})
    if rules:
        data = trim(data, rules)
    return data


def _formulas(config):
    zero = ModelFormula.from_dict(_require(config, "zero_formula"))
    cont = ModelFormula.from_dict(_require(config, "cont_formula"))
    return zero, cont


def _resolve_x(data, target):
    if "x" in target:
        return dict(target["x"]), target.get("unit")
    if "unit" in target:
        unit = str(target["unit"])
        where = np.flatnonzero(data.unit_ids.astype(str) == unit)
        if len(where) != 1:
            raise ConfigError(f"target unit {unit!r} not found in the dataset")
        row = data.covariates[where[0]]
        return dict(zip(data.covariate_names, row.tolist())), unit
    raise ConfigError("each target needs either 'x' or 'unit'")


def _targets(config, data):
    t0_index = config.get("t0_index", 0)
    post_periods = [int(t) for t in data.times[t0_index + 1 :]]
    out = []
    for raw in _require(config, "targets"):
        x, unit = _resolve_x(data, raw)
        periods = [int(p) for p in raw.get("periods", post_periods)]
        for period in periods:
            out.append(
                EffectTarget(
                    x=x,
                    treatment=raw["treatment"],
                    baseline=raw.get("baseline", 0),
                    period=period,
                    unit=unit,
                )
            )
    return out


def _meta(config, seed):
    return {
        "version": VERSION,
        "config_hash": _config_hash(config),
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    config = _load_config(args.config)
    scenario_dict = config.get("scenario", config)
    if args.seed is not None:
        scenario_dict = {**scenario_dict, "seed": args.seed}
    scenario = Scenario.from_dict(scenario_dict)
    data, _ = generate(scenario)
    meta = _meta(config, scenario.seed)

    frame, schema = panel_frame(data)
    _write_csv(frame, os.path.join(args.out, "data.csv"), meta)
    _write_json(
        {"scenario": scenario.to_dict(), "schema": schema},
        os.path.join(args.out, "truth.json"),
        meta,
    )
    return 0


def cmd_fit(args):
    config = _load_config(args.config)
    data = _load_dataset(config)
    zero, cont = _formulas(config)
    t0_index = config.get("t0_index", 0)
    fits = [
        MixtureModel(zero_formula=zero, cont_formula=cont).fit(s)
        for s in build_diff_samples(data, t0_index=t0_index)
    ]
    meta = _meta(config, config.get("seed", 0))
    meta["dataset_fingerprint"] = data.fingerprint()
    path = os.path.join(args.out, "model.json")
    _atomic_write(
        path,
        lambda fh: json.dump(
            {"metadata": meta, "periods": [f.to_dict() for f in fits]}, fh
        ),
    )
    logger.info("wrote %s", path)
    return 0


def cmd_effect(args):
    config = _load_config(args.config)
    data = _load_dataset(config)
    bundle_path = os.path.join(args.out, "model.json")
    if os.path.exists(bundle_path):
        fits, _ = load_bundle(bundle_path)
    else:
        zero, cont = _formulas(config)
        t0_index = config.get("t0_index", 0)
        fits = [
            MixtureModel(zero_formula=zero, cont_formula=cont).fit(s)
            for s in build_diff_samples(data, t0_index=t0_index)
        ]
    by_period = {f.period_: f for f in fits}
    estimates = []
    for tg in _targets(config, data):
        if tg.period not in by_period:
            raise ConfigError(f"target period {tg.period} has no fitted model")
        estimates.append(
            treatment_contrast(by_period[tg.period], tg.x, tg.treatment, tg.baseline,
                               unit=tg.unit)
        )
    frame = effects_to_frame(estimates)
    _write_csv(frame, os.path.join(args.out, "effects.csv"),
               _meta(config, config.get("seed", 0)))
    return 0


def cmd_bootstrap(args):
    config = _load_config(args.config)
    data = _load_dataset(config)
    zero, cont = _formulas(config)
    t0_index = config.get("t0_index", 0)
    boot_cfg = config.get("bootstrap", {})
    seed = args.seed if args.seed is not None else boot_cfg.get("seed", config.get("seed", 0))
    plan = BootstrapPlan(
        replicates=boot_cfg.get("replicates", 1000),
        seed=seed,
        quantiles=tuple(boot_cfg.get("quantiles", (0.025, 0.975))),
        reuse_lambda=args.fast_lambda or boot_cfg.get("reuse_lambda", False),
        workers=args.workers,
    )
    result = bootstrap_effects(
        data, zero, cont, plan, _targets(config, data), t0_index=t0_index
    )
    meta = _meta(config, seed)
    meta["fast_lambda"] = plan.reuse_lambda
    meta["replicates"] = plan.replicates
    meta["failed_replicates"] = result.n_failed
    frame = effects_to_frame(result.estimates)
    _write_csv(frame, os.path.join(args.out, "effects.csv"), meta)
    if args.dump_draws:
        draws = pd.DataFrame(
            result.draws,
            columns=[f"target_{j}" for j in range(result.draws.shape[1])],
        )
        _write_csv(draws, os.path.join(args.out, "draws.csv"), meta)
    return 0


def cmd_placebo(args):
    config = _load_config(args.config)
    data = _load_dataset(config)
    placebo_cfg = _require(config, "placebo")
    alpha = placebo_cfg.get("alpha", 0.05)
    treatment = _require(placebo_cfg, "treatment")
    rows = []
    for window in _require(placebo_cfg, "windows"):
        result = placebo_test(
            data,
            spec=window.get("spec", "before_after"),
            controls=window.get("controls", "covariates"),
            t0=window["t0"],
            t=window["t"],
            treatment=treatment,
            alpha_config=alpha,
        )
        rows.append(
            {
                "spec": result.spec,
                "controls": result.controls,
                "t0": result.t0,
                "t": result.t,
                "window": result.window,
                "treatment": result.treatment,
                "alpha_hat": result.alpha_hat,
                "se": result.se,
                "p_value": result.p_value,
                "passed": result.verdict,
            }
        )
    _write_csv(pd.DataFrame(rows), os.path.join(args.out, "placebo.csv"),
               _meta(config, config.get("seed", 0)))
    return 0


def cmd_compare(args):
    config = _load_config(args.config)
    data = _load_dataset(config)
    ladder_cfg = _require(config, "ladder")
    x, _ = _resolve_x(data, _require(ladder_cfg, "target"))
    profiles = fit_comparison_ladder(
        data,
        target_x=x,
        r=_require(ladder_cfg, "treatment"),
        interaction=tuple(_require(ladder_cfg, "interaction")),
        baseline=ladder_cfg.get("baseline", 0),
        t0_index=config.get("t0_index", 0),
    )
    _write_csv(ladder_to_frame(profiles), os.path.join(args.out, "ladder.csv"),
               _meta(config, config.get("seed", 0)))
    return 0


def cmd_select(args):
    config = _load_config(args.config)
    data = _load_dataset(config)
    meta = _meta(config, config.get("seed", 0))
    sel_cfg = config.get("selection")
    if sel_cfg:
        zero, cont = _formulas(config)
        for part in sel_cfg.get("parts", ["continuous", "zero"]):
            base = zero if part == "zero" else cont
            report = backward_select(
                data,
                base,
                part=part,
                threshold=sel_cfg.get("threshold", 0.01),
                force_include=tuple(sel_cfg.get("force_include", ())),
                t0_index=config.get("t0_index", 0),
            )
            _write_json(
                report.to_dict(), os.path.join(args.out, f"selection_{part}.json"), meta
            )
    med_cfg = config.get("medoids")
    if med_cfg:
        medoids = kmedoids(
            data.covariates,
            k=med_cfg.get("k", 4),
            standardize=med_cfg.get("standardize", True),
            unit_ids=data.unit_ids,
        )
        _write_json(medoids.to_dict(), os.path.join(args.out, "medoids.json"), meta)
        _write_csv(
            profile_medoids(data, medoids),
            os.path.join(args.out, "medoid_profile.csv"),
            meta,
        )
    if not sel_cfg and not med_cfg:
        raise ConfigError("select needs a 'selection' or 'medoids' config block")
    return 0


def cmd_spillover(args):
    config = _load_config(args.config)
    data = _load_dataset(config)
    edges = _require(config, "spillover_edges")
    if not os.path.exists(edges):
        raise ConfigError(f"edge list not found: {edges}")
    graph = NeighborGraph.from_csv(edges)
    wd = build_wd(data, graph)
    spill_cfg = config.get("spillover", {})
    interaction = spill_cfg.get("interaction")
    _, table = fit_spillover_model(
        data,
        wd,
        interaction=tuple(interaction) if interaction else None,
        t0_index=config.get("t0_index", 0),
    )
    meta = _meta(config, config.get("seed", 0))
    counts = pd.Series(wd).value_counts().to_dict()
    meta["wd_counts"] = {str(k): int(v) for k, v in counts.items()}
    _write_csv(table, os.path.join(args.out, "spillover.csv"), meta)
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="zipanel",
        description="Zero-inflated semi-parametric panel treatment effects",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, **extra_flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=1, help="parallel workers")
        p.add_argument(
            "--fast-lambda",
            action="store_true",
            help="reuse the original smoothing parameters in resamples",
        )
        if extra_flags.get("dump_draws"):
            p.add_argument(
                "--dump-draws", action="store_true", help="also write replicate draws"
            )
        p.set_defaults(fn=fn)
        return p

    add("simulate", cmd_simulate, "write a synthetic panel and its analytic truth")
    add("fit", cmd_fit, "fit per-period mixtures and save the model bundle")
    add("effect", cmd_effect, "counterfactual effects at the configured targets")
    add("bootstrap", cmd_bootstrap, "effects with percentile bands", dump_draws=True)
    add("placebo", cmd_placebo, "pre/post-program placebo tests")
    add("compare", cmd_compare, "benchmark-model ladder at one target")
    add("select", cmd_select, "backward variable selection and k-medoids")
    add("spillover", cmd_spillover, "neighbor-treatment spillover fits")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if not hasattr(args, "dump_draws"):
        args.dump_draws = False
    try:
        os.makedirs(args.out, exist_ok=True)
        return args.fn(args)
    except ZipanelError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
