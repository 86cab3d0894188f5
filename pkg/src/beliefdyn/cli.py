"""Command-line entry point: simulate, fit, predict, test, report.

Exit codes: 0 ok, 2 data error, 3 fit error, 4 coverage error, 5 render error.
"""

import argparse
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import dataio, inference, models, report, stats
from .exceptions import ConfigurationError, DataValidationError, ParameterDomainError

logger = logging.getLogger("beliefdyn")

EXIT_OK, EXIT_DATA, EXIT_FIT, EXIT_COVERAGE, EXIT_RENDER = 0, 2, 3, 4, 5
SCHEMA_VERSION = 1

# illustrative generating parameters per coherence level, inside the fitting box
DEFAULT_GENERATORS = {
    models.MARKOV: {2: {"mu": 0.45, "gamma": 6.0}, 4: {"mu": 0.4, "gamma": 7.0},
                    8: {"mu": 0.3, "gamma": 8.0}, 16: {"mu": 0.2, "gamma": 9.0}},
    models.QUANTUM: {2: {"mu": 1.0, "sigma": 5.0}, 4: {"mu": 3.0, "sigma": 6.0},
                     8: {"mu": 6.0, "sigma": 8.0}, 16: {"mu": 10.0, "sigma": 10.0}},
    models.MARKOV_V: {2: {"upsilon": 0.45, "gamma": 6.0}, 4: {"upsilon": 0.4, "gamma": 7.0},
                      8: {"upsilon": 0.3, "gamma": 8.0}, 16: {"upsilon": 0.2, "gamma": 9.0}},
}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# -- schemas ----------------------------------------------------------------------

_NUM = {"type": "number"}
_TABLE = {"type": "array", "minItems": 3, "maxItems": 3,
          "items": {"type": "array", "minItems": 3, "maxItems": 3, "items": _NUM}}
_TIMINGS = {"type": "object", "additionalProperties": {
    "type": "array", "minItems": 2, "maxItems": 2, "items": _NUM}}


def _envelope(name, body):
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": f"beliefdyn/{name}",
        "type": "object",
        "required": ["schema", "schema_version"] + list(body),
        "properties": {
            "schema": {"const": f"beliefdyn/{name}"},
            "schema_version": {"const": SCHEMA_VERSION},
            **body,
        },
    }


SCHEMAS = {
    "fits": _envelope("fits", {
        "timings": _TIMINGS,
        "fits": {"type": "array", "items": {
            "type": "object",
            "required": ["participant", "coherence", "family", "params", "log_likelihood", "g2", "converged"],
            "properties": {
                "participant": {"type": "string"},
                "coherence": {"type": "integer"},
                "family": {"enum": list(models.FAMILIES)},
                "params": {"type": "object", "additionalProperties": _NUM},
                "log_likelihood": _NUM, "g2": _NUM,
                "n_iter": {"type": "integer"}, "n_eval": {"type": "integer"},
                "converged": {"type": "boolean"}, "message": {"type": "string"},
            },
        }},
    }),
    "generalization": _envelope("generalization", {
        "timing": {"type": "object", "required": ["t1", "t2"]},
        "cells": {"type": "array", "items": {
            "type": "object",
            "required": ["participant", "coherence", "observed", "predicted", "g2", "g2_diff"],
            "properties": {"observed": _TABLE,
                           "predicted": {"type": "object", "additionalProperties": _TABLE}},
        }},
        "summary": {"type": "object"},
    }),
    "analysis": _envelope("analysis", {
        "interference": {"type": "object"},
        "joint": {"type": "object"},
        "hotelling": {"type": "object"},
    }),
}


def _dump(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


# -- argument helpers ---------------------------------------------------------------

def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()] if text else []


def _families(text, single=False):
    fams = [x.strip() for x in text.split(",") if x.strip()]
    bad = [f for f in fams if f not in models.FAMILIES]
    if bad:
        raise CliError(EXIT_DATA, f"unknown model family {bad}; choose from {models.FAMILIES}")
    if single and len(fams) != 1:
        raise CliError(EXIT_DATA, "exactly one generating model is required")
    return fams


def _timings(args):
    if not args.timings:
        return dict(models.DEFAULT_TIMINGS)
    raw = json.loads(Path(args.timings).read_text(encoding="utf-8"))
    try:
        return {int(k): models.TimingPair(float(v[0]), float(v[1])) for k, v in raw.items()}
    except (ValueError, TypeError, IndexError) as exc:
        raise CliError(EXIT_DATA, f"invalid timings file: {exc}") from exc


def _timings_json(timings):
    return {str(k): [tp.t1, tp.t2] for k, tp in sorted(timings.items())}


def _load_trials(args, timings):
    try:
        trials = dataio.read_trials_csv(args.trials, timings, skip_invalid=args.skip_invalid)
    except DataValidationError as exc:
        raise CliError(EXIT_DATA, str(exc)) from exc
    except OSError as exc:
        raise CliError(EXIT_DATA, f"cannot read {args.trials}: {exc}") from exc
    return dataio.filter_trials(trials, _int_list(args.coherence))


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_fits(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("schema") != "beliefdyn/fits":
            raise ValueError("not a beliefdyn fits file")
        return doc, [inference.FitResult.from_dict(d) for d in doc["fits"]]
    except (OSError, ValueError, KeyError, ParameterDomainError) as exc:
        raise CliError(EXIT_DATA, f"cannot load fits from {path}: {exc}") from exc


# -- subcommands --------------------------------------------------------------------

def _generator_params(args, family):
    """Return ``params_for(participant, coherence)`` from defaults or a JSON config."""
    table = {c: dict(v) for c, v in DEFAULT_GENERATORS[family].items()}
    per_participant = {}
    if args.params:
        cfg = json.loads(Path(args.params).read_text(encoding="utf-8"))
        if cfg.get("family", family) != family:
            raise CliError(EXIT_DATA, f"params file is for {cfg['family']}, generator is {family}")
        for c, v in cfg.get("coherence", {}).items():
            table[int(c)] = v
        for p, levels in cfg.get("participants", {}).items():
            per_participant[str(p)] = {int(c): v for c, v in levels.items()}

    def params_for(participant, coherence):
        values = per_participant.get(participant, {}).get(coherence, table[coherence])
        return models.make_params(family, values)

    return params_for


def cmd_simulate(args):
    family = _families(args.model or models.QUANTUM, single=True)[0]
    timings = _timings(args)
    levels = _int_list(args.coherence) or list(dataio.COHERENCE_LEVELS)
    participants = [f"p{i + 1:02d}" for i in range(args.participants)]
    try:
        params_for = _generator_params(args, family)
        for p in participants:
            for c in levels:
                params_for(p, c)
    except (ParameterDomainError, KeyError, ValueError, TypeError) as exc:
        raise CliError(EXIT_DATA, f"invalid generating parameters: {exc}") from exc
    trials = dataio.simulate_corpus(params_for, participants, args.trials_per_cell, args.seed,
                                    timings=timings, coherence_levels=levels,
                                    conditions=sorted(timings))
    path = _out_dir(args) / "trials.csv"
    dataio.write_trials_csv(trials, path)
    logger.info("wrote %d trials to %s", len(trials), path)
    return EXIT_OK


def cmd_fit(args):
    timings = _timings(args)
    families = _families(args.model or f"{models.MARKOV},{models.QUANTUM}")
    cells = dataio.counts_by_cell(dataio.aggregate(_load_trials(args, timings)))
    fits = []
    for (p, coh) in sorted(cells, key=lambda k: (str(k[0]), k[1])):
        by_cond = cells[(p, coh)]
        calib = {c: by_cond[c] for c in models.CALIBRATION_CONDITIONS if c in by_cond}
        if len(calib) < len(models.CALIBRATION_CONDITIONS):
            logger.warning("participant %s coherence %s lacks calibration conditions; skipped", p, coh)
            continue
        for fam in families:
            fits.append(inference.fit(fam, calib, timings, participant=p, coherence=coh))
    doc = {
        "schema": "beliefdyn/fits", "schema_version": SCHEMA_VERSION,
        "timings": _timings_json(timings),
        "fits": [f.to_dict() for f in fits],
    }
    _dump(doc, _out_dir(args) / "fits.json")
    bad = [f for f in fits if not f.converged]
    if bad and not args.allow_nonconverged:
        names = ", ".join(f"{f.participant}/{f.coherence}/{f.family}" for f in bad)
        raise CliError(EXIT_FIT, f"non-converged fits: {names}")
    return EXIT_OK


def cmd_predict(args):
    doc, fits = _load_fits(args.fits)
    timings = _timings(args) if args.timings else {
        int(k): models.TimingPair(*v) for k, v in doc.get("timings", {}).items()
    } or dict(models.DEFAULT_TIMINGS)
    cond = models.GENERALIZATION_CONDITION
    families = set(_families(args.model)) if args.model else None
    if families:
        fits = [f for f in fits if f.family in families]
    cells = dataio.counts_by_cell(dataio.aggregate(_load_trials(args, timings)))
    heldout = {k: v[cond] for k, v in cells.items() if cond in v}
    try:
        rep = inference.generalization_test(fits, heldout, timings[cond])
    except ConfigurationError as exc:
        raise CliError(EXIT_COVERAGE, str(exc)) from exc
    out = {"schema": "beliefdyn/generalization", "schema_version": SCHEMA_VERSION, **rep.to_dict()}
    _dump(out, _out_dir(args) / "generalization.json")
    return EXIT_OK


def _mean_change(trials, participants, levels):
    """Per participant: mean (rating2 - rating1) per coherence, averaged over conditions."""
    out = {}
    for p in participants:
        vec = []
        for c in levels:
            per_cond = []
            for cond in sorted({t.condition for t in trials}):
                d = [dataio.rescore(t.rating2, t.direction) - dataio.rescore(t.rating1, t.direction)
                     for t in trials if t.participant == p and t.coherence_pct == c and t.condition == cond]
                if d:
                    per_cond.append(np.mean(d))
            vec.append(float(np.mean(per_cond)) if per_cond else float("nan"))
        out[p] = vec
    return out


def cmd_test(args):
    timings = _timings(args)
    trials = _load_trials(args, timings)
    cells = dataio.counts_by_cell(dataio.aggregate(trials))
    participants = sorted({p for p, _ in cells}, key=str)
    levels = sorted({c for _, c in cells})

    interference = {}
    for c in levels:
        first, second = {}, {}
        for p in participants:
            by_cond = cells.get((p, c), {})
            first[p] = by_cond[1].sum(axis=0) if 1 in by_cond else np.zeros(3)
            second[p] = by_cond[2].sum(axis=1) if 2 in by_cond else np.zeros(3)
        interference[str(c)] = stats.g2_marginal_test(first, second).to_dict()

    def pooled(cond):
        out = {}
        for p in participants:
            tabs = [cells[(p, c)][cond] for c in levels if cond in cells.get((p, c), {})]
            out[p] = np.sum(tabs, axis=0) if tabs else np.zeros((3, 3))
        return out

    joint = {
        "1_vs_3": stats.g2_joint_test(pooled(1), pooled(3)).to_dict(),
        "2_vs_3": stats.g2_joint_test(pooled(2), pooled(3)).to_dict(),
    }

    changes = _mean_change(trials, participants, levels)
    try:
        if any(np.isnan(v).any() for v in changes.values()):
            raise ValueError("some participant lacks trials at a coherence level")
        hot = stats.hotelling_change_test(changes, labels=[str(c) for c in levels]).to_dict()
    except (ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("Hotelling test skipped: %s", exc)
        hot = {"name": "hotelling_change", "skipped": str(exc)}

    doc = {"schema": "beliefdyn/analysis", "schema_version": SCHEMA_VERSION,
           "interference": interference, "joint": joint, "hotelling": hot}
    _dump(doc, _out_dir(args) / "analysis.json")
    return EXIT_OK


def _render_report(trials, fits, timings, target):
    cells = dataio.counts_by_cell(dataio.aggregate(trials))
    levels = sorted({c for _, c in cells})
    times = np.linspace(0.0, max(tp.t2 for tp in timings.values()), 51)
    cond = models.GENERALIZATION_CONDITION
    md = ["# Observed and predicted joint distributions", ""]
    for c in levels:
        fams = sorted({f.family for f in fits if f.coherence == c})
        for fam in fams or [models.MARKOV, models.QUANTUM]:
            if fams:
                vals = np.array([list(models.params_to_dict(f.params).values())
                                 for f in fits if f.coherence == c and f.family == fam])
                params = models.make_params(fam, vals.mean(axis=0))
            else:
                params = models.make_params(fam, DEFAULT_GENERATORS[fam][c] if c in DEFAULT_GENERATORS[fam]
                                            else DEFAULT_GENERATORS[fam][2])
            report.heatmap_svg(report.state_density(params, times), times,
                               target / f"heatmap_{fam}_coh{c}.svg", title=f"{fam}, coherence {c}%")
        obs = [v[cond] for (p, cc), v in sorted(cells.items(), key=lambda kv: str(kv[0][0])) if cc == c and cond in v]
        blocks = {"Obs": report.average_tables(obs)}
        for fam in fams:
            preds = [models.joint_table(f.params, timings[cond]) for f in fits if f.coherence == c and f.family == fam]
            blocks[fam] = report.average_tables(preds)
        report.tables_csv(blocks, target / f"tables_coh{c}.csv")
        md.append(report.tables_markdown(blocks, title=f"Coherence {c}%"))
        first, second = report.interference_ratings(trials, c)
        if first and second:
            report.rating_bars_svg(first, second, target / f"ratings_coh{c}.svg", title=f"coherence {c}%")
    (target / "tables.md").write_text("\n".join(md), encoding="utf-8")


def cmd_report(args):
    timings = _timings(args)
    trials = _load_trials(args, timings)
    fits = _load_fits(args.fits)[1] if args.fits else []
    target = Path(args.out) / "report"
    if target.exists():
        shutil.rmtree(target)
    if not trials:
        target.mkdir(parents=True)
        logger.warning("no trials left after filtering; report is empty")
        return EXIT_OK
    Path(args.out).mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".report-", dir=args.out))
    try:
        _render_report(trials, fits, timings, staging)
    except Exception as exc:  # noqa: BLE001 - any render failure maps to exit 5
        shutil.rmtree(staging, ignore_errors=True)
        raise CliError(EXIT_RENDER, f"report rendering failed: {exc}") from exc
    staging.rename(target)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--coherence", default="", help="comma-separated coherence filter, e.g. 2,4")
    common.add_argument("--model", default="", help="comma-separated families: markov,quantum,markov_v")
    common.add_argument("--skip-invalid", action="store_true", help="drop invalid CSV rows instead of failing")
    common.add_argument("--allow-nonconverged", action="store_true")
    common.add_argument("--timings", default="", help='JSON file {"1": [t1, t2], ...} overriding condition timings')
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="beliefdyn", description=__doc__.splitlines()[0])
    parser.add_argument("--print-schema", action="store_true", help="print the JSON output schemas and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic trials CSV")
    p.add_argument("--participants", type=int, default=11)
    p.add_argument("--trials-per-cell", type=int, default=84)
    p.add_argument("--params", default="", help="JSON generating parameters per coherence/participant")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="calibrate models on conditions 1 and 2")
    p.add_argument("trials")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="score fitted models on condition 3")
    p.add_argument("fits")
    p.add_argument("trials")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("test", parents=[common], help="interference, joint and Hotelling tests")
    p.add_argument("trials")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("report", parents=[common], help="heatmaps, tables and rating charts")
    p.add_argument("trials")
    p.add_argument("--fits", default="")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_schema:
        print(json.dumps(SCHEMAS, indent=2, sort_keys=True))
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        logger.error("%s", exc)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
