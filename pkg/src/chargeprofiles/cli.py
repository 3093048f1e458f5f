"""Command-line front end.

Subcommands wire the pipeline end to end:

  synth      generate a synthetic scenario (sessions/sites/zsj CSVs + ground truth)
  train      ingest a data directory and fit the charging profile model
  predict    predict load curves for locations described by a ZSJ table
  analyze    run a demand-pattern report (groups, seasonality, weekday, window,
             timeline, shares)
  gradcheck  verify analytic gradients against central finite differences
  match      match a model's latent profiles against reference shapes

Exit codes: 0 success, 1 input error, 2 numeric fault, 3 I/O error. Output
files are written to a temp name and atomically renamed, so a failing command
leaves no partial outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import date
from pathlib import Path

import numpy as np

from . import analysis, ingest, model, optim, synth
from .errors import InputError, NumericFault

ANALYZE_KINDS = ("groups", "seasonality", "weekday", "window", "timeline", "shares")

GRAD_TOLERANCE = 1e-4


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _write_outputs(out_dir: Path, files: dict[str, bytes]) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, data in files.items():
        path = out_dir / name
        _atomic_write(path, data)
        written.append(path)
    return written


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _csv_bytes(rows: list[list]) -> bytes:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _load_json(path: Path):
    text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _read_data_dir(data_dir: Path):
    with open(data_dir / "sessions.csv", encoding="utf-8", newline="") as f:
        sessions, session_rejects = ingest.parse_sessions(f)
    with open(data_dir / "sites.csv", encoding="utf-8", newline="") as f:
        sites, site_rejects = ingest.parse_sites(f)
    zsj_path = data_dir / "zsj.csv"
    units = None
    if zsj_path.exists():
        with open(zsj_path, encoding="utf-8", newline="") as f:
            units = ingest.parse_zsj(f)
    return sessions, session_rejects, sites, site_rejects, units


def _parse_date_range(text: str) -> tuple[date, date]:
    try:
        a, b = text.split(":")
        return date.fromisoformat(a), date.fromisoformat(b)
    except ValueError:
        raise InputError(f"bad date range {text!r}; expected YYYY-MM-DD:YYYY-MM-DD") from None


def cmd_synth(args) -> int:
    doc = _load_json(Path(args.config)) if args.config else {}
    config = synth.ScenarioConfig.from_json_dict(doc)
    if args.seed is not None:
        config.seed = args.seed
        config.validate()
    scenario = synth.generate(config)
    out = Path(args.out)
    written = _write_outputs(out, {
        "sessions.csv": scenario.sessions_csv,
        "sites.csv": scenario.sites_csv,
        "zsj.csv": scenario.zsj_csv,
        "ground_truth.json": _json_bytes(scenario.ground_truth),
    })
    for path in written:
        print(path)
    return 0


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    sessions, session_rejects, sites, _, units = _read_data_dir(data_dir)
    if units is None:
        raise InputError(f"missing {data_dir / 'zsj.csv'}")
    if session_rejects:
        print(f"note: {len(session_rejects)} session rows rejected", file=sys.stderr)

    doc = _load_json(Path(args.config)) if args.config else {}
    config = optim.TrainConfig.from_json_dict(doc)
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.seed is not None:
        config.seed = args.seed
    if args.learning_rate is not None:
        config.learning_rate = args.learning_rate
    if args.k is not None:
        config.k = args.k
    config.validate()

    buckets = [ingest.parse_day_filter(b) for b in (args.buckets.split(",") if args.buckets else ["all"])]
    curve_sets = {
        ingest.day_filter_name(b): ingest.build_curves(sessions, sites, units, "charger", b)
        for b in buckets
    }
    dataset = ingest.build_dataset(curve_sets, sites, units)
    result = optim.train(dataset.samples, config)

    files = {
        "model.json": _json_bytes(model.params_to_json_dict(result.params)),
        "standardization.json": _json_bytes(dataset.standardization.to_json_dict()),
        "loss.csv": optim.loss_trace_csv(result.loss_trace).encode("utf-8"),
    }
    if args.emit_dataset:
        files["dataset.json"] = ingest.dataset_json_text(dataset).encode("utf-8")
    written = _write_outputs(Path(args.out), files)
    for path in written:
        print(path)
    print(f"final mean MSE: {result.loss_trace[-1]!r}")
    return 0


def cmd_predict(args) -> int:
    params = model.params_from_json_dict(_load_json(Path(args.model)))
    std_path = Path(args.standardization) if args.standardization else Path(args.model).parent / "standardization.json"
    standardization = ingest.Standardization.from_json_dict(_load_json(std_path))
    with open(args.features, encoding="utf-8", newline="") as f:
        units = ingest.parse_zsj(f)
    records = []
    for unit in units:
        x = ingest.build_features(unit, standardization)
        pred = model.forward(params, x)
        records.append({
            "zsj_id": unit.zsj_id,
            "category": unit.category,
            "mixture_weights": pred.mixture.tolist(),
            "peak_scale": pred.peak_scale,
            "shape": pred.shape.tolist(),
            "load": pred.load.tolist(),
        })
    out = Path(args.out)
    written = _write_outputs(out, {"predictions.json": _json_bytes(records)})
    for path in written:
        print(path)
    return 0


def _analyze_groups(args, sessions, sites, units) -> dict[str, bytes]:
    curve_set = ingest.build_curves(sessions, sites, units, args.group_by, "all")
    labels = {}
    rows = [["key", "label", "hour", "normalized_value"]]
    for key in sorted(curve_set.curves):
        normalized = analysis.normalize_max(curve_set.curves[key])
        label = analysis.classify_group(normalized)
        labels[key] = label.value
        for h in range(ingest.HOURS_PER_DAY):
            rows.append([key, label.value, h, repr(float(normalized.values[h]))])
    return {
        "groups.json": _json_bytes({"group_by": args.group_by, "groups": labels}),
        "groups.csv": _csv_bytes(rows),
    }


def _analyze_window(args, sessions, sites, units) -> dict[str, bytes]:
    if not args.window:
        raise InputError("kind=window requires --window YYYY-MM-DD:YYYY-MM-DD")
    window = _parse_date_range(args.window)
    if args.baseline:
        baselines = [_parse_date_range(b) for b in args.baseline]
    else:
        # Default baseline: the rest of the observed period around the window.
        from datetime import timedelta

        first = min(s.start.date() for s in sessions)
        last = max(s.start.date() for s in sessions)
        baselines = []
        if first < window[0]:
            baselines.append((first, window[0] - timedelta(days=1)))
        if last > window[1]:
            baselines.append((window[1] + timedelta(days=1), last))
        if not baselines:
            raise InputError("no data outside the window; pass --baseline explicitly")
    report = analysis.window_compare(sessions, window, baselines)
    return {
        "window.json": _json_bytes(report.to_json_dict()),
        "window.csv": _csv_bytes(report.to_csv_rows()),
    }


def cmd_analyze(args) -> int:
    if args.kind not in ANALYZE_KINDS:
        raise InputError(f"unknown report kind {args.kind!r}; valid kinds: {', '.join(ANALYZE_KINDS)}")
    data_dir = Path(args.data)
    sessions, _, sites, _, units = _read_data_dir(data_dir)

    if args.kind == "groups":
        files = _analyze_groups(args, sessions, sites, units)
    elif args.kind == "seasonality":
        report = analysis.seasonality_matrix(sessions)
        files = {
            "seasonality.json": _json_bytes(report.to_json_dict()),
            "seasonality.csv": _csv_bytes(report.to_csv_rows()),
        }
    elif args.kind == "weekday":
        report = analysis.weekday_weekend_compare(sessions, per_charger=args.per_charger)
        files = {
            "weekday.json": _json_bytes(report.to_json_dict()),
            "weekday.csv": _csv_bytes(report.to_csv_rows()),
        }
    elif args.kind == "window":
        files = _analyze_window(args, sessions, sites, units)
    elif args.kind == "timeline":
        points = analysis.total_load_timeline(sessions)
        files = {
            "timeline.json": _json_bytes(analysis.timeline_to_json_dict(points)),
            "timeline.csv": _csv_bytes(analysis.timeline_to_csv_rows(points)),
        }
    else:  # shares
        if units is None:
            raise InputError(f"missing {data_dir / 'zsj.csv'}")
        instances, installed = analysis.share_development(sessions, sites, units)
        files = {
            "shares.json": _json_bytes({
                "instances": instances.to_json_dict(),
                "installed": installed.to_json_dict(),
            }),
            "shares.csv": _csv_bytes(analysis.shares_csv_rows([instances, installed])),
        }

    written = _write_outputs(Path(args.out), files)
    for path in written:
        print(path)
    return 0


def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        raise InputError("trials must be >= 1")
    rng = np.random.Generator(np.random.PCG64(args.seed))
    scale = 2.0 if args.inject_fault else 1.0
    worst = 0.0
    for _ in range(args.trials):
        params, x, target = optim.random_trial(rng)
        err = optim.grad_check(params, x, target, step=args.step, gradient_scale=scale)
        worst = max(worst, err)
    print(f"max relative error over {args.trials} trials: {worst:.3e}")
    if worst > GRAD_TOLERANCE:
        raise NumericFault(f"gradient check failed: {worst:.3e} > {GRAD_TOLERANCE:.0e}")
    return 0


def cmd_match(args) -> int:
    params = model.params_from_json_dict(_load_json(Path(args.model)))
    if args.archetypes:
        doc = _load_json(Path(args.archetypes))
        try:
            names = [entry["name"] for entry in doc]
            shapes = np.asarray([entry["shape"] for entry in doc], dtype=np.float64)
        except (TypeError, KeyError, ValueError) as exc:
            raise InputError(f"bad archetypes file: {exc}") from exc
    else:
        names = synth.archetype_names()
        shapes = synth.archetype_shapes()
    if shapes.shape[0] != params.k:
        raise InputError(f"model has {params.k} latent profiles but {shapes.shape[0]} references given")
    if shapes.shape[1] != params.granularity:
        raise InputError("reference shapes do not match the model granularity")

    bank = model.latent_distributions(params.latent_logits)
    result = model.match_latents(bank, shapes)
    doc = {
        "archetype_names": names,
        "permutation": list(result.permutation),
        "similarities": list(result.similarities),
        "mean_similarity": result.mean_similarity,
    }
    written = _write_outputs(Path(args.out), {"match.json": _json_bytes(doc)})
    for path in written:
        print(path)
    for i, name in enumerate(names):
        print(f"{name}: latent row {result.permutation[i]}, cosine {result.similarities[i]:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chargeprofiles",
        description="Charging load curve modeling, analytics, and synthetic data pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--config", help="scenario config JSON (defaults used when omitted)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", default="data", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="ingest a data directory and train the model")
    p.add_argument("--data", required=True, help="directory with sessions.csv, sites.csv, zsj.csv")
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--k", type=int, help="latent profile count")
    p.add_argument("--buckets", help="comma-separated day filters, default 'all'")
    p.add_argument("--emit-dataset", action="store_true", help="also write dataset.json")
    p.add_argument("--out", default="model", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict load curves for locations")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--standardization", help="standardization sidecar (default: next to the model)")
    p.add_argument("--features", required=True, help="ZSJ attribute CSV of locations")
    p.add_argument("--out", default="predictions", help="output directory")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("analyze", help="run a demand-pattern report")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", required=True, help=f"one of: {', '.join(ANALYZE_KINDS)}")
    p.add_argument("--group-by", default="charger", choices=("charger", "zsj_category"), dest="group_by")
    p.add_argument("--per-charger", action="store_true", dest="per_charger")
    p.add_argument("--window", help="date range YYYY-MM-DD:YYYY-MM-DD (kind=window)")
    p.add_argument("--baseline", action="append", help="baseline date range, repeatable (kind=window)")
    p.add_argument("--out", default="reports", help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gradcheck", help="verify analytic gradients with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--inject-fault", action="store_true", dest="inject_fault",
                   help="scale analytic gradients by 2 to demonstrate checker sensitivity")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("match", help="match latent profiles against reference shapes")
    p.add_argument("--model", required=True)
    p.add_argument("--archetypes", help="JSON list of {name, shape}; defaults to the built-in four")
    p.add_argument("--out", default="reports", help="output directory")
    p.set_defaults(func=cmd_match)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
