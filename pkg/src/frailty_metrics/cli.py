"""Command line: per-stage subcommands plus the composite ``run``.

Errors leave a single machine-parsable stderr record,
``ERROR <code> <stage> <detail>``, with exit code 2 for configuration
problems, 3 for data problems, and 4 for numerical failures.
"""

import argparse
import json
import sys
from pathlib import Path

from .cohort_io import Endpoint, build_design_matrix
from .discrepancy import (
    compute_discrepancy,
    discrepancy_csv,
    fit_ols,
    parse_discrepancy_csv,
)
from .errors import ConfigError, DataError, NumericError
from .pipeline import (
    LOS_LABELS,
    OS_LABELS,
    RunConfig,
    cv_predictions,
    external_predictions,
    load_cohort,
    run_pipeline,
    write_atomic,
)
from .predictor import load_predictions_file
from .report import forest_rows, render_forest_plot, render_hr_table, render_scatter
from .survival import SurvivalData, fit_cox
from .synth import SynthSpec, generate_cohort
from .views import Plane, dump_views, extract_views
from .volume_io import load_case

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _config_overrides(args) -> dict:
    return {
        "master_seed": args.seed,
        "ties": args.ties,
        "out_dir": args.out,
        "data_dir": args.data_dir,
        "cohort_csv": args.cohort_csv,
        "predictor": args.predictor,
        "predictions_csv": args.predictions_csv,
        "k": args.k,
        "repeats": args.repeats,
    }


def _add_config_flags(sub) -> None:
    sub.add_argument("--config", required=True, help="run configuration JSON")
    sub.add_argument("--seed", type=int, default=None, help="override master_seed")
    sub.add_argument("--ties", choices=["efron", "breslow"], default=None)
    sub.add_argument("--out", default=None, help="override out_dir")
    sub.add_argument("--data-dir", dest="data_dir", default=None)
    sub.add_argument("--cohort-csv", dest="cohort_csv", default=None)
    sub.add_argument("--predictor", choices=["baseline", "external"], default=None)
    sub.add_argument("--predictions-csv", dest="predictions_csv", default=None)
    sub.add_argument("--k", type=int, default=None)
    sub.add_argument("--repeats", type=int, default=None)


def cmd_run(args) -> None:
    config = RunConfig.from_json_file(args.config, _config_overrides(args))
    manifest = run_pipeline(config)
    _emit({"out_dir": config.out_dir,
           "files": [f["path"] for f in manifest["files"]]})


def cmd_synth(args) -> None:
    try:
        spec = SynthSpec.from_json(Path(args.spec).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read spec file: {exc}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad synth spec: {exc}") from exc
    result = generate_cohort(spec, args.out)
    _emit({"out_dir": str(result.out_dir), "cohort_csv": str(result.cohort_csv),
           "n_cases": len(result.case_ids),
           "achieved_censor_fraction": result.truth["achieved_censor_fraction"]})


def cmd_ingest(args) -> None:
    records, excluded = load_cohort(args.cohort_csv)
    checked = 0
    if args.data_dir:
        for rec in records:
            load_case(Path(args.data_dir) / rec.patient_id)
            checked += 1
    _emit({"patients_parsed": len(records) + len(excluded),
           "patients_kept": len(records),
           "excluded": [{"patient_id": pid, "reason": why} for pid, why in excluded],
           "cases_checked": checked})


def cmd_views(args) -> None:
    image, seg = load_case(Path(args.data_dir) / args.case_id)
    vs = extract_views(image, seg, case_id=args.case_id)
    if args.dump:
        dump_views(vs, f"{args.dump}.bin", f"{args.dump}.json")
    per_plane = {plane.value: sum(1 for v in vs.views if v.plane is plane)
                 for plane in Plane}
    _emit({"case_id": args.case_id, "n_views": len(vs),
           "views_per_plane": per_plane,
           "tumor_voxels": sum(v.tumor_voxels for v in vs.views),
           "weight_sum": float(vs.weights.sum())})


def cmd_cv(args) -> None:
    config = RunConfig.from_json_file(args.config, _config_overrides(args))
    records, _ = load_cohort(config.cohort_csv)
    records = sorted(records, key=lambda r: r.patient_id)
    if config.predictor == "external":
        table = external_predictions(config, records)
    else:
        table = cv_predictions(config, records)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "predictions.csv", table.to_csv_text().encode())
    _emit({"predictions_csv": str(out / "predictions.csv"), "patients": len(table)})


def cmd_discrepancy(args) -> None:
    table = load_predictions_file(args.predictions)
    disc = compute_discrepancy(table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "discrepancy.csv", discrepancy_csv(table, disc).encode())
    _emit({"discrepancy_csv": str(out / "discrepancy.csv"), "patients": len(table)})


def cmd_coxfit(args) -> None:
    records, _ = load_cohort(args.cohort_csv)
    records = sorted(records, key=lambda r: r.patient_id)
    disc = parse_discrepancy_csv(Path(args.discrepancy).read_text())
    endpoint = Endpoint(args.endpoint)
    design = build_design_matrix(records, endpoint, disc)
    result = fit_cox(SurvivalData(x=design.x, time=design.time,
                                  event=design.event, ties=args.ties))
    payload = {"endpoint": endpoint.value, "columns": list(design.columns),
               "ties": args.ties, **result.to_dict()}
    if args.out_json:
        write_atomic(Path(args.out_json),
                     (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())
    else:
        _emit(payload)


def cmd_report(args) -> None:
    records, _ = load_cohort(args.cohort_csv)
    records = sorted(records, key=lambda r: r.patient_id)
    table = load_predictions_file(args.predictions)
    ols = fit_ols(table.chronological_age, table.predicted_age)
    disc = compute_discrepancy(table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for endpoint, labels in ((Endpoint.LOS, LOS_LABELS), (Endpoint.OS, OS_LABELS)):
        design = build_design_matrix(records, endpoint, disc)
        result = fit_cox(SurvivalData(x=design.x, time=design.time,
                                      event=design.event, ties=args.ties))
        rendered = render_hr_table(result, list(labels))
        write_atomic(out / f"{endpoint.value}_table.csv", rendered.csv.encode())
        write_atomic(out / f"{endpoint.value}_forest.svg",
                     render_forest_plot(forest_rows(result, list(labels))).encode())
        print(rendered.text)
    write_atomic(out / "age_scatter.svg", render_scatter(table, ols).encode())
    _emit({"out_dir": str(out)})


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frailty-metrics",
        description="Imaging-derived age discrepancy and survival analysis")
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="full pipeline with artifact manifest")
    _add_config_flags(run)
    run.set_defaults(func=cmd_run)

    synth = subs.add_parser("synth", help="generate a synthetic cohort")
    synth.add_argument("--spec", required=True, help="synth spec JSON")
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_synth)

    ingest = subs.add_parser("ingest", help="validate cohort table and volumes")
    ingest.add_argument("--cohort-csv", dest="cohort_csv", required=True)
    ingest.add_argument("--data-dir", dest="data_dir", default=None)
    ingest.set_defaults(func=cmd_ingest)

    views = subs.add_parser("views", help="extract views for one case")
    views.add_argument("--data-dir", dest="data_dir", required=True)
    views.add_argument("--case-id", dest="case_id", required=True)
    views.add_argument("--dump", default=None,
                       help="write PREFIX.bin and PREFIX.json view dump")
    views.set_defaults(func=cmd_views)

    cv = subs.add_parser("cv", help="cross-validated predictions only")
    _add_config_flags(cv)
    cv.set_defaults(func=cmd_cv)

    disc = subs.add_parser("discrepancy", help="normalized residuals from predictions")
    disc.add_argument("--predictions", required=True)
    disc.add_argument("--out", required=True)
    disc.set_defaults(func=cmd_discrepancy)

    cox = subs.add_parser("coxfit", help="fit one endpoint's Cox model")
    cox.add_argument("--cohort-csv", dest="cohort_csv", required=True)
    cox.add_argument("--discrepancy", required=True)
    cox.add_argument("--endpoint", choices=["los", "os"], required=True)
    cox.add_argument("--ties", choices=["efron", "breslow"], default="efron")
    cox.add_argument("--out-json", dest="out_json", default=None)
    cox.set_defaults(func=cmd_coxfit)

    report = subs.add_parser("report", help="tables and figures from predictions")
    report.add_argument("--cohort-csv", dest="cohort_csv", required=True)
    report.add_argument("--predictions", required=True)
    report.add_argument("--out", required=True)
    report.add_argument("--ties", choices=["efron", "breslow"], default="efron")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        _error_record(EXIT_CONFIG, exc, args.command)
        return EXIT_CONFIG
    except NumericError as exc:
        _error_record(EXIT_NUMERIC, exc, args.command)
        return EXIT_NUMERIC
    except DataError as exc:
        _error_record(EXIT_DATA, exc, args.command)
        return EXIT_DATA
    except OSError as exc:
        _error_record(EXIT_DATA, exc, args.command)
        return EXIT_DATA
    return 0


def _error_record(code: int, exc: Exception, fallback_stage: str) -> None:
    stage = getattr(exc, "stage", None) or fallback_stage
    detail = " ".join(str(exc).split())
    print(f"ERROR {code} {stage} {detail}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
