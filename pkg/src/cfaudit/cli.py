"""Command-line front door: train, explain, audit, serve.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error,
3 infeasible search space. The environment variable CERTIFAI_SEED
supplies the default seed for any command that accepts --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .audit import (
    audit_fairness,
    audit_robustness,
    burden,
    feature_importance,
    individual_fairness,
    render_report,
)
from .dataset import load_csv
from .engine import (
    Constraints,
    GAConfig,
    constraints_from_dict,
    generate_counterfactuals,
    result_to_dict,
)
from .errors import (
    AuditError,
    ConstraintError,
    DataError,
    DistanceError,
    InfeasibleSpaceError,
    InstanceValidationError,
    SchemaError,
    TrainingError,
)
from .predictors import ModelConfig, load_model, save_model, train
from .schema import load_schema

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3

_VALIDATION_ERRORS = (
    SchemaError,
    InstanceValidationError,
    ConstraintError,
    DataError,
    DistanceError,
    TrainingError,
    AuditError,
    ValueError,
)


def _default_seed() -> int:
    raw = os.environ.get("CERTIFAI_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"CERTIFAI_SEED must be an integer, got {raw!r}") from None


def _add_seed(parser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (default: $CERTIFAI_SEED or 0)")


def _resolve_seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfaudit",
        description="Counterfactual explanations and model audits for "
                    "black-box classifiers.",
        epilog="exit codes: 0 ok, 1 runtime error, 2 usage/validation "
               "error, 3 infeasible search space",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a built-in model on a CSV")
    p_train.add_argument("--schema", required=True, help="schema JSON path")
    p_train.add_argument("--data", required=True, help="training CSV path")
    p_train.add_argument("--model", required=True,
                         help="model kind: logreg, mlp, or dtree")
    p_train.add_argument("--out", required=True, help="model artifact output path")
    p_train.add_argument("--hidden", default="16",
                         help="mlp hidden layer sizes, comma separated")
    p_train.add_argument("--lr", type=float, default=0.1, help="learning rate")
    p_train.add_argument("--epochs", type=int, default=200)
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--max-depth", type=int, default=6)
    p_train.add_argument("--min-leaf", type=int, default=1)
    p_train.add_argument("--test-fraction", type=float, default=0.2)
    _add_seed(p_train)

    p_explain = sub.add_parser("explain", help="generate counterfactuals for one instance")
    p_explain.add_argument("--model", required=True, help="model artifact path")
    source = p_explain.add_mutually_exclusive_group(required=True)
    source.add_argument("--instance", help="instance as a JSON array in schema order")
    source.add_argument("--row", type=int, help="row index into --data")
    p_explain.add_argument("--data", help="CSV to take --row from")
    p_explain.add_argument("--constraints", help="constraints JSON file")
    p_explain.add_argument("--k", type=int, default=1, help="number of counterfactuals")
    p_explain.add_argument("--target", help="require this predicted class")
    p_explain.add_argument("--generations", type=int, default=None)
    p_explain.add_argument("--population", type=int, default=None)
    p_explain.add_argument("--format", choices=("json", "table"), default="json")
    _add_seed(p_explain)

    p_audit = sub.add_parser("audit", help="run a model audit over a dataset")
    p_audit.add_argument("kind", choices=("robustness", "burden", "importance", "fairness"))
    p_audit.add_argument("--model", required=True, help="model artifact path")
    p_audit.add_argument("--data", required=True, help="dataset CSV path")
    p_audit.add_argument("--sample", type=int, default=None,
                         help="cap on audited rows (seeded subsample)")
    p_audit.add_argument("--per-class", type=int, default=None,
                         help="audit this many rows per class instead of --sample")
    p_audit.add_argument("--all-rows", action="store_true",
                         help="audit every row, not just the held-out split")
    p_audit.add_argument("--include-misclassified", action="store_true",
                         help="also audit rows the model gets wrong")
    p_audit.add_argument("--group", help="burden: comma-separated grouping features")
    p_audit.add_argument("--protected", help="fairness: comma-separated protected features")
    p_audit.add_argument("--instance", type=int, default=None,
                         help="fairness: probe a single dataset row")
    p_audit.add_argument("--threshold", type=float, default=0.05,
                         help="fairness: relative fitness delta that flags the model")
    p_audit.add_argument("--generations", type=int, default=None)
    p_audit.add_argument("--population", type=int, default=None)
    p_audit.add_argument("--format", choices=("json", "table", "csv"), default="json")
    p_audit.add_argument("--out", help="also write the JSON report to this path")
    _add_seed(p_audit)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--preload", action="append", default=[],
                         help="model artifact to load at startup (repeatable)")
    p_serve.add_argument("--preload-data", action="append", default=[],
                         help="schema.json:data.csv pair to load at startup (repeatable)")
    p_serve.add_argument("--snapshot", help="write session snapshot JSON here on shutdown")
    p_serve.add_argument("--budget", type=float, default=60.0,
                         help="per-request time budget in seconds")
    return parser


def _ga_config(args, seed: int) -> GAConfig:
    kwargs = {"seed": seed}
    if getattr(args, "generations", None) is not None:
        kwargs["generations"] = args.generations
    if getattr(args, "population", None) is not None:
        kwargs["population_size"] = args.population
    return GAConfig(**kwargs)


def cmd_train(args) -> int:
    if args.model not in ("logreg", "mlp", "dtree"):
        print(f"unsupported model {args.model!r}; choose logreg, mlp, or dtree",
              file=sys.stderr)
        return EXIT_USAGE
    schema = load_schema(args.schema)
    dataset = load_csv(args.data, schema)
    hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip())
    config = ModelConfig(
        kind=args.model, hidden=hidden, learning_rate=args.lr, epochs=args.epochs,
        batch_size=args.batch_size, max_depth=args.max_depth, min_leaf=args.min_leaf,
        test_fraction=args.test_fraction, seed=_resolve_seed(args),
    )
    predictor, accuracy = train(dataset, config)
    save_model(args.out, predictor, dataset.stats, accuracy)
    print(f"wrote {args.out}")
    print(f"test accuracy: {accuracy:.4f}")
    return EXIT_OK


def _load_instance(args, schema):
    if args.instance is not None:
        try:
            values = json.loads(args.instance)
        except json.JSONDecodeError as exc:
            raise InstanceValidationError([("*", f"instance is not valid JSON: {exc}")])
        if not isinstance(values, list):
            raise InstanceValidationError([("*", "instance must be a JSON array")])
        return schema.validate_instance(values)
    if args.data is None:
        raise InstanceValidationError([("*", "--row needs --data")])
    dataset = load_csv(args.data, schema)
    if not (0 <= args.row < len(dataset.rows)):
        raise InstanceValidationError(
            [("*", f"row {args.row} out of range (dataset has {len(dataset.rows)} rows)")]
        )
    return dataset.instances()[args.row]


def _render_explain_table(payload: dict) -> str:
    lines = [f"input class: {payload['input_class']}"]
    for rank, cf in enumerate(payload["counterfactuals"], start=1):
        lines.append("")
        lines.append(
            f"counterfactual {rank}: class={cf['class']} "
            f"distance={cf['distance']:.6g} fitness={cf['fitness']:.6g}"
        )
        rows = [("feature", "input", "counterfactual")]
        for change in cf["changed"]:
            rows.append((change["feature"], _fmt(change["from"]), _fmt(change["to"])))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        for row in rows:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    for warning in payload["warnings"]:
        lines.append(f"warning: {warning}")
    return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def cmd_explain(args) -> int:
    predictor, stats, _ = load_model(args.model)
    schema = predictor.schema
    x = _load_instance(args, schema)

    constraint_obj = {}
    if args.constraints:
        with open(args.constraints, encoding="utf-8") as fh:
            constraint_obj = json.load(fh)
    constraints = constraints_from_dict(schema, constraint_obj)
    patch = {"k": args.k}
    if args.target is not None:
        patch["target_class"] = args.target
    constraints = constraints_from_dict(schema, patch, base=constraints)

    config = _ga_config(args, _resolve_seed(args))
    result = generate_counterfactuals(x, predictor, schema, stats,
                                      constraints=constraints, config=config)
    payload = result_to_dict(result, schema)
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        sys.stdout.write(_render_explain_table(payload))
    return EXIT_OK


def _per_class_indices(predictor, dataset, per_class: int, seed: int,
                       only_correct: bool, use_heldout: bool) -> list:
    """Seeded pick of up to per_class rows for each class label."""
    heldout = getattr(predictor, "heldout_indices", ()) if use_heldout else ()
    candidates = [i for i in heldout if 0 <= i < len(dataset.rows)] or list(range(len(dataset.rows)))
    labels = dataset.labels()
    if only_correct:
        instances = dataset.instances()
        predicted = predictor.predict_batch([instances[i] for i in candidates])
        candidates = [i for i, pred in zip(candidates, predicted) if pred == labels[i]]
    rng = np.random.default_rng(seed)
    chosen = []
    for cls in dataset.schema.classes:
        members = [i for i in candidates if labels[i] == cls]
        if len(members) > per_class:
            picks = rng.choice(len(members), size=per_class, replace=False)
            members = [members[j] for j in picks]
        chosen.extend(members)
    return sorted(chosen)


def cmd_audit(args) -> int:
    predictor, stats, _ = load_model(args.model)
    dataset = load_csv(args.data, predictor.schema)
    seed = _resolve_seed(args)
    config = _ga_config(args, seed)
    common = {
        "config": config,
        "sample_size": args.sample,
        "only_correct": not args.include_misclassified,
        "use_heldout": not args.all_rows,
    }
    if args.per_class is not None:
        common["indices"] = _per_class_indices(
            predictor, dataset, args.per_class, seed,
            common["only_correct"], common["use_heldout"],
        )

    if args.kind == "robustness":
        report = audit_robustness(predictor, dataset, **common)
    elif args.kind == "burden":
        if not args.group:
            print("audit burden needs --group", file=sys.stderr)
            return EXIT_USAGE
        group_by = [g.strip() for g in args.group.split(",") if g.strip()]
        report = burden(predictor, dataset, group_by, **common)
    elif args.kind == "importance":
        report = feature_importance(predictor, dataset, **common)
    else:
        if not args.protected:
            print("audit fairness needs --protected", file=sys.stderr)
            return EXIT_USAGE
        protected = [p.strip() for p in args.protected.split(",") if p.strip()]
        if args.instance is not None:
            x = dataset.instances()[args.instance]
            probe = individual_fairness(x, predictor, dataset.schema, dataset.stats,
                                        protected, config, threshold=args.threshold)
            print(f"FitnessM={probe.fitness_muted:.6g} "
                  f"FitnessU={probe.fitness_unmuted:.6g} "
                  f"delta={probe.relative_delta:+.4f} flagged={probe.flagged}")
            return EXIT_OK
        common.pop("indices", None)
        report = audit_fairness(predictor, dataset, protected,
                                threshold=args.threshold, **common)

    rendered = render_report(report, args.format)
    sys.stdout.write(rendered if rendered.endswith("\n") else rendered + "\n")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(render_report(report, "json"))
            fh.write("\n")
    if report.aborted_reason:
        print(f"audit aborted: {report.aborted_reason}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceState, build_app

    state = ServiceState(time_budget_s=args.budget)
    for path in args.preload:
        predictor, stats, _ = load_model(path)
        model = state.add_model(predictor, predictor.schema, stats, predictor.kind)
        print(f"loaded model {model.id} from {path}")
    for pair in args.preload_data:
        schema_path, _, csv_path = pair.partition(":")
        if not csv_path:
            print("--preload-data expects schema.json:data.csv", file=sys.stderr)
            return EXIT_USAGE
        dataset = load_csv(csv_path, load_schema(schema_path))
        dataset_id = state.add_dataset(dataset)
        print(f"loaded dataset {dataset_id} from {csv_path}")
    app = build_app(state, snapshot_path=args.snapshot)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    except (OSError, SystemExit) as exc:
        print(f"server failed to start: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": cmd_train,
        "explain": cmd_explain,
        "audit": cmd_audit,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except InfeasibleSpaceError as exc:
        detail = f" after {exc.attempts} samples" if exc.attempts else ""
        print(f"infeasible search space{detail}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _VALIDATION_ERRORS as exc:
        field_errors = getattr(exc, "field_errors", None)
        if field_errors:
            for name, message in field_errors:
                print(f"invalid {name}: {message}", file=sys.stderr)
        else:
            print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
