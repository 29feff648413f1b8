"""Command-line entry point.

Subcommands: ``train`` (metric learning or synthetic embedding training),
``eval`` (score a stored metric), ``analyze`` (inseparability and class-gap
diagnostics), ``losscheck`` (gradient and reduction self-checks) and
``fetch`` (download manifest datasets).

Exit codes: 0 success, 1 failed check, 2 usage/validation error, 3
runtime/numeric error.  Every run writes a ``manifest.json`` (config echo,
seed, versions) next to its outputs.
"""

import argparse
import json
import os
import platform
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, checks
from .data import (SplitPlan, fetch_dataset, load_bundled, load_dataset,
                   load_manifest, BUNDLED)
from .evaluation import (ExperimentConfig, SyntheticSpec, knn_classify,
                         loss_function, recall_at_k, run_experiment,
                         toy_embedding_train)
from .exceptions import (AnmlError, ConvergenceError, InvalidInputError,
                         NumericError, ParseError, SolverError)
from .geometry import class_gap, inseparability_report, lipschitz_lower_bound
from .linear import LanmlConfig, MetricMatrix
from .losses import DanmlConfig

LINEAR_LEARNERS = ("identity", "lanml-minus", "lanml-plus", "pnca")
EMBEDDING_LEARNERS = ("danml", "triplet", "ms", "lifted", "npairs")

PRESETS = {
    "paper-uci": {
        "defaults": {
            "trials": 30,
            "train_fraction": 0.7,
            "k_max": 40,
            "gamma2": 1.0,
            "reg_weight": 1.0,
            "loss": "hinge",
            "similars": 10,
            "max_iters": 150,
            "step_size": 1.0,
        },
        # gamma1 depends on the learner sign convention.
        "gamma1": {"lanml-minus": -1.0, "lanml-plus": 1.0},
        "grids": {
            "reg_weight": [round(0.1 + 0.2 * i, 1) for i in range(8)],
            "gamma_abs": [float(2.0 ** (e / 2.0)) for e in range(-10, 11)],
            "pnca_alpha": [float(2.0 ** e) for e in range(-8, 11)],
        },
    }
}


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_manifest(out_dir, args, command):
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k != "func"
    }
    payload = {
        "command": command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "versions": {
            "anml": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    preset = getattr(args, "preset", None)
    if preset:
        payload["preset"] = {"name": preset, **PRESETS[preset]}
    _write_json(out_dir / "manifest.json", payload)


def _resolve_dataset(args):
    name = args.dataset
    if name is None:
        raise InvalidInputError("--dataset is required for this command")
    if name in BUNDLED:
        return load_bundled(name)
    path = Path(name)
    if not path.exists():
        raise InvalidInputError(f"dataset not found: {name}")
    return load_dataset(path, fmt=args.format,
                        delimiter=getattr(args, "delimiter", ","))


def _preset_value(args, key, builtin, learner=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    preset = PRESETS.get(args.preset) if getattr(args, "preset", None) else None
    if preset:
        if key == "gamma1" and learner in preset.get("gamma1", {}):
            return preset["gamma1"][learner]
        if key in preset["defaults"]:
            return preset["defaults"][key]
    return builtin


def _linear_train(args, out_dir):
    data = _resolve_dataset(args)
    learner = args.learner
    gamma1 = _preset_value(args, "gamma1", -1.0 if learner != "lanml-plus" else 1.0,
                           learner)
    if learner == "lanml-minus" and gamma1 >= 0:
        raise InvalidInputError("lanml-minus requires gamma1 < 0")
    if learner == "lanml-plus" and gamma1 <= 0:
        raise InvalidInputError("lanml-plus requires gamma1 > 0")
    cfg = LanmlConfig(
        gamma1=gamma1,
        gamma2=_preset_value(args, "gamma2", 1.0),
        reg_weight=_preset_value(args, "reg_weight", 0.0),
        loss_kind=_preset_value(args, "loss", "hinge"),
        hinge_margin=args.margin if args.margin is not None else 1.0,
        similars_per_query=int(_preset_value(args, "similars", 10)),
        pair_mode="all_similars" if learner in ("lanml-plus", "pnca") else "knn_similars",
        max_iters=int(_preset_value(args, "max_iters", 150)),
        step_size=_preset_value(args, "step_size", 1.0),
        grad_tol=args.grad_tol if args.grad_tol is not None else 1e-6,
    )
    plan = SplitPlan(
        train_fraction=_preset_value(args, "train_fraction", 0.7),
        trials=int(_preset_value(args, "trials", 30)),
        seed=args.seed,
        stratified=args.stratified,
    )
    k_max = int(_preset_value(args, "k_max", 40))
    config = ExperimentConfig(
        learner={"identity": "identity", "lanml-minus": "lanml",
                 "lanml-plus": "lanml", "pnca": "pnca"}[learner],
        lanml=cfg,
        pnca_alpha=args.alpha if args.alpha is not None else 1.0,
        k_values=tuple(range(1, k_max + 1)),
        paper_protocol=args.paper_protocol,
    )

    captured = {}

    def hook(t_idx, metric, solved):
        if t_idx == 0:
            captured["metric"] = metric
            captured["solved"] = solved

    result = run_experiment(data, plan, config, learned_metric_hook=hook)

    summary = result.summary_dict()
    summary["dataset"] = data.name
    summary["learner"] = learner
    _write_json(out_dir / "summary.json", summary)
    with open(out_dir / "trials.csv", "w") as fh:
        fh.write("trial,k,accuracy\n")
        for trial, k, acc in result.rows():
            fh.write(f"{trial},{k},{acc!r}\n")
    if "metric" in captured:
        (out_dir / "metric.json").write_text(captured["metric"].to_json() + "\n")
    if captured.get("solved") is not None:
        (out_dir / "trace.csv").write_text(captured["solved"].trace_csv())
    print(f"{learner} on {data.name}: mean best-k accuracy "
          f"{result.mean_accuracy:.4f} +- {result.std_accuracy:.4f} "
          f"over {plan.trials} trials")
    return 0


def _embedding_train(args, out_dir):
    per_class = args.emb_per_class
    n_classes = args.emb_classes
    if args.learner == "npairs":
        per_class = 2  # N-pair batches hold exactly one pair per class
        n_classes = max(n_classes, 4)
    spec = SyntheticSpec(
        n_classes=n_classes,
        n_per_class=per_class,
        dim=args.emb_dim,
        spread=args.emb_spread,
        seed=args.seed,
    )
    params = {}
    if args.learner == "danml":
        params["config"] = DanmlConfig(
            gamma1=_preset_value(args, "gamma1", -2.0),
            gamma2=_preset_value(args, "gamma2", 30.0),
            lambda1=args.lambda1,
            lambda2=args.lambda2 if args.lambda2 is not None else args.lambda1 + 0.02,
            loss_kind=_preset_value(args, "loss", "logistic"),
        )
    elif args.learner in ("triplet", "ms", "lifted"):
        if args.margin is not None:
            params["margin"] = args.margin
    elif args.learner == "npairs":
        params["gamma"] = abs(_preset_value(args, "gamma1", 1.0))
        params["lam"] = args.lambda1

    loss_fn = loss_function(args.learner, **params)
    before = spec.sample()
    recall_before = recall_at_k(before, [1]).recall_at[1]
    final, trace = toy_embedding_train(spec, loss_fn, args.steps, args.step_size
                                       if args.step_size is not None else 0.1)
    recall_after = recall_at_k(final, [1]).recall_at[1]
    summary = {
        "learner": args.learner,
        "steps": args.steps,
        "loss_initial": trace[0],
        "loss_final": trace[-1],
        "recall1_before": recall_before,
        "recall1_after": recall_after,
    }
    _write_json(out_dir / "summary.json", summary)
    _write_json(out_dir / "embeddings.json", {
        "vectors": final.vectors.tolist(),
        "labels": final.labels.tolist(),
    })
    with open(out_dir / "trace.csv", "w") as fh:
        fh.write("step,loss\n")
        for i, value in enumerate(trace):
            fh.write(f"{i},{value!r}\n")
    print(f"{args.learner}: loss {trace[0]:.6f} -> {trace[-1]:.6f}, "
          f"recall@1 {recall_before:.3f} -> {recall_after:.3f}")
    return 0


def cmd_train(args):
    if args.learner is None:
        raise InvalidInputError("--learner is required (flag or config file)")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(out_dir, args, "train")
    if args.learner in LINEAR_LEARNERS:
        return _linear_train(args, out_dir)
    return _embedding_train(args, out_dir)


def cmd_eval(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(out_dir, args, "eval")
    data = _resolve_dataset(args)
    metric = MetricMatrix.from_json(Path(args.metric).read_text()) \
        if args.metric else MetricMatrix.identity(data.d)
    plan = SplitPlan(train_fraction=args.train_fraction or 0.7, trials=1,
                     seed=args.seed)
    from .data import make_splits

    train_idx, test_idx = make_splits(data.n, plan, labels=data.labels)[0]
    k_max = min(int(args.k_max or 40), int(len(train_idx)))
    result = knn_classify(data.subset(train_idx), data.subset(test_idx),
                          metric, range(1, k_max + 1))
    payload = {
        "accuracy_by_k": {str(k): v for k, v in sorted(result.accuracy_by_k.items())},
        "best_k": result.best_k,
        "best_accuracy": result.best_accuracy,
    }
    _write_json(out_dir / "result.json", payload)
    print(f"best-k accuracy {result.best_accuracy:.4f} at k={result.best_k}")
    return 0


def cmd_analyze(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(out_dir, args, "analyze")
    data = _resolve_dataset(args)
    report = inseparability_report(data, args.similars)
    payload = report.to_dict()
    delta_before = payload["delta"]
    if args.metric:
        metric = MetricMatrix.from_json(Path(args.metric).read_text())
        projected = data.features @ metric.factor()
        from .data import LabeledDataset

        delta_after, _ = class_gap(LabeledDataset(projected, data.labels))
    else:
        delta_after = delta_before
    payload["delta_after"] = delta_after
    payload["lipschitz_lower_bound"] = lipschitz_lower_bound(delta_before,
                                                             delta_after)
    _write_json(out_dir / "report.json", payload)
    print(f"inseparable fraction {payload['fraction']:.4f}, "
          f"class gap {delta_before:.4f}, "
          f"Lipschitz lower bound {payload['lipschitz_lower_bound']:.4f}")
    return 0


def cmd_losscheck(args):
    results = checks.run_checks(seed=args.seed, only=args.only,
                                corrupt=args.corrupt_gradient)
    if not results:
        raise InvalidInputError(f"no checks match --only {args.only!r}")
    width = max(len(r.name) for r in results)
    failed = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
        if not r.passed:
            failed.append(r.name)
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_fetch(args):
    manifest = load_manifest(args.manifest)
    names = list(manifest) if args.all else args.name
    if not names:
        raise InvalidInputError("pass dataset names or --all")
    for name in names:
        path = fetch_dataset(name, args.cache, manifest)
        print(f"{name}: {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="anml",
        description="Adaptive neighborhood metric learning toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="anml_out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None,
                       help="JSON config file (flags take precedence)")

    train = sub.add_parser("train", help="learn a metric or train embeddings")
    common(train)
    train.add_argument("--dataset", default=None,
                       help=f"bundled name {BUNDLED} or a file path")
    train.add_argument("--format", default="csv_last_label",
                       choices=("libsvm", "csv_last_label", "csv_first_label"))
    train.add_argument("--delimiter", default=",")
    train.add_argument("--learner", default=None,
                       choices=LINEAR_LEARNERS + EMBEDDING_LEARNERS,
                       help="required (may come from the config file)")
    train.add_argument("--preset", default=None, choices=sorted(PRESETS))
    train.add_argument("--gamma1", type=float, default=None)
    train.add_argument("--gamma2", type=float, default=None)
    train.add_argument("--reg-weight", dest="reg_weight", type=float, default=None)
    train.add_argument("--loss", default=None,
                       choices=("hinge", "logistic", "identity"))
    train.add_argument("--margin", type=float, default=None)
    train.add_argument("--alpha", type=float, default=None,
                       help="pnca exponent")
    train.add_argument("--similars", type=int, default=None,
                       help="similar neighbors per query")
    train.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    train.add_argument("--step-size", dest="step_size", type=float, default=None)
    train.add_argument("--grad-tol", dest="grad_tol", type=float, default=None)
    train.add_argument("--trials", type=int, default=None)
    train.add_argument("--train-fraction", dest="train_fraction", type=float,
                       default=None)
    train.add_argument("--k-max", dest="k_max", type=int, default=None)
    train.add_argument("--stratified", action="store_true")
    train.add_argument("--paper-protocol", dest="paper_protocol",
                       action="store_true",
                       help="fit normalization/PCA on the full dataset before splitting")
    train.add_argument("--lambda1", type=float, default=0.5)
    train.add_argument("--lambda2", type=float, default=None)
    train.add_argument("--steps", type=int, default=500)
    train.add_argument("--emb-classes", dest="emb_classes", type=int, default=2)
    train.add_argument("--emb-per-class", dest="emb_per_class", type=int, default=10)
    train.add_argument("--emb-dim", dest="emb_dim", type=int, default=8)
    train.add_argument("--emb-spread", dest="emb_spread", type=float, default=0.6)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a stored metric with k-NN")
    common(ev)
    ev.add_argument("--dataset", default=None)
    ev.add_argument("--format", default="csv_last_label",
                    choices=("libsvm", "csv_last_label", "csv_first_label"))
    ev.add_argument("--delimiter", default=",")
    ev.add_argument("--metric", default=None, help="metric JSON file")
    ev.add_argument("--train-fraction", dest="train_fraction", type=float,
                    default=None)
    ev.add_argument("--k-max", dest="k_max", type=int, default=None)
    ev.set_defaults(func=cmd_eval)

    an = sub.add_parser("analyze", help="inseparability diagnostics")
    common(an)
    an.add_argument("--dataset", default=None)
    an.add_argument("--format", default="csv_last_label",
                    choices=("libsvm", "csv_last_label", "csv_first_label"))
    an.add_argument("--delimiter", default=",")
    an.add_argument("--similars", type=int, default=3)
    an.add_argument("--metric", default=None,
                    help="metric JSON for the post-projection class gap")
    an.set_defaults(func=cmd_analyze)

    lc = sub.add_parser("losscheck", help="gradient and reduction self-checks")
    lc.add_argument("--seed", type=int, default=0)
    lc.add_argument("--config", default=None)
    lc.add_argument("--only", default=None,
                    help="substring filter on check names")
    lc.add_argument("--corrupt-gradient", dest="corrupt_gradient", default=None,
                    help=argparse.SUPPRESS)  # fault injection for testing
    lc.set_defaults(func=cmd_losscheck)

    fe = sub.add_parser("fetch", help="download datasets from the manifest")
    fe.add_argument("name", nargs="*", help="dataset names")
    fe.add_argument("--all", action="store_true")
    fe.add_argument("--cache",
                    default=os.environ.get("ANML_CACHE_DIR", "anml_cache"),
                    help="download directory (env: ANML_CACHE_DIR)")
    fe.add_argument("--manifest", default=None)
    fe.add_argument("--config", default=None)
    fe.set_defaults(func=cmd_fetch)
    return parser


def _apply_config_file(parser, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.exists():
        raise InvalidInputError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InvalidInputError("config file must hold a JSON object")
    known_dests = {
        action.dest
        for sp in parser._subparsers._group_actions
        for p in sp.choices.values()
        for action in p._actions
    }
    unknown = sorted(set(payload) - known_dests)
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    for sp in parser._subparsers._group_actions:
        for p in sp.choices.values():
            p.set_defaults(**{k: v for k, v in payload.items()
                              if k in {a.dest for a in p._actions}})


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors / --version
        return int(exc.code or 0)
    except (InvalidInputError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ConvergenceError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except AnmlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
