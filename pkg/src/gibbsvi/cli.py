"""Command-line surface: fit, smc, complete, cv.

Every command is a pure function of its flags, input files and seed;
identical invocations produce byte-identical reports. Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical failure.
Set GIBBSVI_THREADS to pin the BLAS thread count.
"""

import argparse
import json
import math
import os
import sys

_TASKS = ("classify01", "hinge", "rank")
_TASK_KIND = {"classify01": "01", "hinge": "hinge", "rank": "auc"}


def _setup_threads():
    n = os.environ.get("GIBBSVI_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gibbsvi",
        description="Variational Gibbs-posterior classifiers, rankers and "
                    "matrix completion, with computable risk bounds.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_data_flags(sp):
        sp.add_argument("--data", required=True, help="CSV with features and a label column")
        sp.add_argument("--label-column", default=-1,
                        help="label column name or 0-based index (default: last column)")
        sp.add_argument("--positive-label", default="1",
                        help="label token mapped to +1 (default: 1)")
        sp.add_argument("--scale", action="store_true",
                        help="scale each feature column into [-1, 1]")
        sp.add_argument("--test-data", default=None, help="held-out CSV, same schema")
        sp.add_argument("--holdout", type=float, default=None,
                        help="fraction of --data held out for testing (uses --seed)")

    fit = sub.add_parser("fit", help="train a variational classifier or ranker")
    fit.add_argument("task", choices=_TASKS)
    add_data_flags(fit)
    fit.add_argument("--family", choices=("shared", "diag", "full"), default="diag")
    fit.add_argument("--lambda", dest="lam", default="auto",
                     help="Gibbs temperature, or 'auto' for the recommended value")
    fit.add_argument("--prior-var", type=float, default=1.0)
    fit.add_argument("--epsilon", type=float, default=0.05)
    fit.add_argument("--anneal-steps", type=int, default=None,
                     help="temperature-ladder length (classify01 only)")
    fit.add_argument("--budget", type=int, default=200,
                     help="local-optimizer iterations per ladder step (classify01 only)")
    fit.add_argument("--batch-size", type=int, default=None, help="SGD batch size (rank only)")
    fit.add_argument("--iterations", type=int, default=None,
                     help="solver iterations (hinge and rank)")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", required=True, help="report JSON path")

    smc = sub.add_parser("smc", help="tempering SMC reference run")
    smc.add_argument("--kind", choices=_TASKS, default="classify01")
    add_data_flags(smc)
    smc.add_argument("--particles", type=int, default=1000)
    smc.add_argument("--tau", type=float, default=0.5)
    smc.add_argument("--kappa", type=float, default=0.3)
    smc.add_argument("--mh-steps", type=int, default=5)
    smc.add_argument("--lambda", dest="lam", default="auto")
    smc.add_argument("--prior-var", type=float, default=1.0)
    smc.add_argument("--seed", type=int, default=0)
    smc.add_argument("--out", required=True)

    comp = sub.add_parser("complete", help="mean-field matrix completion")
    comp.add_argument("--entries", required=True, help="CSV of row,col,value (1-based)")
    comp.add_argument("--test-entries", default=None, help="held-out entries CSV")
    comp.add_argument("--rank", type=int, required=True)
    comp.add_argument("--a", type=float, default=1.0)
    comp.add_argument("--b", default="1.0",
                      help="inverse-gamma rate, or 'auto' for the smallness rule with beta=n")
    comp.add_argument("--lambda", dest="lam", type=float, required=True)
    comp.add_argument("--tol", type=float, default=1e-8)
    comp.add_argument("--max-sweeps", type=int, default=200)
    comp.add_argument("--seed", type=int, default=0)
    comp.add_argument("--predict", action="append", default=[],
                      metavar="ROW,COL", help="entries to predict (repeatable, 1-based)")
    comp.add_argument("--out", required=True)

    cv = sub.add_parser("cv", help="cross-validated hyperparameter search")
    cv.add_argument("task", choices=_TASKS)
    add_data_flags(cv)
    cv.add_argument("--family", choices=("shared", "diag", "full"), default="diag")
    cv.add_argument("--lambda-grid", required=True, help="comma-separated temperatures")
    cv.add_argument("--prior-var-grid", required=True, help="comma-separated prior variances")
    cv.add_argument("--folds", type=int, default=5)
    cv.add_argument("--anneal-steps", type=int, default=None)
    cv.add_argument("--budget", type=int, default=200)
    cv.add_argument("--batch-size", type=int, default=None)
    cv.add_argument("--iterations", type=int, default=None)
    cv.add_argument("--epsilon", type=float, default=0.05)
    cv.add_argument("--seed", type=int, default=0)
    cv.add_argument("--out", required=True)
    return p


# -- shared helpers ---------------------------------------------------------------

def _json_default(obj):
    import numpy as np
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _write_report(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")


def _load_dataset(args):
    from . import core
    ds = core.load_csv(args.data, args.label_column, args.positive_label)
    if args.scale:
        ds = ds.scaled_to_unit()
    test = None
    if args.test_data is not None and args.holdout is not None:
        from .errors import ConfigError
        raise ConfigError("--test-data and --holdout are mutually exclusive")
    if args.test_data is not None:
        test = core.load_csv(args.test_data, args.label_column, args.positive_label)
        if args.scale:
            test = test.scaled_to_unit()
    elif args.holdout is not None:
        from .errors import ConfigError
        if not (0.0 < args.holdout < 1.0):
            raise ConfigError("--holdout must be in (0, 1)")
        import numpy as np
        rng = np.random.default_rng(args.seed)
        perm = rng.permutation(ds.n)
        n_test = max(1, int(round(args.holdout * ds.n)))
        if ds.n - n_test < 2:
            raise ConfigError("holdout leaves fewer than 2 training rows")
        test = ds.subset(perm[:n_test])
        ds = ds.subset(perm[n_test:])
    return ds, test


def _resolve_lambda(args, task, ds, prior_var):
    from . import bounds
    if isinstance(args.lam, str) and args.lam != "auto":
        try:
            return float(args.lam)
        except ValueError:
            from .errors import ConfigError
            raise ConfigError(f"--lambda must be a number or 'auto', got {args.lam!r}") from None
    if args.lam == "auto":
        setting = {"classify01": "classif01", "hinge": "hinge", "rank": "rank01"}[task]
        return bounds.recommended_lambda(
            setting, ds.n, d=ds.d, prior_var=prior_var, feature_bound=ds.feature_bound)
    return float(args.lam)


def _point_error(task, mean, ds):
    from . import risk
    if ds is None:
        return None
    if task == "rank":
        return risk.empirical_mixed_pair_risk(mean, ds)
    return risk.empirical_01_risk(mean, ds)


def _measure_payload(q):
    payload = {"family": q.family, "mean": [float(x) for x in q.mean]}
    if q.family == "shared":
        payload["var"] = float(q.var)
    elif q.family == "diag":
        payload["variances"] = [float(x) for x in q.variances]
    else:
        payload["cholesky"] = [[float(x) for x in row] for row in q.chol]
    return payload


def _config_payload(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return cfg


# -- commands ----------------------------------------------------------------------

def _reject(condition, message):
    if condition:
        from .errors import ConfigError
        raise ConfigError(message)


def cmd_fit(args) -> int:
    from . import bounds, core, optim
    task = args.task
    _reject(task != "rank" and args.batch_size is not None,
            "--batch-size only applies to the rank task")
    _reject(task != "classify01" and args.anneal_steps is not None,
            "--anneal-steps only applies to classify01")
    _reject(task == "classify01" and args.iterations is not None,
            "--iterations applies to hinge and rank, not classify01")
    _reject(task == "rank" and args.family != "diag",
            "rank training uses the diag family")
    ds, test = _load_dataset(args)
    prior = core.IsotropicPrior(args.prior_var, ds.d)
    lam = _resolve_lambda(args, task, ds, args.prior_var)
    kind = _TASK_KIND[task]
    certificate = None

    if task == "classify01":
        schedule = optim.AnnealSchedule.geometric(
            lam, steps=args.anneal_steps or 10, budget=args.budget)
        result = optim.anneal(kind, args.family, ds, prior, schedule, args.epsilon)
        q = result.measure
        report = bounds.empirical_bound(kind, q, ds, prior, result.lam, args.epsilon)
        trace_rows = list(result.trace)
    elif task == "hinge":
        k = args.iterations if args.iterations is not None else 2000
        q, cert = optim.convex_solve_hinge(ds, prior, lam, family=args.family, k=k)
        report = bounds.empirical_bound(kind, q, ds, prior, lam, args.epsilon)
        trace_rows = [report]
        certificate = {"family": cert.family, "iterations": cert.iterations,
                       "lipschitz": cert.lipschitz, "radius": cert.radius,
                       "gap": cert.gap, "method": cert.method,
                       "objective_value": cert.objective_value}
    else:
        cfg = optim.SgdConfig(
            batch_size=args.batch_size or 10,
            max_iters=args.iterations if args.iterations is not None else 1000,
            seed=args.seed, epsilon=args.epsilon)
        q, trace = optim.sgd_rank(ds, prior, lam, cfg)
        report = bounds.empirical_bound(kind, q, ds, prior, lam, args.epsilon)
        trace_rows = trace

    trace_path = args.out + ".trace.csv"
    optim.write_bound_trace(trace_path, trace_rows)
    payload = {
        "config": _config_payload(args),
        "variational": _measure_payload(q),
        "train_error": _point_error(task, q.mean, ds),
        "test_error": _point_error(task, q.mean, test),
        "bound_report": report.to_dict(),
        "trace_csv": trace_path,
    }
    if certificate is not None:
        payload["certificate"] = certificate
    _write_report(args.out, payload)
    return 0


def cmd_smc(args) -> int:
    import csv as _csv

    from . import core, smc
    ds, test = _load_dataset(args)
    prior = core.IsotropicPrior(args.prior_var, ds.d)
    lam = _resolve_lambda(args, args.kind, ds, args.prior_var)
    cloud, diags = smc.run_tempering_smc(
        ds, prior, lam, kind=_TASK_KIND[args.kind], n_particles=args.particles,
        tau=args.tau, kappa=args.kappa, seed=args.seed, mh_steps=args.mh_steps)
    mean = cloud.mean()
    diag_path = args.out + ".stages.csv"
    with open(diag_path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["lambda", "ess_before_resample", "acceptance_rate", "log_z"])
        for st in diags:
            w.writerow([repr(st.lam), repr(st.ess_before_resample),
                        repr(st.acceptance_rate), repr(st.log_z)])
    payload = {
        "config": _config_payload(args),
        "posterior_mean": [float(x) for x in mean],
        "train_error": _point_error(args.kind, mean, ds),
        "test_error": _point_error(args.kind, mean, test),
        "log_z": cloud.log_z,
        "ladder": list(cloud.ladder),
        "stages_csv": diag_path,
    }
    _write_report(args.out, payload)
    return 0


def cmd_complete(args) -> int:
    import csv as _csv

    from . import completion, core
    from .errors import ConfigError, DataError
    data = core.load_entries_csv(args.entries)
    if args.b == "auto":
        b = completion.small_b_threshold(data.n, data.m1, data.m2, args.rank)
    else:
        try:
            b = float(args.b)
        except ValueError:
            raise ConfigError(f"--b must be a number or 'auto', got {args.b!r}") from None
    model, trace = completion.run_mean_field(
        data, args.rank, args.a, b, args.lam, tol=args.tol,
        max_sweeps=args.max_sweeps, seed=args.seed)

    factors_path = args.out + ".factors.csv"
    with open(factors_path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["block", "index"] + [f"k{k}" for k in range(1, args.rank + 1)])
        for j in range(model.m1):
            w.writerow(["u", j + 1] + [repr(float(x)) for x in model.u_mean[j]])
        for i in range(model.m2):
            w.writerow(["v", i + 1] + [repr(float(x)) for x in model.v_mean[i]])

    rmse = None
    if args.test_entries is not None:
        held = core.load_entries_csv(args.test_entries)
        if held.m1 > model.m1 or held.m2 > model.m2:
            raise DataError("test entries index outside the training matrix")
        errs = [completion.predict_entry(model, r, c) - y
                for r, c, y in zip(held.rows, held.cols, held.values)]
        rmse = math.sqrt(sum(e * e for e in errs) / len(errs))

    predictions = []
    for spec_str in args.predict:
        try:
            r, c = (int(tok) for tok in spec_str.split(","))
        except ValueError:
            raise ConfigError(f"--predict expects ROW,COL, got {spec_str!r}") from None
        predictions.append({"row": r, "col": c,
                            "value": completion.predict_entry(model, r, c)})

    payload = {
        "config": _config_payload(args),
        "b": b,
        "elbo_trace": [float(x) for x in trace],
        "factors_csv": factors_path,
        "held_out_rmse": rmse,
        "predictions": predictions,
        "gamma": {"shape": [float(x) for x in model.gamma_shape],
                  "rate": [float(x) for x in model.gamma_rate]},
    }
    _write_report(args.out, payload)
    return 0


def _parse_grid(text, flag):
    from .errors import ConfigError
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"{flag} must be comma-separated numbers") from None
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


def train_and_score(task, family, train, test, prior_var, lam, *, epsilon=0.05,
                    anneal_steps=10, budget=200, batch_size=10, iterations=None,
                    seed=0):
    """Train one configuration and return the held-out point-classifier error."""
    from . import core, optim
    prior = core.IsotropicPrior(prior_var, train.d)
    kind = _TASK_KIND[task]
    if task == "classify01":
        schedule = optim.AnnealSchedule.geometric(lam, steps=anneal_steps, budget=budget)
        q = optim.anneal(kind, family, train, prior, schedule, epsilon).measure
    elif task == "hinge":
        q, _ = optim.convex_solve_hinge(train, prior, lam, family=family,
                                        k=iterations if iterations is not None else 2000)
    else:
        cfg = optim.SgdConfig(batch_size=batch_size,
                              max_iters=iterations if iterations is not None else 1000,
                              seed=seed, epsilon=epsilon)
        q, _ = optim.sgd_rank(train, prior, lam, cfg)
    return _point_error(task, q.mean, test)


def cmd_cv(args) -> int:
    import csv as _csv

    from . import core
    from .errors import OutOfValidityIntervalError
    task = args.task
    _reject(task != "rank" and args.batch_size is not None,
            "--batch-size only applies to the rank task")
    _reject(task == "rank" and args.family != "diag",
            "rank training uses the diag family")
    ds, _ = _load_dataset(args)
    lam_grid = _parse_grid(args.lambda_grid, "--lambda-grid")
    var_grid = _parse_grid(args.prior_var_grid, "--prior-var-grid")
    folds = core.split_folds(ds, args.folds, args.seed)

    rows = []
    for prior_var in var_grid:
        for lam in lam_grid:
            errors = []
            for train_idx, test_idx in folds:
                train = ds.subset(train_idx)
                test = ds.subset(test_idx)
                try:
                    err = train_and_score(
                        task, args.family, train, test, prior_var, lam,
                        epsilon=args.epsilon,
                        anneal_steps=args.anneal_steps or 10, budget=args.budget,
                        batch_size=args.batch_size or 10,
                        iterations=args.iterations, seed=args.seed)
                except OutOfValidityIntervalError:
                    err = math.nan
                errors.append(err)
            mean_err = (math.nan if any(math.isnan(e) for e in errors)
                        else sum(errors) / len(errors))
            rows.append({"lambda": lam, "prior_var": prior_var, "mean_error": mean_err,
                         "fold_errors": errors})

    valid = [r for r in rows if not math.isnan(r["mean_error"])]
    if not valid:
        from .errors import ConfigError
        raise ConfigError("every grid point fell outside the rate validity interval")
    best = min(valid, key=lambda r: (r["mean_error"], r["lambda"], r["prior_var"]))

    grid_path = args.out + ".grid.csv"
    with open(grid_path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["lambda", "prior_var", "mean_error"]
                   + [f"fold{j}" for j in range(len(folds))])
        for r in rows:
            w.writerow([repr(r["lambda"]), repr(r["prior_var"]), repr(r["mean_error"])]
                       + [repr(e) for e in r["fold_errors"]])

    payload = {
        "config": _config_payload(args),
        "best": {"lambda": best["lambda"], "prior_var": best["prior_var"],
                 "mean_error": best["mean_error"]},
        "grid_csv": grid_path,
    }
    _write_report(args.out, payload)
    return 0


_COMMANDS = {"fit": cmd_fit, "smc": cmd_smc, "complete": cmd_complete, "cv": cmd_cv}


def main(argv=None) -> int:
    _setup_threads()
    args = build_parser().parse_args(argv)
    from .errors import ConfigError, DataError, NumericalError
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
