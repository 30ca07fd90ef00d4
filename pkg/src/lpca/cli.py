"""Command-line front end: estimate, covadjust, synth and simulate.

Configuration is plain ``key=value`` text (one pair per line, ``#``
comments); command-line flags override config-file values, and every run
writes a ``manifest.txt`` in the same schema that reproduces the run
byte-for-byte when passed back through ``--config``. Floating-point output
uses 12 significant digits so reruns are byte-identical.

Exit codes: 1 configuration error, 2 data error, 3 numerical error. Errors
print a human-readable message followed by a machine-readable
``error-record`` line on stderr.
"""

import argparse
import os
import sys

from . import __version__
from .data import load_csv, save_split
from .distances import parse_distance, pairwise_distances
from .estimators import CovariateAdjustedLocalPCA, LocalPCA, SyntheticControl
from .exceptions import ConfigError, DataError, LpcaError, NumericalError
from .localpca import FixedFactors, RatioFactors
from .matching import save_neighbors
from .simlab import MODEL_BY_NUMBER, QUANTILE_LEVELS, SimConfig, run_study
from .synthctl import growth_to_level

FLOAT_FORMAT = "%.12g"


def _fmt(x):
    return FLOAT_FORMAT % x


def read_config(path):
    """Parse a key=value config file into a dict (lists for repeated keys)."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "covariate":
                out.setdefault("covariate", []).append(value)
            else:
                out[key] = value
    return out


def _write_manifest(path, entries):
    with open(path, "w") as fh:
        fh.write("# lpca run manifest; rerun with: lpca <command> --config <this file>\n")
        for key, value in entries:
            fh.write(f"{key}={value}\n")


def _write_matrix_csv(path, matrix):
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_table(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _load_input(args):
    if not os.path.exists(args.input):
        raise DataError(f"input file not found: {args.input}")
    return load_csv(args.input, missing_token=args.missing_token, header=args.header)


def _parse_fractions(text, expected):
    try:
        fractions = tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse split fractions {text!r}") from None
    if len(fractions) != expected:
        raise ConfigError(f"expected {expected} split fractions, got {len(fractions)}")
    if any(f <= 0 for f in fractions):
        raise ConfigError("split fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {sum(fractions)}")
    return fractions


def _parse_ratio_threshold(text):
    if text == "loglog":
        return None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(
            f"ratio threshold must be 'loglog' or a number, got {text!r}"
        ) from None


def _parse_factors(text):
    if text == "ratio":
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"factors must be 'ratio' or an integer, got {text!r}") from None


def _estimator_kwargs(args):
    return dict(
        n_neighbors=args.k,
        neighbor_scale=args.k_scale,
        distance=parse_distance(args.distance),
        n_factors=_parse_factors(args.factors),
        max_factors=args.max_factors,
        ratio_threshold=_parse_ratio_threshold(args.ratio_threshold),
        split_mode=args.split_mode,
        random_state=args.seed,
    )


def _common_manifest(args, command):
    entries = [("command", command), ("version", __version__),
               ("input", args.input), ("out", args.out),
               ("missing-token", args.missing_token),
               ("header", "true" if args.header else "false"),
               ("distance", args.distance)]
    if args.k is not None:
        entries.append(("k", str(args.k)))
    else:
        entries.append(("k-scale", _fmt(args.k_scale)))
    entries += [("split", args.split), ("split-mode", args.split_mode),
                ("factors", args.factors), ("max-factors", str(args.max_factors)),
                ("ratio-threshold", args.ratio_threshold)]
    if args.seed is not None:
        entries.append(("seed", str(args.seed)))
    entries.append(("threads", str(args.threads)))
    return entries


def _write_fit_outputs(out, est, dist):
    rows = est.split_.rows_final if est.split_.is_three_way else est.split_.rows_pca
    _write_matrix_csv(os.path.join(out, "hhat.csv"), est.fitted_means_)
    with open(os.path.join(out, "hhat_rows.txt"), "w") as fh:
        fh.write(" ".join(str(i + 1) for i in rows) + "\n")
    save_split(est.split_, os.path.join(out, "split.txt"))
    save_neighbors(est.neighbors_, dist, os.path.join(out, "neighbors.csv"),
                   FLOAT_FORMAT)
    _write_table(
        os.path.join(out, "nfactors.csv"),
        ("unit", "n_factors"),
        ((str(m.unit + 1), str(m.n_factors)) for m in est.models_),
    )
    _write_table(
        os.path.join(out, "spectra.csv"),
        ("unit", "rank", "eigenvalue"),
        (
            (str(m.unit + 1), str(r + 1), _fmt(w))
            for m in est.models_
            for r, w in enumerate(m.spectrum)
        ),
    )


def cmd_estimate(args):
    dm = _load_input(args)
    fractions = _parse_fractions(args.split, 2)
    est = LocalPCA(split_fraction=fractions[0], **_estimator_kwargs(args))
    est.fit(dm)
    os.makedirs(args.out, exist_ok=True)
    dist = pairwise_distances(
        dm.zero_filled().values[est.split_.rows_match], parse_distance(args.distance)
    )
    _write_fit_outputs(args.out, est, dist)
    _write_manifest(os.path.join(args.out, "manifest.txt"),
                    _common_manifest(args, "estimate"))
    print(f"estimate: wrote fitted means for {dm.n_units} units to {args.out}")
    return 0


def cmd_covadjust(args):
    dm = _load_input(args)
    if not args.covariate:
        raise ConfigError("covadjust needs at least one --covariate file")
    covariates = []
    for path in args.covariate:
        if not os.path.exists(path):
            raise DataError(f"covariate file not found: {path}")
        w = load_csv(path, missing_token=args.missing_token, header=args.header)
        if not w.is_complete:
            raise DataError(f"covariate file {path} has missing entries")
        covariates.append(w.values)
    fractions = _parse_fractions(args.split, 3)
    est = CovariateAdjustedLocalPCA(split_fractions=fractions,
                                    **_estimator_kwargs(args))
    est.fit(dm, covariates)
    os.makedirs(args.out, exist_ok=True)

    # Final-step matching ran on the adjusted outcome's middle row block.
    adjusted = dm.values - sum(t * w for t, w in zip(est.theta_, covariates))
    dist = pairwise_distances(adjusted[est.split_.rows_pca],
                              parse_distance(args.distance))
    _write_fit_outputs(args.out, est, dist)
    _write_table(
        os.path.join(args.out, "theta.csv"),
        ("regressor", "theta"),
        ((str(i + 1), _fmt(t)) for i, t in enumerate(est.theta_)),
    )
    entries = _common_manifest(args, "covadjust")
    entries += [("covariate", path) for path in args.covariate]
    _write_manifest(os.path.join(args.out, "manifest.txt"), entries)
    print("covadjust: theta = " + " ".join(_fmt(t) for t in est.theta_))
    return 0


def cmd_synth(args):
    dm = _load_input(args)
    fractions = _parse_fractions(args.split, 2)
    if args.treated < 1:
        raise ConfigError("--treated is a 1-based unit index")
    est = SyntheticControl(
        treated=args.treated - 1,
        n_pre=args.p0,
        split_fraction=fractions[0],
        level_mode=args.mode,
        initial_level=args.initial_level,
        **_estimator_kwargs(args),
    )
    est.fit(dm)
    os.makedirs(args.out, exist_ok=True)
    result = est.result_
    _write_table(
        os.path.join(args.out, "effects.csv"),
        ("period", "observed", "counterfactual", "effect"),
        (
            (str(p + 1), _fmt(o), _fmt(c), _fmt(e))
            for p, o, c, e in zip(
                result.periods, result.observed, result.counterfactual, result.effects
            )
        ),
    )
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(f"avg_effect={_fmt(result.avg_effect)}\n")
        fh.write(f"avg_counterfactual_minus_observed={_fmt(-result.avg_effect)}\n")
    if result.level_path is not None:
        _write_table(
            os.path.join(args.out, "levels.csv"),
            ("period", "counterfactual_level", "observed_level"),
            (
                (str(p + 1), _fmt(c), _fmt(o))
                for p, c, o in zip(
                    result.periods,
                    result.level_path,
                    growth_to_level(args.initial_level, result.observed, args.mode),
                )
            ),
        )
    entries = _common_manifest(args, "synth")
    entries += [("treated", str(args.treated)), ("p0", str(args.p0)),
                ("mode", args.mode)]
    if args.initial_level is not None:
        entries.append(("initial-level", _fmt(args.initial_level)))
    _write_manifest(os.path.join(args.out, "manifest.txt"), entries)
    print(f"synth: avg effect {_fmt(result.avg_effect)} over "
          f"{result.periods.size} post periods")
    return 0


def cmd_simulate(args):
    if args.model not in MODEL_BY_NUMBER:
        raise ConfigError(f"--model must be one of {sorted(MODEL_BY_NUMBER)}")
    n_factors = _parse_factors(args.factors)
    rule = (
        RatioFactors(args.max_factors, _parse_ratio_threshold(args.ratio_threshold))
        if n_factors is None
        else FixedFactors(n_factors)
    )
    config = SimConfig(
        MODEL_BY_NUMBER[args.model],
        n_units=args.n,
        n_features=args.p,
        reps=args.reps,
        k_scale=args.c,
        seed=args.seed if args.seed is not None else 0,
        distance=parse_distance(args.distance),
        split_fraction=args.split,
        rule=rule,
    )
    result = run_study(config)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for name, metrics in (("lpca", result.lpca), ("gpca", result.gpca)):
        rows.append((name, "mae", _fmt(metrics.mae)))
        for level, err in zip(QUANTILE_LEVELS, metrics.pred_err):
            rows.append((name, f"pred_err_q{level}", _fmt(err)))
    _write_table(os.path.join(args.out, "summary.csv"),
                 ("method", "metric", "value"), rows)
    if args.per_rep:
        per_rows = [
            (str(rep + 1), name, _fmt(result.mae_reps[rep, m]),
             *(_fmt(x) for x in result.pred_err_reps[rep, m]))
            for rep in range(result.reps)
            for m, name in ((0, "lpca"), (1, "gpca"))
        ]
        _write_table(
            os.path.join(args.out, "reps.csv"),
            ("rep", "method", "mae", "pred_err_q0.1", "pred_err_q0.5", "pred_err_q0.9"),
            per_rows,
        )
    entries = [("command", "simulate"), ("version", __version__),
               ("model", str(args.model)), ("n", str(args.n)), ("p", str(args.p)),
               ("reps", str(args.reps)), ("c", _fmt(args.c)),
               ("seed", str(args.seed if args.seed is not None else 0)),
               ("distance", args.distance), ("split", _fmt(args.split)),
               ("factors", args.factors), ("max-factors", str(args.max_factors)),
               ("ratio-threshold", args.ratio_threshold),
               ("per-rep", "true" if args.per_rep else "false"),
               ("out", args.out), ("threads", str(args.threads))]
    _write_manifest(os.path.join(args.out, "manifest.txt"), entries)
    print(f"simulate: lpca mae {_fmt(result.lpca.mae)}, "
          f"gpca mae {_fmt(result.gpca.mae)}")
    return 0


def _add_shared_flags(sub):
    sub.add_argument("--config", default=None,
                     help="key=value config file (flags override)")
    sub.add_argument("--distance", default="pseudo-max",
                     help="euclidean | pseudo-max | average | weighted:<weights.csv>")
    sub.add_argument("--factors", default="ratio",
                     help="'ratio' or a fixed per-neighborhood factor count")
    sub.add_argument("--max-factors", type=int, default=2,
                     help="cap for the ratio-based factor count")
    sub.add_argument("--ratio-threshold", default="loglog",
                     help="'loglog' or a numeric singular-value ratio cutoff")
    sub.add_argument("--seed", type=int, default=None,
                     help="seed for random splits / simulations")
    sub.add_argument("--threads", type=int, default=0,
                     help="cap BLAS worker threads (0 = all cores)")


def _add_panel_flags(sub, split_default):
    sub.add_argument("--input", help="panel CSV (features x units)")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--missing-token", default="NA", help="missing-cell token")
    sub.add_argument("--header", action="store_true",
                     help="input CSV has a single header row")
    sub.add_argument("--k", type=int, default=None, help="absolute neighborhood size")
    sub.add_argument("--k-scale", type=float, default=1.0,
                     help="c in K = round(c * n^(2/3)) when --k is absent")
    sub.add_argument("--split", default=split_default,
                     help="comma-separated row-split fractions")
    sub.add_argument("--split-mode", default="contiguous",
                     choices=("contiguous", "random"))
    _add_shared_flags(sub)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lpca",
        description="Local principal components for nonlinear panel factor structure",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    est = subs.add_parser("estimate", help="fit the local-PCA pipeline to a panel")
    _add_panel_flags(est, "0.5,0.5")
    est.set_defaults(func=cmd_estimate)

    cov = subs.add_parser("covadjust", help="covariate-adjusted local PCA")
    cov.add_argument("--covariate", action="append", default=[],
                     help="regressor panel CSV (repeatable)")
    _add_panel_flags(cov, "0.3333333333,0.3333333333,0.3333333334")
    cov.set_defaults(func=cmd_covadjust)

    syn = subs.add_parser("synth", help="synthetic-control counterfactual")
    syn.add_argument("--treated", type=int, help="1-based treated unit column")
    syn.add_argument("--p0", type=int,
                     help="number of pre-treatment periods")
    syn.add_argument("--mode", default="additive",
                     choices=("additive", "multiplicative"),
                     help="growth-to-level translation mode")
    syn.add_argument("--initial-level", type=float, default=None,
                     help="starting level for the optional level path")
    _add_panel_flags(syn, "0.5,0.5")
    syn.set_defaults(func=cmd_synth)

    sim = subs.add_parser("simulate", help="run a Monte Carlo study")
    sim.add_argument("--model", type=int, help="design number (1-3)")
    sim.add_argument("--n", type=int, help="number of units")
    sim.add_argument("--p", type=int, help="number of features")
    sim.add_argument("--reps", type=int, default=100, help="replications")
    sim.add_argument("--c", type=float, default=1.0,
                     help="neighborhood scale in K = round(c * n^(2/3))")
    sim.add_argument("--split", type=float, default=0.5,
                     help="matching share of feature rows")
    sim.add_argument("--out", help="output directory")
    sim.add_argument("--per-rep", action="store_true",
                     help="also write per-replication metrics")
    _add_shared_flags(sim)
    sim.set_defaults(func=cmd_simulate)
    return parser


_CONFIG_ALIASES = {
    "missing-token": "missing_token", "k-scale": "k_scale",
    "split-mode": "split_mode", "max-factors": "max_factors",
    "ratio-threshold": "ratio_threshold", "initial-level": "initial_level",
    "per-rep": "per_rep",
}
_IGNORED_CONFIG_KEYS = {"command", "version", "config"}
_BOOL_KEYS = {"header", "per_rep"}
_INT_KEYS = {"k", "seed", "threads", "treated", "p0", "model", "n", "p", "reps",
             "max_factors"}
_FLOAT_KEYS = {"k_scale", "c", "initial_level"}


def _apply_config(args, argv):
    """Fold --config file values into parsed args (explicit flags win)."""
    if args.config is None:
        return args
    values = read_config(args.config)
    command = values.pop("command", None)
    if command is not None and command != args.command:
        raise ConfigError(
            f"config file is for command {command!r}, not {args.command!r}"
        )
    explicit = {tok.split("=")[0].lstrip("-").replace("-", "_")
                for tok in argv if tok.startswith("--")}
    for key, value in values.items():
        if key in _IGNORED_CONFIG_KEYS:
            continue
        attr = _CONFIG_ALIASES.get(key, key.replace("-", "_"))
        if not hasattr(args, attr):
            raise ConfigError(f"unknown config key {key!r}")
        if attr in explicit:
            continue
        if attr == "covariate":
            setattr(args, attr, list(value))
        elif attr in _BOOL_KEYS:
            setattr(args, attr, value.lower() in ("true", "1", "yes"))
        elif attr in _INT_KEYS:
            setattr(args, attr, int(value))
        elif attr in _FLOAT_KEYS:
            setattr(args, attr, float(value))
        elif attr == "split" and args.command == "simulate":
            setattr(args, attr, float(value))
        else:
            setattr(args, attr, value)
    return args


_REQUIRED_FLAGS = {
    "estimate": ("input", "out"),
    "covadjust": ("input", "out"),
    "synth": ("input", "out", "treated", "p0"),
    "simulate": ("model", "n", "p", "out"),
}


def run(argv):
    args = build_parser().parse_args(argv)
    args = _apply_config(args, argv)
    missing = [name for name in _REQUIRED_FLAGS[args.command]
               if getattr(args, name) is None]
    if missing:
        raise ConfigError(
            "missing required settings (flag or config): "
            + ", ".join(f"--{name}" for name in missing)
        )
    limiter = None
    if args.threads and args.threads > 0:
        try:
            from threadpoolctl import threadpool_limits as limiter
        except ImportError:
            limiter = None
    if limiter is not None:
        with limiter(limits=args.threads):
            return args.func(args)
    return args.func(args)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except LpcaError as exc:
        if isinstance(exc, DataError):
            code, kind = 2, "data"
        elif isinstance(exc, NumericalError):
            code, kind = 3, "numerical"
        else:
            code, kind = 1, "config"
        print(f"lpca: error: {exc}", file=sys.stderr)
        print(f'error-record kind={kind} exit={code} message="{exc}"', file=sys.stderr)
        return code
    except ValueError as exc:
        print(f"lpca: error: {exc}", file=sys.stderr)
        print(f'error-record kind=data exit=2 message="{exc}"', file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
