"""Command-line front door: ``python -m nmfvar {fit,cv,forecast,compare}``.

Exit codes: 0 success, 2 input error, 3 configuration/feasibility error,
4 numeric error.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from nmfvar import artifacts
from nmfvar.clustering_diagnostics import default_basis_names, time_membership, variable_membership
from nmfvar.design_matrices import build_design
from nmfvar.errors import ConfigurationError, NmfVarError, NumericError
from nmfvar.model_selection import compare_methods, cross_validate
from nmfvar.nmf_solver import DEFAULT_MAX_ITER, DEFAULT_SEED, DEFAULT_TOL, FitOptions, fit
from nmfvar.preprocessing import apply_pipeline, invert_values, parse_pipeline
from nmfvar.report import FitAnalyzer
from nmfvar.var_analysis import companion_form, fit_ols_var, forecast, influence_edges, parameter_reduction, var_coefficients

logger = logging.getLogger("nmfvar.cli")

DEFAULT_FOLDS = 10
DEFAULT_EDGE_THRESHOLD = 0.01
SEED_ENV = "NMFVAR_SEED"

EXIT_OK = 0


@dataclass
class RunConfig:
    """Everything one CLI invocation needs, resolved from flags and environment."""

    command: str
    input_path: Optional[Path] = None
    output_dir: Path = Path(".")
    rank: int = 1
    lags: int = 1
    covariates: str = "lags"
    kernel_beta: Optional[float] = None
    transform: str = ""
    seed: int = DEFAULT_SEED
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    folds: int = DEFAULT_FOLDS
    d_candidates: List[int] = field(default_factory=list)
    q_candidates: List[int] = field(default_factory=list)
    model_path: Optional[Path] = None
    horizon: int = 1
    fix_basis: Optional[str] = None
    basis_names: List[str] = field(default_factory=list)
    blocked_folds: bool = False
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD
    workers: int = 1
    line_search: bool = False

    def validate(self) -> None:
        if self.command in ("fit", "cv", "compare") and self.input_path is None:
            raise ConfigurationError(f"'{self.command}' needs --input")
        if self.command == "forecast":
            if self.model_path is None:
                raise ConfigurationError("'forecast' needs --model")
            if self.horizon < 1:
                raise ConfigurationError(f"--horizon must be >= 1, got {self.horizon}")
        if self.covariates == "kernel" and (self.kernel_beta is None or self.kernel_beta <= 0):
            raise ConfigurationError("kernel covariates need a positive --kernel-beta")
        if self.command == "compare" and (self.kernel_beta is None or self.kernel_beta <= 0):
            raise ConfigurationError("'compare' needs a positive --kernel-beta for the kernel method")
        if self.basis_names and self.fix_basis is None and len(self.basis_names) != self.rank:
            raise ConfigurationError(f"--basis-names lists {len(self.basis_names)} names for rank {self.rank}")

    def fit_options(self, n_variables: int) -> FitOptions:
        return FitOptions(
            rank=self.rank,
            max_iter=self.max_iter,
            tol=self.tol,
            seed=self.seed,
            fixed_basis=self._fixed_basis(n_variables),
            line_search=self.line_search,
        )

    def _fixed_basis(self, n_variables: int) -> Optional[np.ndarray]:
        if self.fix_basis is None:
            return None
        if self.fix_basis == "scalar":
            return np.ones((n_variables, 1))
        return artifacts.read_basis_csv(self.fix_basis, n_variables)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage errors as configuration errors (exit 3)."""

    def error(self, message):
        raise ConfigurationError(message)


def _int_list(text: str) -> List[int]:
    """'1-14' or '1,2,5' or a mix of both."""
    values: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-", 1))
                values.extend(range(lo, hi + 1))
            else:
                values.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer list: '{text}'")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nmfvar", description="NMF-VAR: low-rank non-negative vector autoregression")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(p):
        p.add_argument("--input", "-i", type=Path, help="CSV: first column time labels, then one column per variable")
        p.add_argument("--output-dir", "-o", type=Path, default=Path("."), help="where artifacts are written")
        p.add_argument("--transform", default="", help="comma list, e.g. 'log1p,ma7,diff,minmax'")
        p.add_argument("--rank", "-q", type=int, default=1, help="number of bases Q")
        p.add_argument("--lags", "-d", type=int, default=1, help="lag order D")
        p.add_argument("--seed", type=int, default=None, help=f"random seed (default ${SEED_ENV} or {DEFAULT_SEED})")
        p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
        p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="relative objective change for convergence")
        p.add_argument("--line-search", action="store_true", help="extrapolate each sweep along its step")

    fit_p = sub.add_parser("fit", help="fit a model and write artifacts")
    data_flags(fit_p)
    mode = fit_p.add_mutually_exclusive_group()
    mode.add_argument("--kernel-beta", type=float, default=None, help="Gaussian-kernel covariates with this bandwidth")
    mode.add_argument("--identity", action="store_true", help="identity covariates (standard NMF)")
    fit_p.add_argument("--fix-basis", default=None, help="'scalar' or a CSV with a fixed P x Q basis")
    fit_p.add_argument("--basis-names", default="", help="comma list of basis names for the outputs")
    fit_p.add_argument("--edge-threshold", type=float, default=DEFAULT_EDGE_THRESHOLD)

    cv_p = sub.add_parser("cv", help="cross-validate candidate ranks and lag orders")
    data_flags(cv_p)
    cv_p.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    cv_p.add_argument("--d-candidates", type=_int_list, default=None, help="e.g. '1-14'")
    cv_p.add_argument("--q-candidates", type=_int_list, default=None, help="e.g. '2,3,4'")
    cv_p.add_argument("--blocked-folds", action="store_true", help="contiguous folds instead of shuffled")
    cv_p.add_argument("--workers", type=int, default=1, help="concurrent fold fits")

    fc_p = sub.add_parser("forecast", help="forecast from a fitted lag model")
    fc_p.add_argument("--model", "-m", type=Path, required=True, help="model.json written by 'fit'")
    fc_p.add_argument("--horizon", type=int, default=1)
    fc_p.add_argument("--output-dir", "-o", type=Path, default=Path("."))

    cmp_p = sub.add_parser("compare", help="R² of NMF, kernel NMF, NMF-VAR and OLS VAR on one dataset")
    data_flags(cmp_p)
    cmp_p.add_argument("--kernel-beta", type=float, required=True)
    return parser


def resolve_seed(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.getenv(SEED_ENV)
    if env is None or env.strip() == "":
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV} must be an integer, got '{env}'")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    get = lambda name, default=None: getattr(args, name, default)  # noqa: E731
    covariates = "lags"
    if get("identity"):
        covariates = "identity"
    elif args.command == "fit" and get("kernel_beta") is not None:
        covariates = "kernel"
    config = RunConfig(
        command=args.command,
        input_path=get("input"),
        output_dir=get("output_dir", Path(".")),
        rank=get("rank", 1),
        lags=get("lags", 1),
        covariates=covariates,
        kernel_beta=get("kernel_beta"),
        transform=get("transform", ""),
        seed=resolve_seed(get("seed")),
        max_iter=get("max_iter", DEFAULT_MAX_ITER),
        tol=get("tol", DEFAULT_TOL),
        folds=get("folds", DEFAULT_FOLDS),
        d_candidates=get("d_candidates") or [get("lags", 1)],
        q_candidates=get("q_candidates") or [get("rank", 1)],
        model_path=get("model"),
        horizon=get("horizon", 1),
        fix_basis=get("fix_basis"),
        basis_names=[n.strip() for n in (get("basis_names") or "").split(",") if n.strip()],
        blocked_folds=bool(get("blocked_folds")),
        edge_threshold=get("edge_threshold", DEFAULT_EDGE_THRESHOLD),
        workers=get("workers", 1),
        line_search=bool(get("line_search")),
    )
    config.validate()
    return config


def _load_preprocessed(config: RunConfig):
    raw = artifacts.read_frame_csv(config.input_path)
    frame, pipeline = apply_pipeline(raw, parse_pipeline(config.transform))
    return frame, pipeline


def cmd_fit(config: RunConfig) -> int:
    frame, pipeline = _load_preprocessed(config)
    design = build_design(frame, config.covariates, config.lags, config.kernel_beta)
    model = fit(design, config.fit_options(frame.n_variables))
    bases = config.basis_names or default_basis_names(model.rank)
    if len(bases) != model.rank:
        raise ConfigurationError(f"--basis-names lists {len(bases)} names for {model.rank} bases")

    fitted = model.predict(design.covariates)
    if not np.all(np.isfinite(fitted)):
        raise NumericError("fitted values contain NaN or inf")
    span = design.timestamps
    diag = model.diagnostics

    diagnostics = diag.to_dict()
    diagnostics.update({"P": frame.n_variables, "T": frame.n_times, "Q": model.rank, "D": model.lag_order,
                        "covariates": model.covariates, "pipeline": pipeline.describe()})

    companion = reduction = None
    if model.covariates == "lags":
        companion = companion_form(var_coefficients(model))
        reduction = parameter_reduction(frame.n_variables, model.rank, model.lag_order)
        diagnostics.update(companion.to_dict())
        diagnostics["parameters"] = reduction.to_dict()
        diagnostics["ols_var_r_squared"] = fit_ols_var(frame, model.lag_order).r_squared
    else:
        diagnostics["parameters"] = {"nmfvar_params": int(model.basis.size + model.params.size)}

    live_rows = [i for i in range(model.n_variables) if i not in diag.degenerate_rows]
    var_members = variable_membership(model.basis[live_rows], [frame.variable_names[i] for i in live_rows], bases)
    time_members = time_membership(diag.coefficient_matrix, span, bases)

    files: Dict[str, str] = {
        "model.json": artifacts.dumps_json(artifacts.model_document(model, pipeline, frame)),
        "fitted.csv": artifacts.frame_csv(frame, fitted, span),
        "residuals.csv": artifacts.frame_csv(frame, design.target - fitted, span),
        "memberships_time.csv": artifacts.table_csv(artifacts.TIME_COLUMN, time_members.labels, bases,
                                                    time_members.as_rows()),
        "memberships_vars.csv": artifacts.table_csv("variable", var_members.labels, bases, var_members.as_rows()),
        "diagnostics.json": artifacts.dumps_json(diagnostics),
        "report.md": FitAnalyzer(bases).generate_report(model, companion, reduction, var_members),
    }
    if model.covariates == "lags":
        edges = influence_edges(model, config.edge_threshold, bases)
        files["edges.csv"] = artifacts.records_csv(pd.DataFrame(
            [(e.source, e.target, e.weight) for e in edges], columns=["source", "target", "weight"]))

    for path in artifacts.write_text_files(config.output_dir, files):
        logger.debug(f"wrote {path}")
    r2 = diag.r_squared
    print(f"✅ Fit complete: R² = {'n/a' if r2 is None else f'{r2:.4f}'}"
          + (f", ρ(F) = {companion.spectral_radius:.4f}" if companion else "")
          + f" → {config.output_dir}")
    return EXIT_OK


def cmd_cv(config: RunConfig) -> int:
    frame, _ = _load_preprocessed(config)
    report = cross_validate(
        frame,
        q_candidates=config.q_candidates,
        d_candidates=config.d_candidates,
        folds=config.folds,
        seed=config.seed,
        fit_options=config.fit_options(frame.n_variables),
        blocked=config.blocked_folds,
        workers=config.workers,
    )
    artifacts.write_text_files(config.output_dir, {"cv_report.json": artifacts.dumps_json(report.to_dict())})
    print(f"{'Q':>4} {'D':>4} {'mean held-out SSE':>20}")
    for q, d in report.candidates:
        marker = "  ← chosen" if (q, d) == report.chosen else ""
        print(f"{q:>4} {d:>4} {report.mean_sse[(q, d)]:>20.8g}{marker}")
    print(f"chosen: Q={report.chosen[0]} D={report.chosen[1]}")
    return EXIT_OK


def cmd_forecast(config: RunConfig) -> int:
    model, pipeline, doc = artifacts.load_model(config.model_path)
    if model.covariates != "lags":
        raise ConfigurationError("forecasting requires lag covariates")
    history = np.asarray(doc.get("history") or [], dtype=float)
    predicted = forecast(model, history, config.horizon)
    values, smoothed = invert_values(predicted, pipeline, continuation=True)
    if not np.all(np.isfinite(values)):
        raise NumericError("forecast contains NaN or inf after inverting the pipeline")
    comment = None
    if smoothed:
        comment = "smoothed-scale: the pipeline contains a moving average, values are on the smoothed scale"
    names = model.variable_names or [f"var{i + 1}" for i in range(model.n_variables)]
    steps = [f"h{h + 1}" for h in range(config.horizon)]
    text = artifacts.table_csv("variable", names, steps, values, comment=comment)
    artifacts.write_text_files(config.output_dir, {"forecast.csv": text})
    print(f"✅ Forecast for {config.horizon} step(s) → {Path(config.output_dir) / 'forecast.csv'}")
    return EXIT_OK


def cmd_compare(config: RunConfig) -> int:
    frame, _ = _load_preprocessed(config)
    scores = compare_methods(frame, config.rank, config.lags, config.kernel_beta,
                             config.fit_options(frame.n_variables))
    text = artifacts.records_csv(pd.DataFrame(
        [(s.method, s.r_squared, s.n_params) for s in scores], columns=["method", "r_squared", "n_params"]))
    artifacts.write_text_files(config.output_dir, {"comparison.csv": text})
    for s in scores:
        print(f"{s.method:>8}  R² = {s.r_squared:.4f}  ({s.n_params} parameters)")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "forecast": cmd_forecast, "compare": cmd_compare}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except NmfVarError as exc:
        print(f"nmfvar: {exc}", file=sys.stderr)
        return exc.exit_code

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        config = config_from_args(args)
        return COMMANDS[config.command](config)
    except NmfVarError as exc:
        logger.error(f"❌ {exc}")
        return exc.exit_code
    except Exception as exc:  # anything unexpected is a numeric/internal failure
        logger.exception(f"❌ unexpected failure: {exc}")
        return NumericError.exit_code
