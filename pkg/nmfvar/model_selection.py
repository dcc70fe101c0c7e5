"""Choosing (Q, D) by k-fold cross-validation, plus rank sweeps and method comparison.

Cross-validation partitions the *target columns* of the lag design. A model
fitted on the training columns predicts a held-out column as XΘa_t, where
a_t holds the already observed lags, so no refitting is needed per column.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from nmfvar.clustering_diagnostics import r_squared
from nmfvar.design_matrices import build_identity_design, build_kernel_design, build_lag_design
from nmfvar.errors import ConfigurationError
from nmfvar.nmf_solver import FitOptions, fit
from nmfvar.preprocessing import TimeSeriesFrame
from nmfvar.var_analysis import companion_form, fit_ols_var, parameter_reduction, var_coefficients

logger = logging.getLogger("nmfvar.model_selection")

Candidate = Tuple[int, int]  # (Q, D)


@dataclass
class CVReport:
    candidates: List[Candidate]
    fold_sse: Dict[Candidate, List[float]]
    mean_sse: Dict[Candidate, float]
    chosen: Candidate
    folds: int
    seed: int
    blocked: bool = False
    column_counts: Dict[Candidate, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "folds": self.folds,
            "seed": self.seed,
            "blocked": self.blocked,
            "chosen": {"rank": self.chosen[0], "lags": self.chosen[1]},
            "candidates": [
                {
                    "rank": q,
                    "lags": d,
                    "fold_sse": self.fold_sse[(q, d)],
                    "mean_sse": self.mean_sse[(q, d)],
                    "columns": self.column_counts.get((q, d)),
                }
                for q, d in self.candidates
            ],
        }


def _fold_ids(n_columns: int, folds: int, seed: int, blocked: bool) -> np.ndarray:
    """Fold index per target column; fold sizes differ by at most one."""
    ids = np.empty(n_columns, dtype=int)
    if blocked:
        for fold, chunk in enumerate(np.array_split(np.arange(n_columns), folds)):
            ids[chunk] = fold
    else:
        order = np.random.default_rng(seed).permutation(n_columns)
        ids[order] = np.arange(n_columns) % folds
    return ids


def cross_validate(
    frame: TimeSeriesFrame,
    q_candidates: Sequence[int],
    d_candidates: Sequence[int],
    folds: int,
    seed: int,
    fit_options: FitOptions,
    blocked: bool = False,
    workers: int = 1,
) -> CVReport:
    """k-fold CV over every (Q, D) pair.

    The criterion is the held-out SSE pooled over folds divided by the number
    of target columns, since larger D leaves fewer columns. The lowest
    criterion wins; ties go to the smaller D, then the smaller Q.
    """
    p, t = frame.values.shape
    if folds < 2:
        raise ConfigurationError(f"need at least 2 folds, got {folds}")
    candidates = [(int(q), int(d)) for d in sorted(set(d_candidates)) for q in sorted(set(q_candidates))]
    if not candidates:
        raise ConfigurationError("no (Q, D) candidates given")
    for q, d in candidates:
        n_columns = t - d
        if d < 1 or d >= t - folds:
            raise ConfigurationError(f"infeasible candidate (Q={q}, D={d}): D must satisfy 1 <= D < T - k = {t - folds}")
        if q < 1 or q > min(p, n_columns):
            raise ConfigurationError(f"infeasible candidate (Q={q}, D={d}): Q must be <= min(P, T-D) = {min(p, n_columns)}")
        if n_columns - int(np.ceil(n_columns / folds)) < q:
            raise ConfigurationError(f"infeasible candidate (Q={q}, D={d}): training folds have fewer than Q columns")

    designs = {d: build_lag_design(frame, d) for d in sorted({d for _, d in candidates})}
    fold_ids = {d: _fold_ids(design.n_columns, folds, seed, blocked) for d, design in designs.items()}

    def held_out_sse(task: Tuple[int, int, int]) -> float:
        q, d, fold = task
        design = designs[d]
        test = np.flatnonzero(fold_ids[d] == fold)
        train = np.flatnonzero(fold_ids[d] != fold)
        model = fit(design.subset(train), replace(fit_options, rank=q, seed=seed, fixed_basis=None))
        predicted = model.predict(design.covariates[:, test])
        return float(np.sum((design.target[:, test] - predicted) ** 2))

    tasks = [(q, d, fold) for q, d in candidates for fold in range(folds)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(tasks, pool.map(held_out_sse, tasks)))
    else:
        results = {task: held_out_sse(task) for task in tasks}

    fold_sse = {(q, d): [results[(q, d, fold)] for fold in range(folds)] for q, d in candidates}
    column_counts = {(q, d): designs[d].n_columns for q, d in candidates}
    mean_sse = {c: float(np.sum(fold_sse[c])) / column_counts[c] for c in candidates}
    chosen = min(candidates, key=lambda c: (mean_sse[c], c[1], c[0]))
    logger.info(f"cross-validation chose Q={chosen[0]}, D={chosen[1]} (mean held-out SSE {mean_sse[chosen]:.6g})")
    return CVReport(
        candidates=candidates,
        fold_sse=fold_sse,
        mean_sse=mean_sse,
        chosen=chosen,
        folds=folds,
        seed=seed,
        blocked=blocked,
        column_counts=column_counts,
    )


@dataclass
class RankSweepRow:
    rank: int
    r_squared: Optional[float]
    spectral_radius: float
    stationary: bool
    n_params: int


def rank_sweep(frame: TimeSeriesFrame, ranks: Sequence[int], lag_order: int,
               fit_options: FitOptions) -> List[RankSweepRow]:
    """Fit NMF-VAR at each rank and report fit quality next to stability."""
    design = build_lag_design(frame, lag_order)
    rows = []
    for q in ranks:
        model = fit(design, replace(fit_options, rank=q, fixed_basis=None))
        companion = companion_form(var_coefficients(model))
        rows.append(RankSweepRow(
            rank=q,
            r_squared=model.diagnostics.r_squared,
            spectral_radius=companion.spectral_radius,
            stationary=companion.stationary,
            n_params=parameter_reduction(frame.n_variables, q, lag_order).nmfvar_params,
        ))
        logger.info(f"rank {q}: R²={model.diagnostics.r_squared}, ρ(F)={companion.spectral_radius:.4f}")
    return rows


@dataclass
class MethodScore:
    method: str
    r_squared: float
    n_params: int


def compare_methods(frame: TimeSeriesFrame, rank: int, lag_order: int, kernel_beta: float,
                    fit_options: FitOptions) -> List[MethodScore]:
    """Standard NMF, kernel NMF, NMF-VAR and an OLS VAR scored on the span t = D+1..T."""
    p, t = frame.values.shape
    options = replace(fit_options, rank=rank, fixed_basis=None)
    span = slice(lag_order, t)
    observed = frame.values[:, span]

    plain = fit(build_identity_design(frame), options)
    plain_fit = plain.predict(np.eye(t))[:, span]

    kernel_design = build_kernel_design(frame.timestamps, kernel_beta, target=frame.values.copy(),
                                        variable_names=frame.variable_names)
    kernel = fit(kernel_design, options)
    kernel_fit = kernel.predict(kernel_design.covariates)[:, span]

    lag_design = build_lag_design(frame, lag_order)
    nmfvar = fit(lag_design, options)
    nmfvar_fit = nmfvar.predict(lag_design.covariates)

    ols = fit_ols_var(frame, lag_order)
    scores = [
        MethodScore("nmf", r_squared(observed, plain_fit), p * rank + rank * t),
        MethodScore("kernel", r_squared(observed, kernel_fit), p * rank + rank * t),
        MethodScore("nmf-var", r_squared(observed, nmfvar_fit), parameter_reduction(p, rank, lag_order).nmfvar_params),
        MethodScore("var", ols.r_squared, ols.n_params),
    ]
    for score in scores:
        logger.info(f"{score.method}: R²={score.r_squared:.4f} with {score.n_params} parameters")
    return scores
