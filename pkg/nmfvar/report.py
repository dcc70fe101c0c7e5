# report.py - Markdown summary of a fitted NMF-VAR model

from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from nmfvar.clustering_diagnostics import MembershipSeries, hard_assign
from nmfvar.nmf_solver import FactorModel
from nmfvar.var_analysis import CompanionForm, ParameterReduction, var_coefficients


class FitAnalyzer:
    """
    Turns a fitted model and its diagnostics into statistics, insights and a
    Markdown report (written next to the other fit artifacts as report.md).
    """

    def __init__(self, basis_names: Optional[List[str]] = None):
        self.basis_names = basis_names

    def analyze(
        self,
        model: FactorModel,
        companion: Optional[CompanionForm] = None,
        reduction: Optional[ParameterReduction] = None,
        variable_memberships: Optional[MembershipSeries] = None,
    ) -> Dict[str, Any]:
        """
        Collect headline statistics and plain-language insights

        Args:
            model: Fitted factor model
            companion: Companion form (lag models only)
            reduction: Parameter accounting (lag models only)
            variable_memberships: Row-normalized basis, for hard assignment of variables

        Returns:
            Dict with 'statistics', 'insights' and 'recommendations'
        """
        diag = model.diagnostics
        analysis: Dict[str, Any] = {
            'statistics': {
                'variables': model.n_variables,
                'rank': model.rank,
                'lags': model.lag_order,
                'covariates': model.covariates,
                'iterations': diag.iterations,
                'converged': diag.converged,
                'objective': float(diag.objective_trace[-1]),
                'r_squared': diag.r_squared,
            },
            'insights': [],
            'recommendations': [],
        }

        if diag.r_squared is not None:
            analysis['insights'].append(self._fit_quality_insight(diag.r_squared))

        if companion is not None:
            analysis['statistics']['spectral_radius'] = companion.spectral_radius
            analysis['insights'].append(self._stability_insight(companion))
            analysis['insights'].extend(self._dominant_lag_insights(model))

        if reduction is not None:
            analysis['statistics']['parameters'] = reduction.to_dict()
            analysis['insights'].append(
                f"Regression parameters: {reduction.nmfvar_params} vs {reduction.var_params} for a full VAR "
                f"({reduction.ratio:.1%})"
            )

        if variable_memberships is not None:
            labels = hard_assign(variable_memberships)
            groups: Dict[str, List[str]] = {}
            for name, label in zip(variable_memberships.labels, labels):
                groups.setdefault(label.name, []).append(name)
            analysis['statistics']['variable_clusters'] = groups

        if not diag.converged:
            analysis['recommendations'].append(
                f"⚠️ Not converged after {diag.iterations} iterations: raise --max-iter or loosen --tol"
            )
        if companion is not None and not companion.stationary:
            analysis['recommendations'].append(
                "📉 Process is not stationary: consider differencing or a smaller rank before forecasting"
            )
        if diag.degenerate_rows:
            analysis['recommendations'].append(
                f"📊 Data quality: rows {diag.degenerate_rows} are all zero in the fitted span"
            )
        return analysis

    def _fit_quality_insight(self, r2: float) -> str:
        if r2 >= 0.95:
            return f"Close fit: R² = {r2:.3f}"
        if r2 >= 0.5:
            return f"Moderate fit: R² = {r2:.3f}"
        return f"Weak fit: R² = {r2:.3f}; the rank may be too small"

    def _stability_insight(self, companion: CompanionForm) -> str:
        rho = companion.spectral_radius
        if companion.stationary:
            margin = 1.0 - rho
            if margin < 0.01:
                return f"Stationary, but only just: ρ(F) = {rho:.4f} is slightly below 1"
            return f"Stationary: ρ(F) = {rho:.4f} < 1"
        return f"Not stationary: ρ(F) = {rho:.4f} ≥ 1"

    def _dominant_lag_insights(self, model: FactorModel) -> List[str]:
        coeffs = var_coefficients(model)
        weights = [float(np.sum(xi)) for xi in coeffs.xi]
        total = sum(weights)
        if total <= 0:
            return ["All lag coefficients are zero; forecasts equal the intercept"]
        best = int(np.argmax(weights))
        return [f"Strongest lag: t-{best + 1} carries {weights[best] / total:.0%} of the total lag weight"]

    def _matrix_table(self, matrix: np.ndarray, rows: List[str], columns: List[str]) -> str:
        df = pd.DataFrame(matrix, index=rows, columns=columns)
        lines = ["| | " + " | ".join(columns) + " |", "|---" * (len(columns) + 1) + "|"]
        for name, row in df.iterrows():
            lines.append(f"| {name} | " + " | ".join(f"{v:.3f}" if v >= 5e-4 else "" for v in row) + " |")
        return "\n".join(lines) + "\n"

    def generate_report(
        self,
        model: FactorModel,
        companion: Optional[CompanionForm] = None,
        reduction: Optional[ParameterReduction] = None,
        variable_memberships: Optional[MembershipSeries] = None,
        title: str = "NMF-VAR Fit Report",
    ) -> str:
        """
        Generate a Markdown report of the fit

        Returns:
            Markdown-formatted report
        """
        analysis = self.analyze(model, companion, reduction, variable_memberships)
        stats = analysis['statistics']
        bases = self.basis_names or [f"Basis{i + 1}" for i in range(model.rank)]
        names = model.variable_names or [f"var{i + 1}" for i in range(model.n_variables)]

        report = f"# {title}\n\n"
        report += f"**Seed:** {model.seed}\n\n"

        report += "## Summary\n\n"
        report += f"- **Variables (P):** {stats['variables']}\n"
        report += f"- **Rank (Q):** {stats['rank']}\n"
        report += f"- **Covariates:** {stats['covariates']}"
        report += f" (D = {stats['lags']})\n" if stats['covariates'] == 'lags' else "\n"
        report += f"- **Iterations:** {stats['iterations']} ({'converged' if stats['converged'] else 'not converged'})\n"
        report += f"- **Final objective:** {stats['objective']:.6g}\n"
        if stats['r_squared'] is not None:
            report += f"- **R²:** {stats['r_squared']:.4f}\n"
        if 'spectral_radius' in stats:
            report += f"- **Spectral radius ρ(F):** {stats['spectral_radius']:.4f}\n"

        report += "\n## Basis matrix X\n\n"
        report += self._matrix_table(model.basis, names, bases)

        if model.covariates == 'lags':
            columns = [f"{n}[t-{d}]" for d in range(1, model.lag_order + 1) for n in names] + ["const"]
            report += "\n## Parameter matrix Θ\n\n"
            report += self._matrix_table(model.params, bases, columns)

        if 'variable_clusters' in stats:
            report += "\n## Variable clusters\n\n"
            for basis, members in stats['variable_clusters'].items():
                report += f"- **{basis}:** {', '.join(members)}\n"

        if analysis['insights']:
            report += "\n## Key Insights\n\n"
            for insight in analysis['insights']:
                report += f"- {insight}\n"

        if analysis['recommendations']:
            report += "\n## Recommendations\n\n"
            for rec in analysis['recommendations']:
                report += f"- {rec}\n"

        return report
