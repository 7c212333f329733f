"""Tables produites : coefficients (CSV et texte), écriture validée des CSV"""

from pathlib import Path

import numpy as np
import pandas as pd

from lpsmc.credible_intervals import ci_latent
from lpsmc.dataset.schemas import schemas
from lpsmc.laplace_inference import FitResult

_GREEK = {"beta": "β", "gamma": "γ", "theta": "θ"}


def write_table(df: pd.DataFrame, path: Path, schema_name: str) -> Path:
    """Valide `df` avec le schéma nommé puis l'écrit en CSV."""
    if schema_name not in schemas:
        available = ", ".join(schemas.keys())
        raise ValueError(f"Schéma '{schema_name}' introuvable. Schémas disponibles: {available}")
    schemas[schema_name].validate(df)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return path


def _rows(fit: FitResult, include_spline: bool):
    for m in range(fit.p + 1):
        label = "Intercept" if m == 0 else fit.incidence_labels[m - 1]
        yield "incidence", f"beta{m}", label, fit.beta_slice.start + m
    for s in range(fit.q):
        yield "latency", f"gamma{s + 1}", fit.latency_labels[s], fit.gamma_slice.start + s
    if include_spline:
        for k in range(fit.K):
            yield "spline", f"theta{k + 1}", f"B{k + 1}", k


def coefficient_table(
    fit: FitResult, levels=(0.95,), include_spline: bool = False
) -> pd.DataFrame:
    """
    Estimation, écart-type et intervalles de crédibilité des coefficients.

    Une ligne par (paramètre, niveau). Les coefficients de spline sont omis par
    défaut ; la coordonnée fixée theta_K a un écart-type nul et pas d'intervalle.
    """
    records = []
    for part, parameter, label, h in _rows(fit, include_spline):
        for level in levels:
            record = {
                "part": part,
                "parameter": parameter,
                "label": label,
                "estimate": float(fit.mean[h]),
                "sd": float(np.sqrt(max(fit.covariance[h, h], 0.0))),
                "level": float(level),
                "lower": np.nan,
                "upper": np.nan,
            }
            if h != fit.constrained_index:
                interval = ci_latent(fit, h, alpha=1.0 - level)
                record["lower"], record["upper"] = interval.lower, interval.upper
            records.append(record)
    return pd.DataFrame.from_records(
        records,
        columns=["part", "parameter", "label", "estimate", "sd", "level", "lower", "upper"],
    )


def _symbol(parameter: str) -> str:
    for name, greek in _GREEK.items():
        if parameter.startswith(name):
            return greek + parameter[len(name) :]
    return parameter


def format_coefficients_text(table: pd.DataFrame) -> str:
    """
    Mise en page texte : "β2 (TRT)  -0.572  0.289  [-1.046; -0.097]".

    Une colonne d'intervalle par niveau présent dans la table.
    """
    levels = sorted(table["level"].unique())
    header = f"{'Paramètre':<24}{'Estimation':>11}{'sd':>8}" + "".join(
        f"  {'IC' + format(100 * level, 'g') + '%':<20}" for level in levels
    )
    sections = {"incidence": "Incidence", "latency": "Latence", "spline": "Spline"}
    lines = [header]
    for part, title in sections.items():
        block = table[table["part"] == part]
        if block.empty:
            continue
        lines.append(title)
        for parameter, rows in block.groupby("parameter", sort=False):
            first = rows.iloc[0]
            name = f"{_symbol(parameter)} ({first['label']})"
            line = f"  {name:<22}{first['estimate']:>11.3f}{first['sd']:>8.3f}"
            for level in levels:
                row = rows[rows["level"] == level]
                if row.empty or pd.isna(row["lower"].iloc[0]):
                    line += f"  {'-':<20}"
                else:
                    bracket = f"[{row['lower'].iloc[0]:.3f}; {row['upper'].iloc[0]:.3f}]"
                    line += f"  {bracket:<20}"
            lines.append(line.rstrip())
    return "\n".join(lines) + "\n"
