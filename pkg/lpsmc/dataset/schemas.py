"""Schémas Pandera des données d'entrée et des tables produites"""

from dataclasses import dataclass

import numpy as np
import pandera.pandas as pa


@dataclass(frozen=True)
class ColumnMapping:
    """Colonnes du CSV : temps, statut, covariables d'incidence et de latence."""

    time: str
    status: str
    incidence: tuple[str, ...] = ()
    latency: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "incidence", tuple(self.incidence))
        object.__setattr__(self, "latency", tuple(self.latency))

    @property
    def covariates(self) -> list[str]:
        """Covariables distinctes, dans l'ordre d'apparition."""
        return list(dict.fromkeys(self.incidence + self.latency))

    @property
    def columns(self) -> list[str]:
        return [self.time, self.status, *self.covariates]


def survival_schema(mapping: ColumnMapping) -> pa.DataFrameSchema:
    """Schéma des colonnes numériques après conversion."""
    columns = {
        mapping.time: pa.Column(
            float,
            checks=[
                pa.Check(np.isfinite, error="Le temps doit être fini"),
                pa.Check.ge(0, error="Le temps de suivi doit être positif"),
            ],
        ),
        mapping.status: pa.Column(
            float, checks=pa.Check.isin([0.0, 1.0], error="Le statut doit valoir 0 ou 1")
        ),
    }
    for name in mapping.covariates:
        columns[name] = pa.Column(
            float, checks=pa.Check(np.isfinite, error="La covariable doit être finie")
        )
    return pa.DataFrameSchema(columns=columns, strict=False, coerce=True)


_probability = pa.Check.in_range(0.0, 1.0)

schema_coefficients = pa.DataFrameSchema(
    columns={
        "part": pa.Column(str, checks=pa.Check.isin(["incidence", "latency", "spline"])),
        "parameter": pa.Column(str),
        "label": pa.Column(str),
        "estimate": pa.Column(float),
        "sd": pa.Column(float, checks=pa.Check.ge(0)),
        "level": pa.Column(float, checks=_probability),
        "lower": pa.Column(float, nullable=True),
        "upper": pa.Column(float, nullable=True),
    },
    strict=True,
)

schema_curve = pa.DataFrameSchema(
    columns={
        "t": pa.Column(float, checks=pa.Check.ge(0)),
        "estimate": pa.Column(float, checks=_probability),
        "lower": pa.Column(float, checks=_probability),
        "upper": pa.Column(float, checks=_probability),
    },
    checks=pa.Check(lambda df: (df["lower"] <= df["upper"]).all(), error="lower > upper"),
    strict=True,
)

schema_v_profile = pa.DataFrameSchema(
    columns={
        "v": pa.Column(float),
        "log_posterior": pa.Column(float),
        "density": pa.Column(float, checks=pa.Check.ge(0)),
    },
    strict=True,
)

schema_intervals = pa.DataFrameSchema(
    columns={
        "target": pa.Column(str),
        "time": pa.Column(float, nullable=True),
        "estimate": pa.Column(float),
        "lower": pa.Column(float),
        "upper": pa.Column(float),
        "level": pa.Column(float, checks=_probability),
        "transform": pa.Column(str),
        "note": pa.Column(str),
    },
    strict=True,
)

schema_kaplan_meier = pa.DataFrameSchema(
    columns={
        "t": pa.Column(float, checks=pa.Check.ge(0)),
        "at_risk": pa.Column(int, checks=pa.Check.ge(0)),
        "events": pa.Column(int, checks=pa.Check.ge(0)),
        "censored": pa.Column(int, checks=pa.Check.ge(0)),
        "survival": pa.Column(float, checks=_probability),
    },
    strict=True,
)

# Dictionnaire des schémas des tables produites
schemas = {
    "coefficients": schema_coefficients,
    "curve": schema_curve,
    "v_profile": schema_v_profile,
    "intervals": schema_intervals,
    "kaplan_meier": schema_kaplan_meier,
}
