"""Lecture et validation d'un CSV de survie avec schéma Pandera"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pandera.errors import SchemaError, SchemaErrors

from lpsmc.dataset.helpers import center_columns, detect_encoding, missing_mask, save_rejected_rows
from lpsmc.dataset.schemas import ColumnMapping, survival_schema
from lpsmc.errors import DatasetError
from lpsmc.log import get_logger
from lpsmc.mixture_cure_model import SurvivalDataset


def _first_failure(failure_cases: pd.DataFrame) -> tuple[int | None, str | None, str]:
    cases = failure_cases.copy()
    if "index" in cases.columns:
        cases = cases.sort_values("index", na_position="last", kind="stable")
    first = cases.iloc[0]
    index = first.get("index")
    row = None if index is None or pd.isna(index) else int(index) + 1
    return row, first.get("column"), str(first.get("check", ""))


def read_survival_frame(
    csv_path: Path,
    mapping: ColumnMapping,
    delimiter: str = ",",
    rejected_output_path: Path | None = None,
    logger: logging.Logger | None = None,
    require_event: bool = True,
) -> pd.DataFrame:
    """
    Lit les colonnes de `mapping` et les convertit en nombres validés.

    Les lignes avec une cellule manquante sont écartées (et sauvegardées si
    `rejected_output_path` est fourni). Les numéros de ligne des erreurs sont
    ceux des lignes de données, la première ligne après l'en-tête étant la ligne 1.

    Args:
        csv_path: Chemin vers le fichier CSV
        mapping: Colonnes de temps, de statut et de covariables
        delimiter: Délimiteur
        rejected_output_path: Fichier optionnel pour les lignes écartées
        logger: Logger optionnel
        require_event: Exige au moins un statut 1 (faux pour Kaplan-Meier)

    Returns:
        DataFrame numérique (float) réduit aux colonnes utiles, index des lignes d'origine

    Raises:
        FileNotFoundError: Si le fichier n'existe pas
        DatasetError: Colonne absente, cellule non numérique, temps négatif, statut hors {0, 1}
    """
    logger = get_logger("lpsmc.dataset", logger)
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"Le fichier source n'existe pas: {csv_path}")

    encoding = detect_encoding(csv_path)
    logger.info(f"Lecture du fichier: {csv_path}")
    logger.debug(f"Encodage détecté: {encoding}, délimiteur: '{delimiter}'")
    raw = pd.read_csv(
        csv_path, sep=delimiter, dtype=str, keep_default_na=False, encoding=encoding
    )
    raw.columns = [str(c).strip() for c in raw.columns]

    for column in mapping.columns:
        if column not in raw.columns:
            raise DatasetError(f"Colonne absente du fichier {csv_path.name}", column=column)

    missing = missing_mask(raw, mapping.columns)
    if missing.any():
        logger.warning(
            f"⚠️  [{csv_path.name}] {int(missing.sum())} ligne(s) avec valeur manquante écartée(s)"
        )
        if rejected_output_path is not None:
            save_rejected_rows(raw[missing], rejected_output_path, delimiter, logger)
    kept = raw.loc[~missing, mapping.columns]

    numeric = pd.DataFrame(index=kept.index)
    for column in mapping.columns:
        values = pd.to_numeric(kept[column].str.strip(), errors="coerce")
        bad = values.isna()
        if bad.any():
            row = int(values.index[bad.to_numpy()][0]) + 1
            raise DatasetError(
                f"Valeur non numérique {kept.at[row - 1, column]!r}", row=row, column=column
            )
        numeric[column] = values.astype(float)

    try:
        survival_schema(mapping).validate(numeric, lazy=True)
    except SchemaErrors as e:
        row, column, check = _first_failure(e.failure_cases)
        raise DatasetError(f"Validation Pandera échouée: {check}", row=row, column=column) from e
    except SchemaError as e:
        row, column, check = _first_failure(e.failure_cases)
        raise DatasetError(f"Validation Pandera échouée: {check}", row=row, column=column) from e

    if numeric.empty:
        raise DatasetError(f"Aucune ligne valide dans {csv_path.name}")
    if require_event and numeric[mapping.status].sum() < 1:
        raise DatasetError(f"Aucun événement observé dans {csv_path.name}", column=mapping.status)

    logger.debug(f"Lignes retenues: {len(numeric)}")
    return numeric


def frame_to_dataset(frame: pd.DataFrame, mapping: ColumnMapping) -> SurvivalDataset:
    """Assemble X = (1, incidence) et Z = latence."""
    n = len(frame)
    X = np.column_stack([np.ones(n), frame[list(mapping.incidence)].to_numpy(dtype=float)])
    Z = frame[list(mapping.latency)].to_numpy(dtype=float).reshape(n, len(mapping.latency))
    return SurvivalDataset(
        frame[mapping.time].to_numpy(dtype=float),
        frame[mapping.status].to_numpy(dtype=float),
        X,
        Z,
        mapping.incidence,
        mapping.latency,
    )


def load_csv(
    csv_path: Path,
    mapping: ColumnMapping,
    center=(),
    delimiter: str = ",",
    rejected_output_path: Path | None = None,
    logger: logging.Logger | None = None,
) -> SurvivalDataset:
    """
    Charge un CSV de survie en SurvivalDataset.

    Args:
        csv_path: Chemin vers le fichier CSV
        mapping: Colonnes utilisées
        center: Covariables continues à centrer sur leur moyenne
        delimiter: Délimiteur
        rejected_output_path: Fichier optionnel pour les lignes écartées
        logger: Logger optionnel

    Returns:
        SurvivalDataset validé
    """
    logger = get_logger("lpsmc.dataset", logger)
    frame = read_survival_frame(csv_path, mapping, delimiter, rejected_output_path, logger)
    unknown = [c for c in center if c not in mapping.covariates]
    if unknown:
        raise DatasetError(f"Colonne à centrer absente des covariables: {', '.join(unknown)}")
    for column, mean in center_columns(frame, center).items():
        logger.info(f"Covariable '{column}' centrée (moyenne {mean:.4g})")
    dataset = frame_to_dataset(frame, mapping)
    logger.info(f"✅ {dataset.n} observation(s), p={dataset.p}, q={dataset.q}")
    return dataset
