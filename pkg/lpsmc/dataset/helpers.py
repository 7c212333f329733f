"""Fonctions helper pour la lecture des fichiers de survie"""

import logging
from pathlib import Path

import chardet
import pandas as pd

from lpsmc.log import get_logger

# Jetons traités comme valeurs manquantes
MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "."})


def detect_encoding(file_path: Path) -> str:
    """
    Détecte l'encodage d'un fichier texte.

    Args:
        file_path: Chemin vers le fichier

    Returns:
        Encodage détecté (par défaut 'utf-8')
    """
    with open(file_path, "rb") as f:
        raw_data = f.read(10000)

    if not raw_data:
        return "utf-8"

    result = chardet.detect(raw_data)
    encoding = result.get("encoding") or "utf-8"
    confidence = result.get("confidence", 0)

    # Si la confiance est faible, essayer utf-8 en premier
    if confidence < 0.7:
        try:
            with open(file_path, encoding="utf-8") as f:
                f.read()
            return "utf-8"
        except UnicodeDecodeError:
            pass

    try:
        with open(file_path, encoding=encoding) as f:
            f.read()
        return encoding
    except (UnicodeDecodeError, LookupError):
        # latin-1 accepte tous les octets
        return "latin-1"


def missing_mask(df: pd.DataFrame, columns: list[str]) -> pd.Series:
    """Lignes dont au moins une des colonnes est vide ou manquante."""
    stripped = df[columns].apply(lambda col: col.str.strip())
    return stripped.isin(MISSING_TOKENS).any(axis=1)


def save_rejected_rows(
    rejected: pd.DataFrame,
    output_path: Path,
    delimiter: str = ",",
    logger: logging.Logger | None = None,
) -> None:
    """
    Sauvegarde les lignes rejetées (avec leur numéro de ligne de données) dans un CSV.

    Args:
        rejected: Lignes rejetées, telles que lues (chaînes)
        output_path: Fichier CSV de sortie
        delimiter: Délimiteur utilisé
        logger: Logger optionnel
    """
    logger = get_logger("lpsmc.dataset", logger)

    if rejected.empty:
        logger.debug("Aucune ligne rejetée à sauvegarder")
        return

    output_path.parent.mkdir(parents=True, exist_ok=True)
    out = rejected.copy()
    out.insert(0, "row", out.index + 1)
    out.to_csv(output_path, sep=delimiter, index=False, encoding="utf-8")
    logger.info(f"✅ {len(rejected)} ligne(s) rejetée(s) sauvegardée(s) dans: {output_path.name}")


def center_columns(df: pd.DataFrame, columns) -> dict[str, float]:
    """
    Centre les colonnes sur leur moyenne (en place).

    Returns:
        dict: Moyenne retirée à chaque colonne
    """
    means = {}
    for column in columns:
        means[column] = float(df[column].mean())
        df[column] = df[column] - means[column]
    return means
