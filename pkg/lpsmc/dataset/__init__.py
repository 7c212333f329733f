"""Lecture des fichiers de survie"""

from lpsmc.dataset.helpers import center_columns, detect_encoding, save_rejected_rows
from lpsmc.dataset.loader import frame_to_dataset, load_csv, read_survival_frame
from lpsmc.dataset.schemas import ColumnMapping, schemas, survival_schema

__all__ = [
    "ColumnMapping",
    "load_csv",
    "read_survival_frame",
    "frame_to_dataset",
    "detect_encoding",
    "save_rejected_rows",
    "center_columns",
    "schemas",
    "survival_schema",
]
