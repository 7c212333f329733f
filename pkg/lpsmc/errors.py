"""Exceptions du paquet lpsmc"""

from __future__ import annotations

import numpy as np


class LpsmcError(Exception):
    """Classe de base de toutes les erreurs levées par lpsmc"""


class DomainError(LpsmcError, ValueError):
    """Temps hors de [0, t_upper]."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class InvalidOrderError(LpsmcError, ValueError):
    """Ordre de différence incompatible avec le nombre de B-splines."""


class DatasetError(LpsmcError, ValueError):
    """Fichier de données invalide, localisé par ligne et colonne."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        location = []
        if row is not None:
            location.append(f"ligne {row}")
        if column is not None:
            location.append(f"colonne '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericError(LpsmcError, ArithmeticError):
    """Valeur non finie dans la log-vraisemblance."""

    def __init__(self, message: str, unit: int | None = None):
        if unit is not None:
            message = f"{message} (unité {unit})"
        super().__init__(message)
        self.unit = unit


class ConvergenceError(LpsmcError, RuntimeError):
    """Newton-Raphson n'a pas convergé.

    Attributes:
        last_iterate: dernier itéré ξ
        gradient_norm: norme max du gradient au dernier itéré
        stage: étape de l'ajustement en échec ("v-search", "final", ...)
    """

    def __init__(
        self,
        message: str,
        last_iterate: np.ndarray | None = None,
        gradient_norm: float = float("nan"),
        stage: str | None = None,
    ):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.gradient_norm = gradient_norm
        self.stage = stage

    def __str__(self) -> str:
        base = super().__str__()
        if self.stage:
            base = f"[{self.stage}] {base}"
        return f"{base} (|grad|max = {self.gradient_norm:.3e})"


class ConstrainedCoordinateError(LpsmcError, ValueError):
    """Intervalle demandé sur la coordonnée fixée θ_K."""


class TransformSingularityError(LpsmcError, ValueError):
    """Probabilité numériquement égale à 0 ou 1 : log(-log p) indéfini."""


class StudyError(LpsmcError, RuntimeError):
    """Trop de réplications en échec dans une étude de simulation."""

    def __init__(self, message: str, failures: int = 0, replications: int = 0):
        super().__init__(message)
        self.failures = failures
        self.replications = replications


class UsageError(LpsmcError, ValueError):
    """Cible ou option de ligne de commande invalide."""
