"""Estimateur de Kaplan-Meier et hauteur du plateau"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from lpsmc.log import get_logger


@dataclass(frozen=True, eq=False)
class KaplanMeierCurve:
    """
    Courbe en escalier aux temps distincts observés.

    Attributes:
        times: Temps distincts triés
        survival: S(t) juste après chaque temps
        at_risk: Effectif à risque juste avant chaque temps
        events: Nombre d'événements à chaque temps
        censored: Nombre de censures à chaque temps (marques de censure)
    """

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    censored: np.ndarray

    @property
    def plateau_height(self) -> float:
        """Dernière valeur de la courbe."""
        return float(self.survival[-1]) if self.survival.size else 1.0

    @property
    def censor_marks(self) -> np.ndarray:
        """Temps portant au moins une censure, avec la survie à ces temps."""
        mask = self.censored > 0
        return np.column_stack([self.times[mask], self.survival[mask]])

    @property
    def last_event_time(self) -> float | None:
        idx = np.flatnonzero(self.events > 0)
        return float(self.times[idx[-1]]) if idx.size else None

    def plateau_share(self) -> float:
        """Part des observations strictement après le dernier événement."""
        last = self.last_event_time
        total = self.events.sum() + self.censored.sum()
        if last is None:
            return 1.0
        after = self.times > last
        return float((self.events[after].sum() + self.censored[after].sum()) / total)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "at_risk": self.at_risk,
                "events": self.events,
                "censored": self.censored,
                "survival": self.survival,
            }
        )


def kaplan_meier(times, events, logger: logging.Logger | None = None) -> KaplanMeierCurve:
    """
    Estimateur produit-limite.

    Aucun événement n'est exigé : un échantillon entièrement censuré donne
    une courbe constante égale à 1.

    Args:
        times: Temps de suivi (finis, positifs)
        events: Indicateurs d'événement (0 ou 1)
        logger: Logger optionnel

    Returns:
        KaplanMeierCurve

    Raises:
        ValueError: Échantillon vide, tailles différentes, temps ou statuts invalides
    """
    logger = get_logger("lpsmc", logger)
    observed = np.asarray(times, dtype=float).ravel()
    status = np.asarray(events, dtype=float).ravel()
    if observed.size == 0:
        raise ValueError("Kaplan-Meier demande au moins une observation")
    if status.shape != observed.shape:
        raise ValueError(f"{observed.size} temps pour {status.size} statuts")
    if not np.all(np.isfinite(observed)) or np.any(observed < 0):
        raise ValueError("Les temps de suivi doivent être finis et positifs")
    if not np.all(np.isin(status, (0.0, 1.0))):
        raise ValueError("Les indicateurs d'événement doivent valoir 0 ou 1")

    times, inverse = np.unique(observed, return_inverse=True)
    events = np.bincount(inverse, weights=status, minlength=times.size).astype(int)
    total = np.bincount(inverse, minlength=times.size)
    censored = total - events
    at_risk = observed.size - np.concatenate([[0], np.cumsum(total)[:-1]])
    survival = np.cumprod(1.0 - events / at_risk)
    curve = KaplanMeierCurve(times, survival, at_risk, events, censored)
    logger.debug(
        f"Kaplan-Meier: {times.size} temps distincts, plateau {curve.plateau_height:.3f}"
    )
    return curve
