"""Scénarios de génération de données (incidence logistique, latence de Weibull, censure exponentielle)"""

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

CENSOR_MODES = ("cap", "condition")
LATENCY_MODES = ("condition", "cap")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Paramètres d'un scénario de simulation.

    x1 ~ N(0, 1), x2 ~ Bernoulli(x2_prob), z1 ~ N(0, 1), z2 ~ Bernoulli(z2_prob).
    Les susceptibles ont S_u(t|z) = exp(-nu t^rho exp(z^T gamma)) tronquée à tau0,
    les guéris reçoivent le temps sentinelle. La censure suit Exp(mu_c) ramenée
    à [0, tau1] par écrêtage ("cap") ou par conditionnement ("condition").
    """

    name: str
    beta: tuple[float, float, float]
    gamma: tuple[float, float]
    mu_c: float
    nu: float = 0.25
    rho: float = 1.45
    tau0: float = 8.0
    tau1: float = 11.0
    cured_time_sentinel: float = 20000.0
    n: int = 300
    x2_prob: float = 0.5
    z2_prob: float = 0.4
    censor_truncation: str = "cap"
    latency_truncation: str = "condition"

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if len(self.beta) != 3 or len(self.gamma) != 2:
            raise ValueError("Un scénario a 3 coefficients d'incidence et 2 de latence")
        if not (self.nu > 0 and self.rho > 0 and self.mu_c > 0):
            raise ValueError("nu, rho et mu_c doivent être strictement positifs")
        if not 0 < self.tau0 < self.tau1 < self.cured_time_sentinel:
            raise ValueError("Il faut 0 < tau0 < tau1 < temps sentinelle des guéris")
        if self.n < 1:
            raise ValueError(f"Taille d'échantillon invalide: {self.n}")
        if self.censor_truncation not in CENSOR_MODES:
            raise ValueError(f"Troncature de censure inconnue: {self.censor_truncation!r}")
        if self.latency_truncation not in LATENCY_MODES:
            raise ValueError(f"Troncature de latence inconnue: {self.latency_truncation!r}")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def mean_incidence_profile(self) -> np.ndarray:
        """x̄ = (1, E[x1], E[x2])."""
        return np.array([1.0, 0.0, self.x2_prob])

    @property
    def mean_latency_profile(self) -> np.ndarray:
        """z̄ = (E[z1], E[z2])."""
        return np.array([0.0, self.z2_prob])

    def incidence(self, x) -> np.ndarray:
        return expit(np.asarray(x, dtype=float) @ np.asarray(self.beta))

    def latency_survival(self, t, z=None) -> np.ndarray:
        """S_u(t|z) non tronquée du modèle générateur (z = 0 : survie de base)."""
        lz = 0.0 if z is None else float(np.asarray(z, dtype=float) @ np.asarray(self.gamma))
        return np.exp(-self.nu * np.asarray(t, dtype=float) ** self.rho * np.exp(lz))

    def true_quantile(self, q: float, z=None) -> float:
        """t_q tel que S_u(t_q|z) = 1 - q, par inversion de la Weibull."""
        lz = 0.0 if z is None else float(np.asarray(z, dtype=float) @ np.asarray(self.gamma))
        return float((-np.log1p(-q) / (self.nu * np.exp(lz))) ** (1.0 / self.rho))

    def true_parameters(self) -> dict[str, float]:
        return {
            "beta0": self.beta[0],
            "beta1": self.beta[1],
            "beta2": self.beta[2],
            "gamma1": self.gamma[0],
            "gamma2": self.gamma[1],
        }


scenario1 = ScenarioConfig(
    name="scenario1", beta=(0.70, -1.15, 0.95), gamma=(-0.10, 0.25), mu_c=0.16
)
scenario2 = ScenarioConfig(
    name="scenario2", beta=(1.25, -0.75, 0.45), gamma=(-0.10, 0.20), mu_c=0.05
)

# Dictionnaire de tous les scénarios disponibles
SCENARIOS = {
    "scenario1": scenario1,
    "scenario2": scenario2,
}


def get_scenario(name: str, **changes) -> ScenarioConfig:
    """Scénario prédéfini, éventuellement modifié (n, mu_c, modes de troncature...)."""
    if name not in SCENARIOS:
        available = ", ".join(SCENARIOS.keys())
        raise KeyError(f"Scénario '{name}' introuvable. Scénarios disponibles: {available}")
    scenario = SCENARIOS[name]
    return scenario.replace(**changes) if changes else scenario
