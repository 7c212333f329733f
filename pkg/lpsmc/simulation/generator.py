"""Génération de jeux de données simulés"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from lpsmc.mixture_cure_model import SurvivalDataset
from lpsmc.simulation.scenarios import ScenarioConfig


def make_rng(seed) -> np.random.Generator:
    """Générateur PCG64 à partir d'un entier ou d'une SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True, eq=False)
class SimulatedData:
    """Jeu simulé et vérité cachée (statut de guérison, temps d'événement et de censure)."""

    dataset: SurvivalDataset
    cured: np.ndarray
    event_times: np.ndarray
    censor_times: np.ndarray


def weibull_latency_draw(
    rng: np.random.Generator,
    gamma,
    z_row,
    nu: float,
    rho: float,
    tau0: float,
    mode: str = "condition",
) -> np.ndarray:
    """
    Temps de latence de survie S_u(t|z) = exp(-nu t^rho exp(z^T gamma)).

    En mode "condition", tirage de T | T <= tau0 par inversion :
    t = [-log(1 - u (1 - S_u(tau0|z))) / (nu exp(z^T gamma))]^(1/rho).
    En mode "cap", tirage non tronqué puis min(T, tau0).

    Args:
        rng: Générateur aléatoire
        gamma: Coefficients de latence
        z_row: Profil (q,) ou matrice (n, q)
        nu, rho: Échelle et forme de la Weibull
        tau0: Borne de troncature
        mode: "condition" ou "cap"

    Returns:
        Un temps par profil
    """
    z = np.atleast_2d(np.asarray(z_row, dtype=float))
    rate = nu * np.exp(z @ np.asarray(gamma, dtype=float))
    u = rng.random(rate.shape[0])
    if mode == "condition":
        mass = -np.expm1(-rate * tau0**rho)
        return (-np.log1p(-u * mass) / rate) ** (1.0 / rho)
    if mode == "cap":
        return np.minimum((-np.log1p(-u) / rate) ** (1.0 / rho), tau0)
    raise ValueError(f"Mode de troncature inconnu: {mode!r}")


def truncated_exponential_draw(
    rng: np.random.Generator, rate: float, upper: float, size: int, mode: str = "condition"
) -> np.ndarray:
    """
    Censure exponentielle de taux `rate` ramenée à [0, upper].

    "condition" : C | C <= upper par inversion ; "cap" : min(C, upper).
    """
    u = rng.random(size)
    if mode == "condition":
        return -np.log1p(u * np.expm1(-rate * upper)) / rate
    if mode == "cap":
        return np.minimum(-np.log1p(-u) / rate, upper)
    raise ValueError(f"Mode de troncature inconnu: {mode!r}")


def generate_dataset(scenario: ScenarioConfig, seed, n: int | None = None) -> SimulatedData:
    """
    Tire un jeu de données du scénario.

    Ordre des tirages (déterministe pour une graine donnée) : x1, x2, z1, z2,
    statut de susceptibilité, latence, censure.

    Args:
        scenario: Paramètres du scénario
        seed: Entier ou SeedSequence
        n: Taille (par défaut scenario.n)

    Returns:
        SimulatedData
    """
    n = scenario.n if n is None else int(n)
    rng = make_rng(seed)

    x1 = rng.standard_normal(n)
    x2 = (rng.random(n) < scenario.x2_prob).astype(float)
    z1 = rng.standard_normal(n)
    z2 = (rng.random(n) < scenario.z2_prob).astype(float)
    X = np.column_stack([np.ones(n), x1, x2])
    Z = np.column_stack([z1, z2])

    susceptible = rng.random(n) < scenario.incidence(X)
    latency = weibull_latency_draw(
        rng,
        scenario.gamma,
        Z,
        scenario.nu,
        scenario.rho,
        scenario.tau0,
        mode=scenario.latency_truncation,
    )
    event_times = np.where(susceptible, latency, scenario.cured_time_sentinel)
    censor_times = truncated_exponential_draw(
        rng, scenario.mu_c, scenario.tau1, n, mode=scenario.censor_truncation
    )

    times = np.minimum(event_times, censor_times)
    events = (event_times <= censor_times).astype(float)
    dataset = SurvivalDataset(times, events, X, Z, ("x1", "x2"), ("z1", "z2"))
    return SimulatedData(dataset, ~susceptible, event_times, censor_times)


def plateau_fraction(times, events) -> float:
    """Part des observations strictement au-delà du dernier temps d'événement."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(bool)
    if not events.any():
        return 1.0
    return float(np.mean(times > times[events].max()))


def scenario_rates(
    scenario: ScenarioConfig, num_draws: int = 10**6, seed=0, sample_size: int = 300
) -> pd.Series:
    """
    Taux de guérison, de censure et de plateau (en %).

    Guérison et censure portent sur `num_draws` sujets ; le plateau, propriété
    d'un échantillon, est moyenné sur des jeux consécutifs de `sample_size` sujets.
    """
    sim = generate_dataset(scenario, seed, n=num_draws)
    data = sim.dataset
    m = num_draws // sample_size
    if m < 1:
        raise ValueError(f"num_draws ({num_draws}) doit être >= sample_size ({sample_size})")
    t = data.times[: m * sample_size].reshape(m, sample_size)
    ev = data.events[: m * sample_size].reshape(m, sample_size).astype(bool)
    last_event = np.max(np.where(ev, t, -np.inf), axis=1)
    plateau = np.mean(t > last_event[:, None], axis=1)
    return pd.Series(
        {
            "cure": 100.0 * float(np.mean(sim.cured)),
            "censoring": 100.0 * float(np.mean(data.events == 0)),
            "plateau": 100.0 * float(np.mean(plateau)),
        },
        name=scenario.name,
    )
