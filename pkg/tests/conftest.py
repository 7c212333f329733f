"""Configuration partagée pour tous les tests"""

import logging
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

from lpsmc.laplace_inference import Hyperparameters, fit
from lpsmc.mixture_cure_model import BinGrid, LatentVector, SurvivalDataset
from lpsmc.simulation import generate_dataset, get_scenario
from lpsmc.spline_basis import KnotGrid

# Chemin vers les fichiers de test dans fixtures
TESTS_DIR = Path(__file__).parent
FIXTURES_DIR = TESTS_DIR / "fixtures"
LOGS_DIR = FIXTURES_DIR / "logs"
CSV_DIR = FIXTURES_DIR / "input" / "csv"
CONFIG_FILE = TESTS_DIR / "config.ini"

# Graine du jeu Scénario 1 partagé par les tests d'ajustement
SCENARIO1_SEED = 2024


@pytest.fixture(scope="session", autouse=True)
def setup_unified_logger():
    """Un fichier de log par session de tests pour tous les loggers lpsmc"""
    LOGS_DIR.mkdir(parents=True, exist_ok=True)
    formatter = logging.Formatter(
        "%(asctime)s - %(levelname)s - %(name)s - %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
    )
    stamp = datetime.now().strftime("%Y_%m_%d-%H_%M_%S")
    log_file = LOGS_DIR / f"tests-{stamp}.log"

    handler = logging.FileHandler(log_file, encoding="utf-8")
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(formatter)
    root = logging.getLogger("lpsmc")
    root.setLevel(logging.DEBUG)
    root.addHandler(handler)

    yield log_file

    handler.close()
    root.removeHandler(handler)


@pytest.fixture
def test_logger():
    """Retourne le logger du paquet (pas celui des tests)"""
    return logging.getLogger("lpsmc")


@pytest.fixture(scope="session")
def small_hyper() -> Hyperparameters:
    """Hyperparamètres réduits (K=10, J=200) pour des ajustements rapides"""
    return Hyperparameters(num_basis=10, num_bins=200)


@pytest.fixture(scope="session")
def scenario1_data() -> SurvivalDataset:
    """Jeu Scénario 1, n=300, graine fixe"""
    return generate_dataset(get_scenario("scenario1"), SCENARIO1_SEED).dataset


@pytest.fixture(scope="session")
def scenario1_fit(scenario1_data, small_hyper):
    """Ajustement contraint (theta_K = 1) sur le jeu Scénario 1, t_u = 11"""
    return fit(scenario1_data, small_hyper, t_upper=11.0)


@pytest.fixture(scope="session")
def scenario1_fit_free(scenario1_data, small_hyper):
    """Même ajustement sans la contrainte theta_K = 1"""
    return fit(scenario1_data, small_hyper, constrain_last_theta=False, t_upper=11.0)


def make_instance(seed: int, n: int = 50, K: int = 8, J: int = 60, events: str = "mixed"):
    """
    Instance aléatoire (données, grilles, xi) pour les contrôles par différences finies.

    events: "mixed", "all" (tous les tau_i = 1) ou "one" (un seul événement).
    """
    rng = np.random.default_rng(seed)
    t_upper = 11.0
    times = rng.uniform(0.05, t_upper, n)
    if events == "all":
        tau = np.ones(n)
    elif events == "one":
        tau = np.zeros(n)
        tau[rng.integers(n)] = 1.0
    else:
        tau = (rng.random(n) < 0.6).astype(float)
        tau[0] = 1.0
    X = np.column_stack([np.ones(n), rng.standard_normal(n), rng.random(n) < 0.5])
    Z = np.column_stack([rng.standard_normal(n), rng.random(n) < 0.4])
    data = SurvivalDataset(times, tau, X, Z)
    grid = KnotGrid(t_upper, K)
    bins = BinGrid(J, t_upper)
    xi = LatentVector(
        theta=np.log(0.2) + 0.3 * rng.standard_normal(K),
        beta=0.5 * rng.standard_normal(3),
        gamma=0.3 * rng.standard_normal(2),
    )
    return data, grid, bins, xi


@pytest.fixture
def random_instance():
    """Fabrique d'instances aléatoires"""
    return make_instance
