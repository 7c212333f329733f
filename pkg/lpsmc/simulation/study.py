"""
Études de simulation : réplications parallèles, biais, ESE, RMSE, couverture
des intervalles et erreur quadratique moyenne de l'incidence estimée.
"""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

from lpsmc.config import get_threads
from lpsmc.credible_intervals import (
    ci_baseline_survival,
    ci_incidence,
    ci_latency_survival,
    ci_latent,
    survival_curve,
)
from lpsmc.errors import LpsmcError, StudyError
from lpsmc.laplace_inference import FitResult, Hyperparameters, fit
from lpsmc.log import get_logger
from lpsmc.simulation.generator import generate_dataset
from lpsmc.simulation.scenarios import ScenarioConfig

LEVELS = (90, 95)
DEFAULT_QUANTILES = (0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95)
MAX_FAILURE_RATE = 0.10
PARAMETERS = ("beta0", "beta1", "beta2", "gamma1", "gamma2")

# Grille de l'ASE : x1 dans [-1.5, 1.5] au pas 0.001, x2 dans {0, 1}
ASE_X1 = np.linspace(-1.5, 1.5, 3001)


def ase_grid() -> np.ndarray:
    """Les 3001 x 2 profils (1, x1, x2)."""
    x1 = np.tile(ASE_X1, 2)
    x2 = np.repeat([0.0, 1.0], ASE_X1.size)
    return np.column_stack([np.ones_like(x1), x1, x2])


def average_squared_error(p_hat, p_true) -> float:
    return float(np.mean((np.asarray(p_hat) - np.asarray(p_true)) ** 2))


def incidence_ase(beta_hat, beta_true) -> float:
    X = ase_grid()
    return average_squared_error(expit(X @ np.asarray(beta_hat)), expit(X @ np.asarray(beta_true)))


def ase_incidence(fit_result: FitResult, scenario: ScenarioConfig) -> float:
    """ASE de l'incidence estimée sur la grille (1, x1, x2)."""
    return incidence_ase(fit_result.beta, scenario.beta)


@dataclass(frozen=True)
class ReplicationTask:
    index: int
    seed: object
    scenario: ScenarioConfig
    n: int
    hyper: Hyperparameters
    keep_curve: bool = False
    quantiles: tuple[float, ...] = ()


@dataclass
class ReplicationResult:
    """Résultat d'une réplication ; `error` est renseigné en cas d'échec."""

    index: int
    converged: bool
    estimates: dict[str, float] = field(default_factory=dict)
    sd: dict[str, float] = field(default_factory=dict)
    covered: dict[tuple[str, int], bool] = field(default_factory=dict)
    ase: float = float("nan")
    incidence_covered: dict[int, bool] = field(default_factory=dict)
    survival_covered: dict[tuple[float, str, int], bool] = field(default_factory=dict)
    curve: np.ndarray | None = None
    v_star: float = float("nan")
    elapsed: float = 0.0
    error: str | None = None


def run_replication(task: ReplicationTask) -> ReplicationResult:
    """Génère, ajuste et évalue une réplication (fonction de haut niveau pour les processus)."""
    scenario = task.scenario
    try:
        sim = generate_dataset(scenario, task.seed, n=task.n)
        result = fit(sim.dataset, task.hyper, t_upper=scenario.tau1, logger=_quiet_logger())
    except LpsmcError as e:
        return ReplicationResult(index=task.index, converged=False, error=str(e))

    truth = scenario.true_parameters()
    offset = result.K
    out = ReplicationResult(
        index=task.index, converged=True, v_star=result.v_star, elapsed=result.elapsed
    )
    for i, name in enumerate(PARAMETERS):
        h = offset + i
        out.estimates[name] = float(result.mean[h])
        out.sd[name] = float(np.sqrt(result.covariance[h, h]))
        for level in LEVELS:
            interval = ci_latent(result, h, alpha=1 - level / 100)
            out.covered[(name, level)] = interval.contains(truth[name])

    out.ase = ase_incidence(result, scenario)
    x_bar = scenario.mean_incidence_profile
    p_true = float(scenario.incidence(x_bar))
    for level in LEVELS:
        try:
            interval = ci_incidence(result, x_bar, alpha=1 - level / 100)
            out.incidence_covered[level] = interval.contains(p_true)
        except LpsmcError:
            out.incidence_covered[level] = False

    z_bar = scenario.mean_latency_profile
    for q in task.quantiles:
        t_s0 = scenario.true_quantile(q)
        t_su = scenario.true_quantile(q, z_bar)
        for level in LEVELS:
            alpha = 1 - level / 100
            s0 = ci_baseline_survival(result, t_s0, alpha)
            su = ci_latency_survival(result, z_bar, t_su, alpha)
            out.survival_covered[(q, "S0", level)] = s0.contains(1.0 - q)
            out.survival_covered[(q, "Su", level)] = su.contains(1.0 - q)

    if task.keep_curve:
        out.curve = survival_curve(result)["estimate"].to_numpy()
    return out


def _quiet_logger() -> logging.Logger:
    logger = logging.getLogger("lpsmc.simulation.replication")
    logger.setLevel(logging.WARNING)
    return logger


def replication_seeds(base_seed: int, S: int) -> list[np.random.SeedSequence]:
    """Flux indépendants dérivés de base_seed (SeedSequence.spawn)."""
    return np.random.SeedSequence(int(base_seed)).spawn(S)


def run_replications(
    tasks: list[ReplicationTask], workers: int | None = None
) -> list[ReplicationResult]:
    """Exécute les tâches, en parallèle si workers > 1 ; l'ordre des résultats suit l'indice."""
    workers = get_threads() if workers is None else max(1, int(workers))
    workers = min(workers, len(tasks)) or 1
    if workers == 1:
        results = [run_replication(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replication, tasks))
    return sorted(results, key=lambda r: r.index)


@dataclass(frozen=True, eq=False)
class StudySummary:
    """
    Agrégats d'une étude.

    Attributes:
        parameters: Une ligne par paramètre (true, mean, bias, ese, rmse, cp90, cp95)
        ase: ASE de chaque réplication convergée
        incidence_coverage: Couverture (%) de l'intervalle de p(x̄) par niveau
        replications: Estimations par réplication
        S: Nombre de réplications demandées
        failures: Réplications non convergées
        curves: Courbes S0 estimées (une colonne par réplication) si demandées
        coverage_survival: Table de couverture S0/Su par quantile si demandée
    """

    scenario: str
    n: int
    parameters: pd.DataFrame
    ase: np.ndarray
    incidence_coverage: dict[int, float]
    replications: pd.DataFrame
    S: int
    failures: int
    curves: pd.DataFrame | None = None
    coverage_survival: pd.DataFrame | None = None

    @property
    def converged(self) -> int:
        return self.S - self.failures

    def median_curve(self) -> pd.DataFrame | None:
        """Courbe médiane point par point des S0 estimées."""
        if self.curves is None:
            return None
        values = self.curves.drop(columns="t")
        return pd.DataFrame({"t": self.curves["t"], "median": values.median(axis=1)})

    def to_csv(self, path: Path) -> None:
        """Une ligne par paramètre et par métrique."""
        long = self.parameters.melt(id_vars="parameter", var_name="metric", value_name="value")
        extra = [
            {"parameter": "p(x_bar)", "metric": f"cp{level}", "value": value}
            for level, value in self.incidence_coverage.items()
        ]
        extra.append({"parameter": "study", "metric": "failures", "value": self.failures})
        extra.append({"parameter": "study", "metric": "replications", "value": self.S})
        extra.append(
            {"parameter": "p_hat", "metric": "median_ase", "value": float(np.median(self.ase))}
        )
        pd.concat([long, pd.DataFrame(extra)], ignore_index=True).to_csv(path, index=False)

    def to_text(self) -> str:
        """Table texte : paramètre, vraie valeur, biais, ESE, RMSE, CP90, CP95."""
        lines = [
            f"{self.scenario}  n={self.n}  S={self.S}  échecs={self.failures}",
            f"{'Paramètre':<16}{'Biais':>9}{'ESE':>8}{'RMSE':>8}{'CP90':>7}{'CP95':>7}",
        ]
        for row in self.parameters.itertuples(index=False):
            label = f"{row.parameter} = {row.true:.2f}"
            lines.append(
                f"{label:<16}{row.bias:>9.3f}{row.ese:>8.3f}{row.rmse:>8.3f}"
                f"{row.cp90:>7.1f}{row.cp95:>7.1f}"
            )
        return "\n".join(lines) + "\n"


def _summarize_parameters(
    results: list[ReplicationResult], truth: dict[str, float]
) -> pd.DataFrame:
    rows = []
    for name in PARAMETERS:
        est = np.array([r.estimates[name] for r in results])
        true = truth[name]
        # ESE : écart-type empirique, dénominateur S - 1
        ese = float(np.std(est, ddof=1)) if est.size > 1 else 0.0
        rows.append(
            {
                "parameter": name,
                "true": true,
                "mean": float(est.mean()),
                "bias": float(est.mean() - true),
                "ese": ese,
                "rmse": float(np.sqrt(np.mean((est - true) ** 2))),
                "cp90": 100.0 * float(np.mean([r.covered[(name, 90)] for r in results])),
                "cp95": 100.0 * float(np.mean([r.covered[(name, 95)] for r in results])),
            }
        )
    return pd.DataFrame(rows)


def _survival_table(
    results: list[ReplicationResult], scenario: ScenarioConfig, quantiles
) -> pd.DataFrame:
    z_bar = scenario.mean_latency_profile
    rows = []
    for target in ("S0", "Su"):
        for level in LEVELS:
            for q in quantiles:
                t_q = scenario.true_quantile(q, z_bar if target == "Su" else None)
                covered = [r.survival_covered[(q, target, level)] for r in results]
                rows.append(
                    {
                        "target": target,
                        "level": level,
                        "quantile": q,
                        "t_true": t_q,
                        "coverage": 100.0 * float(np.mean(covered)),
                    }
                )
    return pd.DataFrame(rows)


def _check_failures(results, S: int, log: logging.Logger) -> list[ReplicationResult]:
    failed = [r for r in results if not r.converged]
    for r in failed:
        log.warning(f"⚠️  Réplication {r.index} en échec: {r.error}")
    if len(failed) > MAX_FAILURE_RATE * S:
        raise StudyError(
            f"{len(failed)} réplication(s) sur {S} en échec (plus de {MAX_FAILURE_RATE:.0%})",
            failures=len(failed),
            replications=S,
        )
    ok = [r for r in results if r.converged]
    if not ok:
        raise StudyError("Aucune réplication convergée", failures=len(failed), replications=S)
    return ok


def run_study(
    scenario: ScenarioConfig,
    n: int,
    S: int,
    base_seed: int,
    hyper: Hyperparameters | None = None,
    seeds=None,
    workers: int | None = None,
    dump_curves: bool = False,
    quantiles=(),
    logger: logging.Logger | None = None,
) -> StudySummary:
    """
    Étude de S réplications de taille n.

    Args:
        scenario: Scénario générateur
        n: Taille de chaque échantillon
        S: Nombre de réplications (>= 2)
        base_seed: Graine dont dérivent les flux de chaque réplication
        hyper: Hyperparamètres (K=15, r=3, delta=0.2 par défaut)
        seeds: Graines explicites par réplication (remplace base_seed)
        workers: Nombre de processus (LPSMC_THREADS par défaut)
        dump_curves: Conserve la courbe S0 estimée de chaque réplication
        quantiles: Quantiles pour la couverture des intervalles de S0 et S_u
        logger: Logger optionnel

    Returns:
        StudySummary

    Raises:
        StudyError: Si plus de 10 % des réplications échouent
    """
    log = get_logger("lpsmc.simulation", logger)
    if S < 2:
        raise ValueError(f"Une étude demande au moins 2 réplications (S={S})")
    hyper = hyper or Hyperparameters()
    if seeds is None:
        seeds = replication_seeds(base_seed, S)
    elif len(seeds) != S:
        raise ValueError(f"{len(seeds)} graine(s) fournie(s) pour S={S} réplications")

    quantiles = tuple(float(q) for q in quantiles)
    tasks = [
        ReplicationTask(i, seed, scenario, n, hyper, dump_curves, quantiles)
        for i, seed in enumerate(seeds)
    ]
    log.info(f"Étude {scenario.name}: n={n}, S={S}, K={hyper.num_basis}")
    results = run_replications(tasks, workers)
    ok = _check_failures(results, S, log)

    parameters = _summarize_parameters(ok, scenario.true_parameters())
    replications = pd.DataFrame(
        [
            {"replication": r.index, "v_star": r.v_star, "ase": r.ase, **r.estimates}
            for r in ok
        ]
    )
    curves = None
    if dump_curves:
        # t_upper = tau1 dans les ajustements de l'étude
        midpoints = (np.arange(1, hyper.num_bins + 1) - 0.5) * scenario.tau1 / hyper.num_bins
        curves = pd.DataFrame(
            {"t": midpoints, **{f"rep{r.index}": r.curve for r in ok}}
        )
    coverage = _survival_table(ok, scenario, quantiles) if quantiles else None

    summary = StudySummary(
        scenario=scenario.name,
        n=n,
        parameters=parameters,
        ase=np.array([r.ase for r in ok]),
        incidence_coverage={
            level: 100.0 * float(np.mean([r.incidence_covered[level] for r in ok]))
            for level in LEVELS
        },
        replications=replications,
        S=S,
        failures=S - len(ok),
        curves=curves,
        coverage_survival=coverage,
    )
    log.info(f"✅ Étude terminée: {len(ok)}/{S} réplication(s) convergée(s)")
    return summary


def coverage_survival(
    scenario: ScenarioConfig,
    n: int,
    S: int,
    K_override: int = 30,
    quantiles=DEFAULT_QUANTILES,
    base_seed: int = 0,
    hyper: Hyperparameters | None = None,
    workers: int | None = None,
    logger: logging.Logger | None = None,
) -> pd.DataFrame:
    """
    Couverture empirique des intervalles de S0 et de S_u(.|z̄) aux vrais quantiles.

    Les vrais t_q viennent de l'inversion de la Weibull génératrice (z = 0 pour S0,
    z = z̄ pour S_u) ; la valeur visée est 1 - q dans les deux cas.

    Returns:
        DataFrame (target, level, quantile, t_true, coverage)
    """
    hyper = dataclasses.replace(hyper or Hyperparameters(), num_basis=K_override)
    summary = run_study(
        scenario,
        n,
        S,
        base_seed,
        hyper=hyper,
        workers=workers,
        quantiles=quantiles,
        logger=logger,
    )
    return summary.coverage_survival
