"""
Approximation de Laplace du postérieur latent p(xi | lambda, D), postérieur
approché de v = log(lambda), recherche du mode par encadrement et ajustement
complet avec la contrainte theta_K = 1.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.integrate import trapezoid
from scipy.special import expit

from lpsmc.errors import ConvergenceError, LpsmcError, NumericError
from lpsmc.log import get_logger
from lpsmc.mixture_cure_model import (
    BinGrid,
    CureModelDesign,
    LatentVector,
    SurvivalDataset,
    design_for,
    evaluate_loglik,
    unit_loglik,
)
from lpsmc.spline_basis import KnotGrid, PenaltyMatrix, penalty_matrix

MAX_HALVINGS = 30
LEVENBERG_START = 1e-6
LEVENBERG_MAX_STEPS = 20
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Hyperparameters:
    """
    Hyperparamètres du modèle et de l'algorithme.

    Attributes:
        a_lambda, b_lambda: Prior Gamma(a, b) sur lambda
        zeta: Précision du prior gaussien sur (beta, gamma)
        epsilon: Ridge de la matrice de pénalité
        penalty_order: Ordre r des différences
        num_basis: Nombre K de B-splines
        num_bins: Nombre J d'intervalles de Riemann
        v0, delta_v, v_min: Départ, pas et borne basse de l'encadrement de v
        newton_tol: Tolérance sur la norme max du gradient
        newton_max_iter: Nombre maximal d'itérations de Newton
    """

    a_lambda: float = 1.0
    b_lambda: float = 1e-5
    zeta: float = 1e-6
    epsilon: float = 1e-6
    penalty_order: int = 3
    num_basis: int = 15
    num_bins: int = 300
    v0: float = 15.0
    delta_v: float = 0.2
    v_min: float = -10.0
    newton_tol: float = 1e-8
    newton_max_iter: int = 100

    def __post_init__(self):
        positive = (
            "a_lambda",
            "b_lambda",
            "zeta",
            "epsilon",
            "penalty_order",
            "num_basis",
            "num_bins",
            "delta_v",
            "newton_tol",
            "newton_max_iter",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"L'hyperparamètre {name} doit être strictement positif")
        if self.penalty_order >= self.num_basis:
            raise ValueError(
                f"L'ordre de pénalité ({self.penalty_order}) doit être < K ({self.num_basis})"
            )
        if self.num_basis < 4:
            raise ValueError(f"K doit être >= 4 pour des B-splines cubiques ({self.num_basis})")
        if not self.v_min < self.v0:
            raise ValueError(f"v_min ({self.v_min}) doit être < v0 ({self.v0})")

    @property
    def K(self) -> int:
        return self.num_basis

    @property
    def J(self) -> int:
        return self.num_bins

    def penalty(self) -> PenaltyMatrix:
        return penalty_matrix(self.num_basis, self.penalty_order, self.epsilon)


class Likelihood(Protocol):
    """Log-vraisemblance deux fois dérivable sur xi = (theta, beta, gamma)."""

    num_basis: int
    p: int
    q: int

    def evaluate(self, xi: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]: ...

    def value(self, xi: np.ndarray) -> float: ...


class CureLikelihood:
    """Log-vraisemblance du modèle de guérison sur un plan fixé."""

    def __init__(self, design: CureModelDesign):
        self.design = design
        self.num_basis = design.K
        self.p = design.p1 - 1
        self.q = design.q

    @classmethod
    def from_data(cls, data: SurvivalDataset, grid: KnotGrid, bins: BinGrid) -> "CureLikelihood":
        return cls(design_for(data, grid, bins))

    def evaluate(self, xi: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        return evaluate_loglik(xi, self.design)

    def value(self, xi: np.ndarray) -> float:
        g = unit_loglik(xi, self.design)
        total = float(np.sum(g))
        if not np.isfinite(total):
            raise NumericError("Log-vraisemblance non finie", unit=int(np.argmin(np.isfinite(g))))
        return total


@dataclass(frozen=True, eq=False)
class ConditionalPosterior:
    """
    Approximation gaussienne N(mean, covariance) de p(xi | lambda, D).

    Les coordonnées fixées ont une moyenne égale à leur valeur imposée et une
    ligne/colonne de covariance nulle.
    """

    mean: np.ndarray
    covariance: np.ndarray
    lam: float
    converged: bool
    iterations: int
    grad_norm: float
    loglik: float
    objective: float
    logdet_curvature: float
    free: np.ndarray = field(repr=False)

    @property
    def fixed(self) -> np.ndarray:
        mask = np.ones(self.mean.size, dtype=bool)
        mask[self.free] = False
        return np.flatnonzero(mask)


def prior_precision(lam: float, P: PenaltyMatrix | np.ndarray, p: int, q: int, zeta: float):
    """
    Précision a priori bloc-diagonale Q_xi(lambda) = diag(lambda P, zeta I_{p+1+q}).

    Args:
        lam: Paramètre de pénalité (> 0)
        P: Matrice de pénalité K x K
        p: Nombre de covariables d'incidence hors intercept
        q: Nombre de covariables de latence
        zeta: Précision des coefficients de régression

    Returns:
        Matrice (K + p + 1 + q) carrée
    """
    if not lam > 0:
        raise ValueError(f"lambda doit être strictement positif, reçu {lam}")
    P = P.matrix if isinstance(P, PenaltyMatrix) else np.asarray(P, dtype=float)
    return linalg.block_diag(lam * P, zeta * np.eye(p + 1 + q))


def _factor(C: np.ndarray, log: logging.Logger):
    """Cholesky de C, avec ajout de mu I (1e-6, puis x10) si C n'est pas définie positive."""
    try:
        return linalg.cho_factor(C, lower=True), 0.0
    except linalg.LinAlgError:
        pass
    mu = LEVENBERG_START
    eye = np.eye(C.shape[0])
    for _ in range(LEVENBERG_MAX_STEPS):
        try:
            factor = linalg.cho_factor(C + mu * eye, lower=True)
            log.debug(f"Courbure non définie positive, régularisation mu={mu:.1e}")
            return factor, mu
        except linalg.LinAlgError:
            mu *= 10.0
    raise NumericError("Impossible de factoriser la matrice de courbure")


def _logdet(factor) -> float:
    c, _ = factor
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def laplace_approx(
    lam: float,
    likelihood: Likelihood,
    init,
    hyper: Hyperparameters,
    fixed: dict[int, float] | None = None,
    logger: logging.Logger | None = None,
) -> ConditionalPosterior:
    """
    Newton-Raphson sur log p(xi | lambda, D) = l(xi) - xi^T Q xi / 2.

    Chaque itération résout (Q - H) step = grad par Cholesky, avec recherche
    linéaire par demi-pas (au plus 30). Les coordonnées de `fixed` restent à leur
    valeur et sont exclues du système.

    Arrêt quand |grad|max passe sous max(newton_tol, 16 eps |Q| |xi|), ou quand le
    décrément de Newton g^T (Q - H)^{-1} g passe sous newton_tol ** 2. Un pas
    négligeable devant xi vaut aussi convergence, en fin de recherche linéaire
    comme après newton_max_iter itérations.

    Args:
        lam: Paramètre de pénalité lambda
        likelihood: Log-vraisemblance (valeur, gradient, hessien)
        init: Point de départ (LatentVector ou vecteur)
        hyper: Hyperparamètres (tolérance, itérations, zeta, pénalité)
        fixed: Coordonnées fixées {indice: valeur}
        logger: Logger optionnel

    Returns:
        ConditionalPosterior: moyenne, covariance (Q - H)^{-1} complétée de zéros

    Raises:
        ConvergenceError: Si la tolérance n'est pas atteinte en newton_max_iter itérations
    """
    log = get_logger("lpsmc.inference", logger)
    x = (init.flatten() if isinstance(init, LatentVector) else np.array(init, dtype=float)).copy()
    dim = x.size
    if not np.all(np.isfinite(x)):
        raise ValueError("Point de départ non fini")

    Q = prior_precision(lam, hyper.penalty(), likelihood.p, likelihood.q, hyper.zeta)
    if Q.shape[0] != dim:
        raise ValueError(f"Dimension du point de départ ({dim}) incompatible avec Q ({Q.shape[0]})")

    fixed = fixed or {}
    free = np.setdiff1d(np.arange(dim), np.fromiter(fixed.keys(), dtype=int, count=len(fixed)))
    for index, v in fixed.items():
        x[index] = v

    def objective(z: np.ndarray, value: float) -> float:
        return value - 0.5 * float(z @ Q @ z)

    value, grad, hess = likelihood.evaluate(x)
    f = objective(x, value)
    abs_Q = np.abs(Q)
    iterations = 0
    converged = False
    while True:
        qx = Q @ x
        g_free = (grad - qx)[free]
        grad_norm = float(np.max(np.abs(g_free))) if free.size else 0.0
        # plancher d'arrondi : l'erreur sur Q x est bornée par eps |Q| |x|, et lambda |P| |x|
        # dépasse 1e8 pour les grands lambda
        scale = 1.0 + max(float(np.max(np.abs(grad))), float(np.max(abs_Q @ np.abs(x))))
        floor = 16.0 * _EPS * scale
        if grad_norm < max(hyper.newton_tol, floor):
            converged = True
            break

        C = (Q - hess)[np.ix_(free, free)]
        factor, _ = _factor(C, log)
        step = linalg.cho_solve(factor, g_free)
        # décrément de Newton g^T (Q - H)^{-1} g : gain attendu de l'objectif, invariant d'échelle
        decrement = float(g_free @ step)
        if decrement < hyper.newton_tol**2:
            log.debug(f"Décrément de Newton {decrement:.1e} (|grad|max={grad_norm:.2e}, lambda={lam:.4g})")
            converged = True
            break
        tiny_step = np.max(np.abs(step)) <= np.sqrt(_EPS) * (1.0 + np.max(np.abs(x)))
        if iterations >= hyper.newton_max_iter:
            if tiny_step:
                log.debug(f"Plancher numérique atteint (|grad|max={grad_norm:.2e}, lambda={lam:.4g})")
                converged = True
                break
            raise ConvergenceError(
                f"Newton-Raphson sans convergence après {iterations} itérations (lambda={lam:.4g})",
                last_iterate=x,
                gradient_norm=grad_norm,
            )

        f_tol = 64.0 * _EPS * (1.0 + abs(f))
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            candidate = x.copy()
            candidate[free] += t * step
            try:
                f_new = objective(candidate, likelihood.value(candidate))
            except NumericError:
                f_new = -np.inf
            if f_new >= f - f_tol:
                accepted = True
                break
            t *= 0.5

        if not accepted:
            if tiny_step:
                log.debug(
                    f"Plancher numérique atteint (|grad|max={grad_norm:.2e}, lambda={lam:.4g})"
                )
                converged = True
                break
            raise ConvergenceError(
                f"Recherche linéaire en échec après {MAX_HALVINGS} demi-pas (lambda={lam:.4g})",
                last_iterate=x,
                gradient_norm=grad_norm,
            )

        x = candidate
        value, grad, hess = likelihood.evaluate(x)
        f = objective(x, value)
        iterations += 1

    C = (Q - hess)[np.ix_(free, free)]
    factor, mu = _factor(C, log)
    if mu > 0:
        log.warning(f"⚠️  Covariance régularisée (mu={mu:.1e}) au mode pour lambda={lam:.4g}")
    cov = np.zeros((dim, dim))
    cov[np.ix_(free, free)] = linalg.cho_solve(factor, np.eye(free.size))
    cov = 0.5 * (cov + cov.T)
    log.debug(f"Laplace lambda={lam:.4g}: {iterations} itération(s), |grad|max={grad_norm:.2e}")
    return ConditionalPosterior(
        mean=x,
        covariance=cov,
        lam=float(lam),
        converged=converged,
        iterations=iterations,
        grad_norm=grad_norm,
        loglik=value,
        objective=f,
        logdet_curvature=_logdet(factor),
        free=free,
    )


def log_penalty_prior(v: float, hyper: Hyperparameters) -> float:
    """Log-prior (à une constante près) de v = log(lambda) : a v - b exp(v)."""
    return hyper.a_lambda * v - hyper.b_lambda * np.exp(v)


def log_posterior_v(
    v: float,
    likelihood: Likelihood,
    hyper: Hyperparameters,
    warm_start,
    fixed: dict[int, float] | None = None,
    logger: logging.Logger | None = None,
) -> tuple[float, ConditionalPosterior]:
    """
    Log-postérieur non normalisé de v = log(lambda).

    l(xi*) - xi*^T Q xi* / 2 + (log det Q + log det Sigma*) / 2 + a v - b e^v

    Returns:
        (valeur, postérieur de Laplace en lambda = exp(v))
    """
    lam = float(np.exp(v))
    post = laplace_approx(lam, likelihood, warm_start, hyper, fixed=fixed, logger=logger)
    P = hyper.penalty()
    Q = prior_precision(lam, P, likelihood.p, likelihood.q, hyper.zeta)
    free = post.free
    if free.size == Q.shape[0]:
        # déterminant par blocs : K log(lambda) + log det P + (p+1+q) log(zeta)
        K = P.size
        logdet_p = _logdet(linalg.cho_factor(P.matrix, lower=True))
        logdet_q = K * v + logdet_p + (Q.shape[0] - K) * np.log(hyper.zeta)
    else:
        logdet_q = _logdet(linalg.cho_factor(Q[np.ix_(free, free)], lower=True))
    xi = post.mean
    value = (
        post.loglik
        - 0.5 * float(xi @ Q @ xi)
        + 0.5 * (logdet_q - post.logdet_curvature)
        + log_penalty_prior(v, hyper)
    )
    return float(value), post


def bracket_mode(
    objective,
    v0: float,
    delta: float,
    v_min: float,
    logger: logging.Logger | None = None,
) -> float:
    """
    Recherche du mode par encadrement vers la gauche.

    Évalue v_m = v0 - m delta pour m = 0, 1, ... jusqu'à la première baisse
    objective(v_m) < objective(v_m + delta), puis retourne v_m + delta / 2.
    Si v_min est atteint sans baisse, retourne v_min avec un avertissement.

    Args:
        objective: Fonction de v à maximiser
        v0: Point de départ ("grand")
        delta: Pas (> 0)
        v_min: Borne basse (< v0)

    Returns:
        Mode approché v*
    """
    if not delta > 0:
        raise ValueError(f"Le pas delta doit être strictement positif, reçu {delta}")
    if not v_min < v0:
        raise ValueError(f"v_min ({v_min}) doit être < v0 ({v0})")
    log = get_logger("lpsmc.inference", logger)

    def evaluate(v: float) -> float:
        try:
            return float(objective(v))
        except LpsmcError as e:
            e.add_note(f"v = {v}")
            raise

    previous = evaluate(v0)
    m = 1
    while True:
        v = v0 - m * delta
        if v < v_min - 1e-9 * delta:
            log.warning(f"⚠️  Borne v_min={v_min} atteinte sans maximum de la log-postérieure de v")
            return float(v_min)
        current = evaluate(v)
        if current < previous:
            return float(v + 0.5 * delta)
        previous = current
        m += 1


@dataclass(frozen=True, eq=False)
class FitResult:
    """Résultat d'ajustement : mode v*, postérieur gaussien final et métadonnées."""

    v_star: float
    posterior: ConditionalPosterior
    constrained_index: int | None
    hyper: Hyperparameters
    grid: KnotGrid
    bins: BinGrid
    n: int
    p: int
    q: int
    incidence_labels: tuple[str, ...] = ()
    latency_labels: tuple[str, ...] = ()
    v_trace: pd.DataFrame | None = field(default=None, repr=False)
    v_grid_profile: pd.DataFrame | None = field(default=None, repr=False)
    boundary_hit: bool = False
    elapsed: float = 0.0

    @property
    def lam(self) -> float:
        return float(np.exp(self.v_star))

    @property
    def K(self) -> int:
        return self.grid.num_basis

    @property
    def theta_slice(self) -> slice:
        return slice(0, self.K)

    @property
    def beta_slice(self) -> slice:
        return slice(self.K, self.K + self.p + 1)

    @property
    def gamma_slice(self) -> slice:
        return slice(self.K + self.p + 1, self.K + self.p + 1 + self.q)

    @property
    def mean(self) -> np.ndarray:
        return self.posterior.mean

    @property
    def covariance(self) -> np.ndarray:
        return self.posterior.covariance

    @property
    def theta(self) -> np.ndarray:
        return self.mean[self.theta_slice]

    @property
    def beta(self) -> np.ndarray:
        return self.mean[self.beta_slice]

    @property
    def gamma(self) -> np.ndarray:
        return self.mean[self.gamma_slice]

    @property
    def latent(self) -> LatentVector:
        return LatentVector(self.theta, self.beta, self.gamma)

    def labels(self) -> list[str]:
        """Libellés des coordonnées de xi dans l'ordre (theta, beta, gamma)."""
        return (
            [f"theta{k}" for k in range(1, self.K + 1)]
            + ["beta0"]
            + [f"beta{m}" for m in range(1, self.p + 1)]
            + [f"gamma{s}" for s in range(1, self.q + 1)]
        )


def initial_latent(data: SurvivalDataset, K: int, steps: int = 5) -> LatentVector:
    """
    Point de départ de Newton.

    theta constant égal au log du taux d'événements (partition de l'unité),
    beta issu de quelques pas de régression logistique de tau sur X, gamma nul.
    """
    rate = data.events.sum() / max(float(data.times.sum()), np.finfo(float).tiny)
    theta = np.full(K, np.log(rate))
    X, y = data.X, data.events
    beta = np.zeros(X.shape[1])
    ridge = 1e-6 * np.eye(X.shape[1])
    for _ in range(steps):
        mu = expit(X @ beta)
        H = (X * (mu * (1.0 - mu))[:, None]).T @ X + ridge
        beta = beta + linalg.solve(H, X.T @ (y - mu), assume_a="pos")
    if not np.all(np.isfinite(beta)):
        beta = np.zeros(X.shape[1])
    return LatentVector(theta, beta, np.zeros(data.q))


def _profile_table(vs, values) -> pd.DataFrame:
    table = pd.DataFrame({"v": vs, "log_posterior": values}).sort_values("v", ignore_index=True)
    dens = np.exp(table["log_posterior"] - table["log_posterior"].max())
    table["density"] = dens / trapezoid(dens, table["v"])
    return table


def fit(
    data: SurvivalDataset,
    hyper: Hyperparameters | None = None,
    constrain_last_theta: bool = True,
    profile_grid=None,
    t_upper: float | None = None,
    logger: logging.Logger | None = None,
) -> FitResult:
    """
    Ajustement complet du modèle.

    1. Recherche de v* par encadrement sur log p(v | D), sans contrainte,
       avec démarrage à chaud de Newton au mode précédent.
    2. Approximation de Laplace finale en lambda = exp(v*), avec theta_K = 1
       si `constrain_last_theta`.
    3. Profil normalisé de p(v | D) sur `profile_grid` si demandé.

    Args:
        data: Jeu de données
        hyper: Hyperparamètres (valeurs par défaut si None)
        constrain_last_theta: Fixe theta_K = 1 dans l'ajustement final
        profile_grid: Valeurs de v pour le profil normalisé
        t_upper: Borne du support (par défaut le plus grand temps observé)
        logger: Logger optionnel

    Returns:
        FitResult

    Raises:
        ConvergenceError: Échec de Newton ; l'attribut `stage` indique l'étape
    """
    log = get_logger("lpsmc.inference", logger)
    hyper = hyper or Hyperparameters()
    start = time.perf_counter()

    t_upper = float(data.times.max()) if t_upper is None else float(t_upper)
    grid = KnotGrid(t_upper, hyper.num_basis)
    bins = BinGrid(hyper.num_bins, t_upper)
    likelihood = CureLikelihood.from_data(data, grid, bins)
    data.check_size(hyper.num_basis, log)
    K = hyper.num_basis
    init = initial_latent(data, K).flatten()
    log.debug(f"Ajustement: n={data.n}, p={data.p}, q={data.q}, K={K}, J={hyper.num_bins}")

    def solve(v: float, start_point: np.ndarray, stage: str, fixed=None):
        try:
            return log_posterior_v(v, likelihood, hyper, start_point, fixed=fixed, logger=log)
        except (ConvergenceError, NumericError) as first:
            log.debug(f"Échec depuis le départ à chaud en v={v:.3f} ({first}), reprise depuis zéro")
            zero = np.zeros_like(start_point)
            for index, value in (fixed or {}).items():
                zero[index] = value
            try:
                return log_posterior_v(v, likelihood, hyper, zero, fixed=fixed, logger=log)
            except ConvergenceError as e:
                e.stage = stage
                raise

    warm = init
    trace_v: list[float] = []
    trace_value: list[float] = []

    def objective(v: float) -> float:
        nonlocal warm
        value, post = solve(v, warm, "v-search")
        warm = post.mean
        trace_v.append(v)
        trace_value.append(value)
        return value

    v_star = bracket_mode(objective, hyper.v0, hyper.delta_v, hyper.v_min, logger=log)
    boundary_hit = v_star <= hyper.v_min
    log.info(f"Mode de la log-postérieure de v: v*={v_star:.3f} ({len(trace_v)} évaluations)")

    fixed = {K - 1: 1.0} if constrain_last_theta else None
    final_start = warm.copy()
    if fixed:
        final_start[K - 1] = 1.0
    _, posterior = solve(v_star, final_start, "final", fixed=fixed)

    v_grid_profile = None
    if profile_grid is not None:
        vs = np.sort(np.asarray(profile_grid, dtype=float))[::-1]
        values = []
        warm = posterior.mean if not fixed else init
        for v in vs:
            value, post = solve(float(v), warm, "profile")
            warm = post.mean
            values.append(value)
        v_grid_profile = _profile_table(vs, values)

    elapsed = time.perf_counter() - start
    log.info(f"✅ Ajustement terminé en {elapsed:.2f} s (v*={v_star:.3f})")
    return FitResult(
        v_star=float(v_star),
        posterior=posterior,
        constrained_index=K - 1 if constrain_last_theta else None,
        hyper=hyper,
        grid=grid,
        bins=bins,
        n=data.n,
        p=data.p,
        q=data.q,
        incidence_labels=data.incidence_labels,
        latency_labels=data.latency_labels,
        v_trace=pd.DataFrame({"v": trace_v, "log_posterior": trace_value}),
        v_grid_profile=v_grid_profile,
        boundary_hit=boundary_hit,
        elapsed=elapsed,
    )
