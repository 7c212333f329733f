"""Intervalles de crédibilité par la méthode delta et quantiles de survie"""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import norm

from lpsmc.errors import ConstrainedCoordinateError, TransformSingularityError
from lpsmc.laplace_inference import FitResult
from lpsmc.mixture_cure_model import midpoint_basis

IDENTITY = "identity"
LOG_MINUS_LOG = "log(-log)"


@dataclass(frozen=True)
class CredibleInterval:
    point: float
    lower: float
    upper: float
    level: float
    transform: str = IDENTITY

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def as_row(self) -> dict:
        return {
            "estimate": self.point,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "transform": self.transform,
        }


def z_quantile(alpha: float) -> float:
    """z_{alpha/2} = Phi^{-1}(1 - alpha/2) ; nul pour alpha = 1."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha doit être dans (0, 1], reçu {alpha}")
    return float(norm.ppf(1.0 - alpha / 2.0))


def _from_log_minus_log(point: float, g: float, sd: float, alpha: float) -> CredibleInterval:
    # exp(-exp(.)) est décroissant : les bornes sont réordonnées
    z = z_quantile(alpha)
    a, b = np.exp(-np.exp(g - z * sd)), np.exp(-np.exp(g + z * sd))
    lower, upper = min(a, b), max(a, b)
    return CredibleInterval(float(point), float(lower), float(upper), 1.0 - alpha, LOG_MINUS_LOG)


def _coordinate(fit: FitResult, h) -> int:
    if isinstance(h, str):
        labels = fit.labels()
        if h not in labels:
            raise KeyError(f"Coordonnée inconnue: {h!r}")
        return labels.index(h)
    h = int(h)
    if not 0 <= h < fit.mean.size:
        raise IndexError(f"Coordonnée {h} hors de [0, {fit.mean.size})")
    return h


def ci_latent(fit: FitResult, h, alpha: float = 0.05) -> CredibleInterval:
    """
    Intervalle xi_h* +/- z_{alpha/2} sigma_h pour une coordonnée latente.

    Args:
        fit: Résultat d'ajustement
        h: Indice (0-based dans l'ordre theta, beta, gamma) ou libellé ("beta1", "gamma2", ...)
        alpha: Niveau (intervalle à 1 - alpha)

    Raises:
        ConstrainedCoordinateError: Si h est la coordonnée theta_K fixée
    """
    h = _coordinate(fit, h)
    if fit.constrained_index is not None and h == fit.constrained_index:
        raise ConstrainedCoordinateError(
            f"La coordonnée {fit.labels()[h]} est fixée à 1 : pas d'intervalle de crédibilité"
        )
    point = float(fit.mean[h])
    sd = float(np.sqrt(max(fit.covariance[h, h], 0.0)))
    half = z_quantile(alpha) * sd
    return CredibleInterval(point, point - half, point + half, 1.0 - alpha)


def ci_incidence(fit: FitResult, x_row, alpha: float = 0.05, target: str = "uncured"):
    """
    Intervalle pour p(x) (target="uncured") ou 1 - p(x) (target="cured").

    Construit sur l'échelle g = log(-log(.)) puis ramené par exp(-exp(.)).
    -log p(x) = log(1 + exp(-eta)) et -log(1 - p(x)) = log(1 + exp(eta)).

    Raises:
        TransformSingularityError: Si la probabilité vaut numériquement 0 ou 1
    """
    if target not in ("uncured", "cured"):
        raise ValueError(f"Cible inconnue: {target!r} (uncured ou cured)")
    x = np.asarray(x_row, dtype=float)
    if x.shape != (fit.p + 1,) or x[0] != 1.0:
        raise ValueError(f"Le profil x doit être de longueur {fit.p + 1} et commencer par 1")

    eta = float(x @ fit.beta)
    sign = -1.0 if target == "uncured" else 1.0
    # -log de la probabilité visée
    softplus = float(np.logaddexp(0.0, sign * eta))
    point = float(np.exp(-softplus))
    if not (0.0 < point < 1.0) or softplus <= 0.0:
        degenerate = "{1}" if point >= 1.0 else "{0}"
        raise TransformSingularityError(
            f"Probabilité {target} numériquement dégénérée ({point!r}) pour x={x.tolist()} : "
            f"rapporter l'intervalle dégénéré {degenerate}"
        )
    g = np.log(softplus)
    # d softplus(sign * eta) / d eta = sign * expit(sign * eta) = sign * (1 - point)
    grad = sign * (1.0 - point) / softplus * x
    cov = fit.covariance[fit.beta_slice, fit.beta_slice]
    sd = float(np.sqrt(max(grad @ cov @ grad, 0.0)))
    return _from_log_minus_log(point, g, sd, alpha)


def _riemann_terms(fit: FitResult):
    """Sommes cumulées omega(m) et omega^k(m) aux J bornes."""
    B_mid = midpoint_basis(fit.grid, fit.bins)
    h = np.exp(B_mid @ fit.theta) * fit.bins.width
    return np.cumsum(h), np.cumsum(B_mid * h[:, None], axis=0)


def _survival_bands(fit: FitResult, bins_1based: np.ndarray, z_row, alpha: float):
    """Estimation et bandes ponctuelles de S0 (z_row None) ou S_u(.|z) aux indices donnés."""
    omega, omega_k = _riemann_terms(fit)
    j0 = np.asarray(bins_1based) - 1
    w, wk = omega[j0], omega_k[j0]
    grad_theta = wk / w[:, None]
    g = np.log(w)

    if z_row is None:
        grad = grad_theta
        cov = fit.covariance[fit.theta_slice, fit.theta_slice]
    else:
        z = np.asarray(z_row, dtype=float)
        if z.shape != (fit.q,):
            raise ValueError(f"Le profil z doit être de longueur {fit.q}")
        g = g + float(z @ fit.gamma)
        grad = np.hstack([grad_theta, np.broadcast_to(z, (grad_theta.shape[0], fit.q))])
        index = np.r_[np.arange(fit.K), np.arange(fit.gamma_slice.start, fit.gamma_slice.stop)]
        cov = fit.covariance[np.ix_(index, index)]

    sd = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", grad, cov, grad), 0.0))
    z_alpha = z_quantile(alpha)
    point = np.exp(-np.exp(g))
    a, b = np.exp(-np.exp(g - z_alpha * sd)), np.exp(-np.exp(g + z_alpha * sd))
    return point, np.minimum(a, b), np.maximum(a, b), g, grad


def ci_baseline_survival(fit: FitResult, t: float, alpha: float = 0.05) -> CredibleInterval:
    """
    Intervalle pour S0(t) à partir de g(theta|t) = log(sum_{j <= j(t)} exp(theta^T b(s_j)) Delta).

    Le gradient de g est omega^k(t) / omega(t) ; la ligne de covariance de theta_K
    fixée est nulle et ne contribue pas.
    """
    j = fit.bins.bin_index(np.atleast_1d(t))
    point, lower, upper, _, _ = _survival_bands(fit, j, None, alpha)
    return CredibleInterval(
        float(point[0]), float(lower[0]), float(upper[0]), 1.0 - alpha, LOG_MINUS_LOG
    )


def ci_latency_survival(fit: FitResult, z_row, t: float, alpha: float = 0.05) -> CredibleInterval:
    """Intervalle pour S_u(t|z), avec la covariance jointe de (theta, gamma)."""
    j = fit.bins.bin_index(np.atleast_1d(t))
    point, lower, upper, _, _ = _survival_bands(fit, j, z_row, alpha)
    return CredibleInterval(
        float(point[0]), float(lower[0]), float(upper[0]), 1.0 - alpha, LOG_MINUS_LOG
    )


def survival_log_cumhazard(fit: FitResult, t: float, z_row=None) -> tuple[float, np.ndarray]:
    """g(theta|t) (ou g(theta, gamma|t, z)) et son gradient, pour les contrôles numériques."""
    j = fit.bins.bin_index(np.atleast_1d(t))
    _, _, _, g, grad = _survival_bands(fit, j, z_row, 0.05)
    return float(g[0]), grad[0]


def survival_quantile(fit: FitResult, q: float, z_row=None) -> tuple[float, bool]:
    """
    Quantile t_q = inf{t : S(t) <= 1 - q} par balayage des bornes de la grille.

    Avec j(t) = floor(t / Delta) + 1, la survie est constante sur [(m-1) Delta, m Delta)
    et vaut exp(-omega(m)) ; le quantile est donc la borne (m - 1) Delta du premier
    intervalle m où la survie passe sous 1 - q.

    Args:
        fit: Résultat d'ajustement
        q: Probabilité dans (0, 1)
        z_row: Profil de latence (None pour la survie de base)

    Returns:
        (temps, atteint) ; (t_upper, False) si la survie reste au-dessus de 1 - q
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q doit être dans (0, 1), reçu {q}")
    omega, _ = _riemann_terms(fit)
    log_cumhazard = np.log(omega)
    if z_row is not None:
        log_cumhazard = log_cumhazard + float(np.asarray(z_row, dtype=float) @ fit.gamma)
    survival = np.exp(-np.exp(log_cumhazard))
    below = np.flatnonzero(survival <= 1.0 - q)
    if below.size == 0:
        return float(fit.bins.t_upper), False
    return float(below[0] * fit.bins.width), True


def survival_curve(fit: FitResult, alpha: float = 0.05, z_row=None) -> pd.DataFrame:
    """
    Courbe de S0 (ou S_u(.|z)) aux points milieux de la grille avec bandes ponctuelles.

    Returns:
        DataFrame avec colonnes t, estimate, lower, upper
    """
    j = np.arange(1, fit.bins.num_bins + 1)
    point, lower, upper, _, _ = _survival_bands(fit, j, z_row, alpha)
    return pd.DataFrame(
        {"t": fit.bins.midpoints, "estimate": point, "lower": lower, "upper": upper}
    )
