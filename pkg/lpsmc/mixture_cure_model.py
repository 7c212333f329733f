"""
Modèle de guérison par mélange : incidence logistique, latence de Cox à risque
de base P-spline, survie de population, log-vraisemblance et ses dérivées
analytiques (gradient et les six blocs du hessien).

L'ordre d'empilement du vecteur latent est partout (theta, beta, gamma).
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import expit

from lpsmc.errors import DomainError, NumericError
from lpsmc.spline_basis import KnotGrid, basis_matrix

logger = logging.getLogger("lpsmc.model")

# exp(-745) est le plus petit sous-normal représentable
EXP_FLOOR = 745.0


def _readonly(array, ndim: int) -> np.ndarray:
    out = np.array(array, dtype=float, ndmin=ndim, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """
    Observables (t_i, tau_i, x_i, z_i) de n unités.

    Attributes:
        times: Temps de suivi (>= 0)
        events: Indicateurs d'événement dans {0, 1}
        X: Plan d'incidence n x (p+1), première colonne d'intercept
        Z: Plan de latence n x q (q peut être nul)
        incidence_labels: Noms des p covariables d'incidence (hors intercept)
        latency_labels: Noms des q covariables de latence
    """

    times: np.ndarray
    events: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    incidence_labels: tuple[str, ...] = ()
    latency_labels: tuple[str, ...] = ()

    def __post_init__(self):
        times = _readonly(self.times, 1)
        events = _readonly(self.events, 1)
        n = times.shape[0]
        X = _readonly(self.X, 2)
        Z = np.asarray(self.Z, dtype=float)
        if Z.size == 0:
            Z = np.zeros((n, 0))
        Z = _readonly(Z.reshape(n, -1) if Z.ndim < 2 else Z, 2)

        if n == 0:
            raise ValueError("Le jeu de données est vide")
        if events.shape[0] != n or X.shape[0] != n or Z.shape[0] != n:
            raise ValueError(
                f"Dimensions incohérentes: n={n}, events={events.shape[0]}, "
                f"X={X.shape[0]}, Z={Z.shape[0]}"
            )
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise ValueError("Les temps de suivi doivent être finis et positifs")
        if not np.all(np.isin(events, (0.0, 1.0))):
            raise ValueError("Les indicateurs d'événement doivent valoir 0 ou 1")
        if events.sum() < 1:
            raise ValueError("Au moins un événement observé est requis")
        if X.shape[1] < 1 or not np.all(X[:, 0] == 1.0):
            raise ValueError("La première colonne de X doit être l'intercept (identiquement 1)")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
            raise ValueError("Les covariables doivent être finies")

        incidence_labels = tuple(self.incidence_labels) or tuple(
            f"x{m}" for m in range(1, X.shape[1])
        )
        latency_labels = tuple(self.latency_labels) or tuple(
            f"z{s}" for s in range(1, Z.shape[1] + 1)
        )
        if len(incidence_labels) != X.shape[1] - 1 or len(latency_labels) != Z.shape[1]:
            raise ValueError("Le nombre de libellés ne correspond pas aux colonnes de X et Z")

        for name, value in (
            ("times", times),
            ("events", events),
            ("X", X),
            ("Z", Z),
            ("incidence_labels", incidence_labels),
            ("latency_labels", latency_labels),
        ):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        """Nombre de covariables d'incidence hors intercept."""
        return self.X.shape[1] - 1

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    def latent_dim(self, num_basis: int) -> int:
        return num_basis + self.p + 1 + self.q

    def check_size(self, num_basis: int, log: logging.Logger | None = None) -> bool:
        """Avertit si n < dim(xi). Retourne True si la taille est suffisante."""
        dim = self.latent_dim(num_basis)
        if self.n < dim:
            (log or logger).warning(
                f"⚠️  n={self.n} est inférieur à la dimension du vecteur latent ({dim})"
            )
            return False
        return True

    def take(self, order) -> "SurvivalDataset":
        """Sous-ensemble ou permutation des unités."""
        order = np.asarray(order)
        return SurvivalDataset(
            self.times[order],
            self.events[order],
            self.X[order],
            self.Z[order],
            self.incidence_labels,
            self.latency_labels,
        )


@dataclass(frozen=True, eq=False)
class LatentVector:
    """xi = (theta, beta, gamma)."""

    theta: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("theta", "beta", "gamma"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float, ndmin=1))
        if not np.all(np.isfinite(self.flatten())):
            raise ValueError("Le vecteur latent contient des valeurs non finies")

    @property
    def dim(self) -> int:
        return self.theta.size + self.beta.size + self.gamma.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.theta, self.beta, self.gamma])

    @classmethod
    def from_flat(cls, xi: np.ndarray, K: int, p1: int, q: int) -> "LatentVector":
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (K + p1 + q,):
            raise ValueError(f"Vecteur de taille {xi.shape} incompatible avec K={K}, p+1={p1}, q={q}")
        return cls(xi[:K], xi[K : K + p1], xi[K + p1 :])


@dataclass(frozen=True)
class BinGrid:
    """
    Partition de [0, t_upper] en J intervalles pour la règle du point milieu.

    j(t) = min(J, floor(t / Delta) + 1) : t = 0 tombe dans l'intervalle 1 et un
    temps sur une frontière appartient à l'intervalle de droite. Une marge de 1e-9
    intervalle absorbe l'arrondi de t / Delta sur les frontières.
    """

    num_bins: int
    t_upper: float

    def __post_init__(self):
        if self.num_bins < 1:
            raise ValueError(f"J doit être >= 1, reçu {self.num_bins}")
        if not np.isfinite(self.t_upper) or self.t_upper <= 0:
            raise ValueError(f"t_upper doit être strictement positif, reçu {self.t_upper}")

    @property
    def width(self) -> float:
        return self.t_upper / self.num_bins

    @cached_property
    def midpoints(self) -> np.ndarray:
        s = (np.arange(1, self.num_bins + 1) - 0.5) * self.width
        s.flags.writeable = False
        return s

    @property
    def boundaries(self) -> np.ndarray:
        """Bornes droites m * Delta, m = 1..J."""
        return np.arange(1, self.num_bins + 1) * self.width

    def bin_index(self, t) -> np.ndarray:
        """Indice j(t) dans {1, ..., J} (tableau d'entiers)."""
        t = np.asarray(t, dtype=float)
        bad = ~((t >= 0.0) & (t <= self.t_upper))
        if bad.any():
            index = int(np.flatnonzero(bad.ravel())[0])
            raise DomainError(
                f"Temps {t.ravel()[index]!r} hors de l'intervalle [0, {self.t_upper}]",
                index=index,
            )
        return np.minimum(self.num_bins, np.floor(t / self.width + 1e-9).astype(int) + 1)


@lru_cache(maxsize=32)
def midpoint_basis(grid: KnotGrid, bins: BinGrid) -> np.ndarray:
    """Matrice J x K des B-splines aux points milieux (partagée, en lecture seule)."""
    B = basis_matrix(grid, bins.midpoints)
    B.flags.writeable = False
    return B


@dataclass(frozen=True, eq=False)
class CureModelDesign:
    """Quantités indépendantes de xi : bases aux temps observés et aux points milieux."""

    data: SurvivalDataset
    grid: KnotGrid
    bins: BinGrid
    basis_at_times: np.ndarray = field(init=False, repr=False)
    basis_at_midpoints: np.ndarray = field(init=False, repr=False)
    bin_of_unit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not np.isclose(self.grid.t_upper, self.bins.t_upper, rtol=0, atol=1e-12):
            raise ValueError(
                f"KnotGrid ({self.grid.t_upper}) et BinGrid ({self.bins.t_upper}) "
                "doivent partager t_upper"
            )
        B_times = basis_matrix(self.grid, self.data.times)
        B_times.flags.writeable = False
        # indices 0-based pour l'accès aux sommes cumulées
        j0 = self.bins.bin_index(self.data.times) - 1
        j0.flags.writeable = False
        object.__setattr__(self, "basis_at_times", B_times)
        object.__setattr__(self, "basis_at_midpoints", midpoint_basis(self.grid, self.bins))
        object.__setattr__(self, "bin_of_unit", j0)

    @property
    def K(self) -> int:
        return self.grid.num_basis

    @property
    def p1(self) -> int:
        return self.data.X.shape[1]

    @property
    def q(self) -> int:
        return self.data.q

    @property
    def dim(self) -> int:
        return self.K + self.p1 + self.q

    def unflatten(self, xi: np.ndarray) -> LatentVector:
        return LatentVector.from_flat(xi, self.K, self.p1, self.q)


@lru_cache(maxsize=8)
def design_for(data: SurvivalDataset, grid: KnotGrid, bins: BinGrid) -> CureModelDesign:
    """Plan mis en cache par identité du jeu de données."""
    return CureModelDesign(data, grid, bins)


@dataclass(frozen=True, eq=False)
class OmegaCache:
    """
    Sommes de Riemann dépendant de theta.

    omega0[i] = sum_{j <= j(t_i)} h0(s_j) Delta
    omega1[i, k] = sum_{j <= j(t_i)} h0(s_j) b_k(s_j) Delta
    """

    omega0: np.ndarray
    omega1: np.ndarray
    basis_at_midpoints: np.ndarray
    hazard_at_midpoints: np.ndarray

    @classmethod
    def build(cls, theta: np.ndarray, design: CureModelDesign) -> "OmegaCache":
        B_mid = design.basis_at_midpoints
        delta = design.bins.width
        h = np.exp(B_mid @ theta)
        c0 = np.cumsum(h * delta)
        c1 = np.cumsum(B_mid * (h * delta)[:, None], axis=0)
        j0 = design.bin_of_unit
        return cls(omega0=c0[j0], omega1=c1[j0], basis_at_midpoints=B_mid, hazard_at_midpoints=h)


def omega_cache(
    theta: np.ndarray, data: SurvivalDataset, grid: KnotGrid, bins: BinGrid
) -> OmegaCache:
    return OmegaCache.build(np.asarray(theta, dtype=float), design_for(data, grid, bins))


# ---------------------------------------------------------------------------
# Quantités du modèle
# ---------------------------------------------------------------------------


def incidence(beta, x_row) -> float | np.ndarray:
    """
    Probabilité d'être non guéri p(x) = expit(beta_0 + x^T beta).

    Args:
        beta: Coefficients (beta_0 en premier)
        x_row: Profil (1, x) ou matrice de profils

    Returns:
        Probabilité dans (0, 1), saturée sans débordement
    """
    eta = np.asarray(x_row, dtype=float) @ np.asarray(beta, dtype=float)
    return expit(eta)


def cumulative_baseline(theta, grid: KnotGrid, bins: BinGrid) -> np.ndarray:
    """Risque cumulé de base aux J bornes : sum_{j <= m} exp(theta^T b(s_j)) Delta."""
    h = np.exp(midpoint_basis(grid, bins) @ np.asarray(theta, dtype=float))
    return np.cumsum(h * bins.width)


def baseline_survival(theta, grid: KnotGrid, bins: BinGrid, t):
    """S0(t) ~ exp(-sum_{j <= j(t)} exp(theta^T b(s_j)) Delta)."""
    j = bins.bin_index(t)
    value = np.exp(-cumulative_baseline(theta, grid, bins)[j - 1])
    return float(value) if np.ndim(value) == 0 else value


def latency_survival(theta, gamma, z_row, grid: KnotGrid, bins: BinGrid, t):
    """S_u(t|z) = S0(t) ** exp(z^T gamma)."""
    j = bins.bin_index(t)
    lz = float(np.dot(np.asarray(z_row, dtype=float), np.asarray(gamma, dtype=float)))
    Lam = np.exp(lz) * cumulative_baseline(theta, grid, bins)[j - 1]
    value = np.exp(-np.minimum(Lam, EXP_FLOOR))
    return float(value) if np.ndim(value) == 0 else value


def population_survival(xi: LatentVector, x_row, z_row, grid: KnotGrid, bins: BinGrid, t):
    """S_p(t|x,z) = 1 - p(x) + p(x) S_u(t|z)."""
    p = incidence(xi.beta, x_row)
    su = latency_survival(xi.theta, xi.gamma, z_row, grid, bins, t)
    return 1.0 - p + p * su


# ---------------------------------------------------------------------------
# Log-vraisemblance et dérivées
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _UnitTerms:
    """Dérivées de g_i par rapport à eta_i = x_i^T beta et Lambda_i = exp(z_i^T gamma) omega0_i."""

    g: np.ndarray
    g_eta: np.ndarray
    g_lam: np.ndarray
    g_eta_eta: np.ndarray
    g_eta_lam: np.ndarray
    g_lam_lam: np.ndarray
    ez: np.ndarray
    lam: np.ndarray


def _unit_terms(xi: LatentVector, design: CureModelDesign, cache: OmegaCache) -> _UnitTerms:
    data = design.data
    tau = data.events.astype(bool)

    eta = data.X @ xi.beta
    log_p = -np.logaddexp(0.0, -eta)
    log_q = -np.logaddexp(0.0, eta)
    p = np.exp(log_p)
    q = np.exp(log_q)

    lz = data.Z @ xi.gamma
    ez = np.exp(lz)
    lam = ez * cache.omega0
    su = np.exp(-np.minimum(lam, EXP_FLOOR))
    # log S_p = log(q + p S_u)
    log_sp = np.logaddexp(log_q, log_p - lam)

    log_h = design.basis_at_times @ xi.theta
    g = np.where(tau, log_p + lz + log_h - lam, log_sp)

    # unités censurées
    a = np.exp(log_p - lam - log_sp)
    pq_sp = np.exp(log_p + log_q - log_sp)
    sp = np.exp(log_sp)
    u = su - 1.0

    g_eta = np.where(tau, q, pq_sp * u)
    g_lam = np.where(tau, -1.0, -a)
    g_eta_eta = np.where(tau, -p * q, u * pq_sp * (q * q - p * p * su) / sp)
    g_eta_lam = np.where(tau, 0.0, -a * q / sp)
    g_lam_lam = np.where(tau, 0.0, a * (1.0 - a))
    return _UnitTerms(g, g_eta, g_lam, g_eta_eta, g_eta_lam, g_lam_lam, ez, lam)


def _as_latent(xi, design: CureModelDesign) -> LatentVector:
    if isinstance(xi, LatentVector):
        return xi
    return design.unflatten(xi)


def unit_loglik(xi, design: CureModelDesign, cache: OmegaCache | None = None) -> np.ndarray:
    """Contributions g_i(xi) de chaque unité."""
    xi = _as_latent(xi, design)
    cache = cache or OmegaCache.build(xi.theta, design)
    return _unit_terms(xi, design, cache).g


def _checked_sum(g: np.ndarray) -> float:
    total = float(np.sum(g))
    if not np.isfinite(total):
        unit = int(np.flatnonzero(~np.isfinite(g))[0])
        raise NumericError("Log-vraisemblance non finie", unit=unit)
    return total


def loglik(xi, data: SurvivalDataset, grid: KnotGrid, bins: BinGrid) -> float:
    """
    Log-vraisemblance approchée sum_i g_i(xi).

    Raises:
        NumericError: Si une contribution est non finie (l'indice de l'unité est porté)
    """
    design = design_for(data, grid, bins)
    return _checked_sum(unit_loglik(xi, design))


def _gradient(xi: LatentVector, design: CureModelDesign, cache: OmegaCache, terms: _UnitTerms):
    data = design.data
    tau = data.events
    L = terms.ez[:, None] * cache.omega1
    d_theta = tau @ design.basis_at_times + terms.g_lam @ L
    d_beta = terms.g_eta @ data.X
    d_gamma = (tau + terms.g_lam * terms.lam) @ data.Z
    return np.concatenate([d_theta, d_beta, d_gamma])


def _hessian(xi: LatentVector, design: CureModelDesign, cache: OmegaCache, terms: _UnitTerms):
    data = design.data
    K, p1, q = design.K, design.p1, design.q
    X, Z = data.X, data.Z
    L = terms.ez[:, None] * cache.omega1
    B_mid = cache.basis_at_midpoints

    # bloc theta-theta : la partie en omega^{kl} se réduit à une somme sur les points milieux
    w = np.bincount(
        design.bin_of_unit, weights=terms.g_lam * terms.ez, minlength=design.bins.num_bins
    )
    W = np.cumsum(w[::-1])[::-1]
    mid_weights = cache.hazard_at_midpoints * design.bins.width * W
    h11 = (L * terms.g_lam_lam[:, None]).T @ L + (B_mid * mid_weights[:, None]).T @ B_mid
    h12 = (L * terms.g_eta_lam[:, None]).T @ X
    h13 = (L * (terms.g_lam_lam * terms.lam + terms.g_lam)[:, None]).T @ Z
    h22 = (X * terms.g_eta_eta[:, None]).T @ X
    h23 = (X * (terms.g_eta_lam * terms.lam)[:, None]).T @ Z
    h33 = (Z * (terms.g_lam_lam * terms.lam**2 + terms.g_lam * terms.lam)[:, None]).T @ Z

    dim = K + p1 + q
    H = np.zeros((dim, dim))
    th, be, ga = slice(0, K), slice(K, K + p1), slice(K + p1, dim)
    H[th, th] = h11
    H[th, be] = h12
    H[th, ga] = h13
    H[be, be] = h22
    H[be, ga] = h23
    H[ga, ga] = h33
    # triangle inférieur recopié du triangle supérieur
    upper = np.triu(H)
    return upper + np.triu(H, 1).T


def loglik_gradient(
    xi, data: SurvivalDataset, grid: KnotGrid, bins: BinGrid, cache: OmegaCache | None = None
) -> np.ndarray:
    """Gradient de la log-vraisemblance dans l'ordre (theta, beta, gamma)."""
    design = design_for(data, grid, bins)
    xi = _as_latent(xi, design)
    cache = cache or OmegaCache.build(xi.theta, design)
    return _gradient(xi, design, cache, _unit_terms(xi, design, cache))


def loglik_hessian(
    xi, data: SurvivalDataset, grid: KnotGrid, bins: BinGrid, cache: OmegaCache | None = None
) -> np.ndarray:
    """Hessien symétrique de la log-vraisemblance."""
    design = design_for(data, grid, bins)
    xi = _as_latent(xi, design)
    cache = cache or OmegaCache.build(xi.theta, design)
    return _hessian(xi, design, cache, _unit_terms(xi, design, cache))


def evaluate_loglik(xi, design: CureModelDesign) -> tuple[float, np.ndarray, np.ndarray]:
    """Valeur, gradient et hessien en une seule passe sur les unités."""
    xi = _as_latent(xi, design)
    cache = OmegaCache.build(xi.theta, design)
    terms = _unit_terms(xi, design, cache)
    value = _checked_sum(terms.g)
    return value, _gradient(xi, design, cache, terms), _hessian(xi, design, cache, terms)
