"""Base de B-splines cubiques sur [0, t_upper] et matrice de pénalité par différences"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline

from lpsmc.errors import DomainError, InvalidOrderError

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class KnotGrid:
    """
    Grille de nœuds équidistants sur [0, t_upper] portant K B-splines cubiques.

    Convention aux bords : base "clamped", les nœuds 0 et t_upper sont répétés
    degree fois de plus. Les K - degree + 1 nœuds intérieurs sont équidistants,
    ce qui donne exactement K fonctions de base et la partition de l'unité sur
    tout [0, t_upper]. En t = 0 seule b_1 vaut 1 ; en t = t_upper seule b_K vaut 1.

    Attributes:
        t_upper: Borne supérieure du support (> 0)
        num_basis: Nombre K de B-splines
        degree: Degré (3 uniquement)
    """

    t_upper: float
    num_basis: int
    degree: int = 3

    def __post_init__(self):
        if self.degree != 3:
            raise ValueError(f"Seules les B-splines cubiques sont supportées (degree={self.degree})")
        if not np.isfinite(self.t_upper) or self.t_upper <= 0:
            raise ValueError(f"t_upper doit être strictement positif, reçu {self.t_upper}")
        if self.num_basis < self.degree + 1:
            raise ValueError(
                f"Il faut au moins {self.degree + 1} B-splines cubiques, reçu K={self.num_basis}"
            )

    @cached_property
    def knots(self) -> np.ndarray:
        inner = np.linspace(0.0, self.t_upper, self.num_basis - self.degree + 1)
        knots = np.r_[[0.0] * self.degree, inner, [self.t_upper] * self.degree]
        knots.flags.writeable = False
        return knots

    def check_domain(self, times: np.ndarray) -> None:
        """Lève DomainError avec l'indice du premier temps hors de [0, t_upper]."""
        times = np.asarray(times, dtype=float)
        bad = ~((times >= 0.0) & (times <= self.t_upper))
        if bad.any():
            index = int(np.flatnonzero(bad.ravel())[0])
            raise DomainError(
                f"Temps {times.ravel()[index]!r} hors de l'intervalle [0, {self.t_upper}]",
                index=index,
            )


def basis_matrix(grid: KnotGrid, times) -> np.ndarray:
    """
    Évalue les K B-splines en chaque temps.

    Args:
        grid: Grille de nœuds
        times: Vecteur de n temps dans [0, t_upper]

    Returns:
        Matrice dense n x K ; la ligne i vaut bspline_eval(grid, times[i])

    Raises:
        DomainError: Si un temps sort de [0, t_upper] (l'indice fautif est porté par l'erreur)
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    grid.check_domain(times)
    # design_matrix inclut la borne droite dans le dernier intervalle
    return BSpline.design_matrix(times, grid.knots, grid.degree).toarray()


def bspline_eval(grid: KnotGrid, t: float) -> np.ndarray:
    """Vecteur (b_1(t), ..., b_K(t))."""
    return basis_matrix(grid, [t])[0]


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    """P = D_r^T D_r + epsilon I_K, avec D_r l'opérateur de différences d'ordre r."""

    matrix: np.ndarray
    order: int
    epsilon: float
    difference: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def roughness(self, theta: np.ndarray) -> float:
        """Forme quadratique sans ridge : ||D_r theta||^2."""
        d = self.difference @ theta
        return float(d @ d)


def difference_operator(K: int, r: int) -> np.ndarray:
    """Matrice (K - r) x K des différences d'ordre r."""
    return np.diff(np.eye(K), n=r, axis=0)


def penalty_matrix(K: int, r: int, epsilon: float = DEFAULT_EPSILON) -> PenaltyMatrix:
    """
    Construit la matrice de pénalité des P-splines.

    Args:
        K: Nombre de B-splines
        r: Ordre des différences (1 <= r < K)
        epsilon: Ridge ajouté sur la diagonale (>= 0)

    Returns:
        PenaltyMatrix: matrice symétrique, définie positive dès que epsilon > 0

    Raises:
        InvalidOrderError: Si r < 1 ou r >= K
    """
    if r < 1 or r >= K:
        raise InvalidOrderError(f"Ordre de pénalité r={r} invalide pour K={K} (1 <= r < K)")
    if epsilon < 0:
        raise ValueError(f"epsilon doit être positif, reçu {epsilon}")

    D = difference_operator(K, r)
    P = D.T @ D
    # symétrie exacte
    P = 0.5 * (P + P.T) + epsilon * np.eye(K)
    P.flags.writeable = False
    D.flags.writeable = False
    return PenaltyMatrix(matrix=P, order=r, epsilon=float(epsilon), difference=D)
