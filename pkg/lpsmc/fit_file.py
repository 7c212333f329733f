"""Fichier d'ajustement JSON versionné (relu par la commande intervals)"""

import json
from pathlib import Path

import numpy as np

from lpsmc.laplace_inference import ConditionalPosterior, FitResult, Hyperparameters
from lpsmc.mixture_cure_model import BinGrid
from lpsmc.spline_basis import KnotGrid

FORMAT = "lpsmc-fit"
VERSION = 1


def fit_to_dict(fit: FitResult, centering: dict[str, float] | None = None) -> dict:
    """Sérialisation sans horodatage : mêmes entrées, mêmes octets."""
    post = fit.posterior
    return {
        "format": FORMAT,
        "version": VERSION,
        "dimensions": {
            "n": fit.n,
            "K": fit.K,
            "J": fit.bins.num_bins,
            "p": fit.p,
            "q": fit.q,
            "dim": int(fit.mean.size),
        },
        "t_upper": fit.grid.t_upper,
        "incidence_labels": list(fit.incidence_labels),
        "latency_labels": list(fit.latency_labels),
        "centering": dict(centering or {}),
        "hyperparameters": {
            "a_lambda": fit.hyper.a_lambda,
            "b_lambda": fit.hyper.b_lambda,
            "zeta": fit.hyper.zeta,
            "epsilon": fit.hyper.epsilon,
            "penalty_order": fit.hyper.penalty_order,
            "num_basis": fit.hyper.num_basis,
            "num_bins": fit.hyper.num_bins,
            "v0": fit.hyper.v0,
            "delta_v": fit.hyper.delta_v,
            "v_min": fit.hyper.v_min,
            "newton_tol": fit.hyper.newton_tol,
            "newton_max_iter": fit.hyper.newton_max_iter,
        },
        "v_star": fit.v_star,
        "boundary_hit": fit.boundary_hit,
        "constrained_index": fit.constrained_index,
        "posterior": {
            "lambda": post.lam,
            "converged": post.converged,
            "iterations": post.iterations,
            "grad_norm": post.grad_norm,
            "loglik": post.loglik,
            "objective": post.objective,
            "logdet_curvature": post.logdet_curvature,
            "free": post.free.tolist(),
            "mean": post.mean.tolist(),
            "covariance": post.covariance.tolist(),
        },
    }


def write_fit_file(fit: FitResult, path: Path, centering: dict[str, float] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # json écrit les flottants avec repr : aller-retour exact
    path.write_text(json.dumps(fit_to_dict(fit, centering), indent=2) + "\n", encoding="utf-8")
    return path


def fit_from_dict(payload: dict) -> FitResult:
    if payload.get("format") != FORMAT:
        raise ValueError(f"Format de fichier inconnu: {payload.get('format')!r}")
    if payload.get("version") != VERSION:
        raise ValueError(f"Version de fichier non supportée: {payload.get('version')!r}")

    dims = payload["dimensions"]
    hyper = Hyperparameters(**payload["hyperparameters"])
    post = payload["posterior"]
    mean = np.array(post["mean"], dtype=float)
    covariance = np.array(post["covariance"], dtype=float)
    if mean.shape != (dims["dim"],) or covariance.shape != (dims["dim"], dims["dim"]):
        raise ValueError("Dimensions du postérieur incohérentes avec l'en-tête")

    posterior = ConditionalPosterior(
        mean=mean,
        covariance=covariance,
        lam=post["lambda"],
        converged=post["converged"],
        iterations=post["iterations"],
        grad_norm=post["grad_norm"],
        loglik=post["loglik"],
        objective=post["objective"],
        logdet_curvature=post["logdet_curvature"],
        free=np.array(post["free"], dtype=int),
    )
    t_upper = payload["t_upper"]
    return FitResult(
        v_star=payload["v_star"],
        posterior=posterior,
        constrained_index=payload["constrained_index"],
        hyper=hyper,
        grid=KnotGrid(t_upper, dims["K"]),
        bins=BinGrid(dims["J"], t_upper),
        n=dims["n"],
        p=dims["p"],
        q=dims["q"],
        incidence_labels=tuple(payload["incidence_labels"]),
        latency_labels=tuple(payload["latency_labels"]),
        boundary_hit=payload["boundary_hit"],
    )


def read_fit_file(path: Path) -> tuple[FitResult, dict[str, float]]:
    """Relit un fichier d'ajustement ; retourne aussi les moyennes de centrage."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return fit_from_dict(payload), payload.get("centering", {})
