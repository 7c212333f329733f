"""Interface en ligne de commande : fit, intervals, simulate, km"""

import argparse
import logging
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

from lpsmc.config import ConfigReader, get_threads
from lpsmc.credible_intervals import (
    CredibleInterval,
    ci_baseline_survival,
    ci_incidence,
    ci_latency_survival,
    ci_latent,
    survival_curve,
    survival_quantile,
)
from lpsmc.dataset import ColumnMapping, center_columns, frame_to_dataset, read_survival_frame
from lpsmc.errors import (
    ConstrainedCoordinateError,
    ConvergenceError,
    DatasetError,
    NumericError,
    StudyError,
    TransformSingularityError,
    UsageError,
)
from lpsmc.fit_file import read_fit_file, write_fit_file
from lpsmc.kaplan_meier import kaplan_meier
from lpsmc.laplace_inference import FitResult, Hyperparameters, fit
from lpsmc.simulation import coverage_survival, get_scenario, run_study, scenario_rates
from lpsmc.tables import coefficient_table, format_coefficients_text, write_table

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_cli_handlers: list[logging.Handler] = []


def setup_logger(
    log_file: Path | None, verbose: int = 0, additional_log_file: Path | None = None
) -> logging.Logger:
    """
    Configure le logger avec les niveaux de verbosité.

    Args:
        log_file: Chemin vers le fichier de log principal (None : console seule)
        verbose: Niveau de verbosité (0=WARNING, 1=INFO, 2=DEBUG)
        additional_log_file: Chemin optionnel vers un fichier de log supplémentaire

    Returns:
        Logger configuré
    """
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose >= 1:
        level = logging.INFO
    else:
        level = logging.WARNING

    logger = logging.getLogger("lpsmc")
    # un appel par commande : les handlers du précédent appel sont retirés
    while _cli_handlers:
        handler = _cli_handlers.pop()
        handler.close()
        logger.removeHandler(handler)
    logger.setLevel(logging.DEBUG if log_file else level)

    formatter = logging.Formatter(
        "%(asctime)s - %(levelname)s - %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
    )

    for path in (log_file, additional_log_file):
        if path is None:
            continue
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(path, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)  # Tout dans le fichier
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
        _cli_handlers.append(file_handler)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)
    _cli_handlers.append(console_handler)

    return logger


def _split(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    return tuple(part.strip() for part in value.split(",") if part.strip())


@dataclass
class RunConfig:
    """Paramètres résolus d'une commande (ligne de commande > config.ini > défauts)."""

    command: str
    out_dir: Path
    input: Path | None = None
    mapping: ColumnMapping | None = None
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    alphas: tuple[float, ...] = (0.05,)
    seed: int = 0
    center: tuple[str, ...] = ()
    t_upper: float | None = None
    constrain_last_theta: bool = True
    include_spline: bool = False
    profile_grid: np.ndarray | None = None
    delimiter: str = ","
    rejected_out: Path | None = None

    def __post_init__(self):
        for alpha in self.alphas:
            if not 0.0 < alpha < 1.0:
                raise UsageError(f"alpha doit être dans (0, 1), reçu {alpha}")

    @classmethod
    def from_args(cls, args: argparse.Namespace, config: ConfigReader) -> "RunConfig":
        out_dir = args.out_dir or config.get_path("paths", "output_dir")
        hyper = config.hyperparameters(
            num_basis=getattr(args, "K", None),
            num_bins=getattr(args, "J", None),
            penalty_order=getattr(args, "penalty_order", None),
            delta_v=getattr(args, "delta_v", None),
            a_lambda=getattr(args, "a_lambda", None),
            b_lambda=getattr(args, "b_lambda", None),
            zeta=getattr(args, "zeta", None),
        )
        mapping = None
        if getattr(args, "time_col", None):
            mapping = ColumnMapping(
                time=args.time_col,
                status=args.status_col,
                incidence=_split(getattr(args, "incidence_cols", None)),
                latency=_split(getattr(args, "latency_cols", None)),
            )
        seed = args.seed if getattr(args, "seed", None) is not None else config.get_int(
            "simulation", "base_seed", fallback=0
        )
        return cls(
            command=args.command,
            out_dir=Path(out_dir),
            input=getattr(args, "input", None),
            mapping=mapping,
            hyper=hyper,
            alphas=tuple(getattr(args, "alpha", None) or (0.05,)),
            seed=seed,
            center=_split(getattr(args, "center", None)),
            t_upper=getattr(args, "t_upper", None),
            constrain_last_theta=getattr(args, "constrain_last_theta", True),
            include_spline=getattr(args, "include_spline", False),
            profile_grid=_parse_grid(getattr(args, "profile_grid", None)),
            delimiter=getattr(args, "delimiter", ","),
            rejected_out=getattr(args, "rejected_out", None),
        )


def _parse_grid(spec: str | None) -> np.ndarray | None:
    """"start:stop:step" -> grille inclusive."""
    if not spec:
        return None
    try:
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError as e:
        raise UsageError(f"Grille invalide {spec!r} (attendu start:stop:step)") from e
    if step <= 0 or stop <= start:
        raise UsageError(f"Grille invalide {spec!r}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def cmd_fit(config: RunConfig, logger: logging.Logger) -> dict[str, Path]:
    """Ajuste le modèle sur un CSV et écrit tables, courbes, profil et fichier JSON."""
    if config.input is None or config.mapping is None:
        raise UsageError("fit demande --input, --time-col et --status-col")
    frame = read_survival_frame(
        config.input, config.mapping, config.delimiter, config.rejected_out, logger
    )
    unknown = [c for c in config.center if c not in config.mapping.covariates]
    if unknown:
        raise UsageError(f"--center: colonnes absentes des covariables: {', '.join(unknown)}")
    centering = center_columns(frame, config.center)
    for column, mean in centering.items():
        logger.info(f"Covariable '{column}' centrée (moyenne {mean:.4g})")
    data = frame_to_dataset(frame, config.mapping)

    result = fit(
        data,
        config.hyper,
        constrain_last_theta=config.constrain_last_theta,
        profile_grid=config.profile_grid,
        t_upper=config.t_upper,
        logger=logger,
    )

    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    levels = tuple(1.0 - a for a in config.alphas)
    table = coefficient_table(result, levels, include_spline=config.include_spline)
    paths = {"coefficients": write_table(table, out / "coefficients.csv", "coefficients")}
    text_path = out / "coefficients.txt"
    text_path.write_text(format_coefficients_text(table), encoding="utf-8")
    paths["coefficients_text"] = text_path

    alpha = config.alphas[0]
    paths["baseline"] = write_table(
        survival_curve(result, alpha), out / "baseline_survival.csv", "curve"
    )
    if data.q:
        z_mean = data.Z.mean(axis=0)
        paths["latency"] = write_table(
            survival_curve(result, alpha, z_row=z_mean), out / "latency_survival.csv", "curve"
        )
    if result.v_grid_profile is not None:
        paths["v_profile"] = write_table(result.v_grid_profile, out / "v_profile.csv", "v_profile")
    paths["fit"] = write_fit_file(result, out / "fit.json", centering)

    logger.info(f"✅ Ajustement écrit dans {out}")
    return paths


# ---------------------------------------------------------------------------
# intervals
# ---------------------------------------------------------------------------

_TARGET_KINDS = ("latent", "incidence", "cure", "S0", "Su")
_ARG = re.compile(r"(\w+)=(\([^)]*\)|\S+)")


def _tuple(text: str) -> np.ndarray:
    body = text.strip()
    if not (body.startswith("(") and body.endswith(")")):
        raise UsageError(f"Profil attendu entre parenthèses: {text!r}")
    try:
        return np.array([float(x) for x in body[1:-1].split(",") if x.strip()])
    except ValueError as e:
        raise UsageError(f"Profil non numérique: {text!r}") from e


def parse_target(target: str) -> tuple[str, dict[str, str]]:
    """
    Analyse une cible : "latent h=beta1", "incidence x=(1,0,0.5)", "cure x=(1,80)",
    "S0 t=5" ou "S0 q=0.5", "Su z=(0,0.4) t=3" ou "Su z=(0,0.4) q=0.5".
    """
    parts = target.strip().split(maxsplit=1)
    if not parts or parts[0] not in _TARGET_KINDS:
        raise UsageError(f"Cible inconnue: {target!r} ({', '.join(_TARGET_KINDS)})")
    kind = parts[0]
    rest = parts[1] if len(parts) > 1 else ""
    args = dict(_ARG.findall(rest))
    leftover = _ARG.sub("", rest).strip()
    if leftover:
        raise UsageError(f"Cible mal formée: {target!r}")

    required = {
        "latent": {"h"},
        "incidence": {"x"},
        "cure": {"x"},
        "S0": set(),
        "Su": {"z"},
    }[kind]
    if not required <= args.keys():
        raise UsageError(f"Cible {target!r}: argument(s) manquant(s) {sorted(required - args.keys())}")
    if kind in ("S0", "Su") and len({"t", "q"} & args.keys()) != 1:
        raise UsageError(f"Cible {target!r}: préciser exactement un de t= ou q=")
    return kind, args


def _center_profile(values: np.ndarray, labels, centering, offset: int) -> np.ndarray:
    values = values.copy()
    for i, label in enumerate(labels):
        if label in centering:
            values[i + offset] -= centering[label]
    return values


def _degenerate_incidence(result: FitResult, x: np.ndarray, alpha: float, which: str):
    """Probabilité numériquement égale à 0 ou 1 : intervalle réduit à ce point."""
    p = float(expit(x @ result.beta))
    value = float(round(p if which == "uncured" else 1.0 - p))
    return CredibleInterval(value, value, value, 1.0 - alpha, "degenerate")


def evaluate_target(
    result: FitResult, target: str, alpha: float, centering: dict[str, float] | None = None
) -> dict:
    """Évalue une cible et retourne une ligne de la table des intervalles."""
    centering = centering or {}
    kind, args = parse_target(target)
    row = {"target": target, "time": np.nan, "note": ""}

    if kind == "latent":
        h = args["h"]
        interval = ci_latent(result, int(h) if h.isdigit() else h, alpha)
    elif kind in ("incidence", "cure"):
        x = _tuple(args["x"])
        if x.shape != (result.p + 1,):
            raise UsageError(f"x doit avoir {result.p + 1} composantes (intercept compris)")
        x = _center_profile(x, result.incidence_labels, centering, offset=1)
        which = "uncured" if kind == "incidence" else "cured"
        try:
            interval = ci_incidence(result, x, alpha, target=which)
        except TransformSingularityError:
            interval = _degenerate_incidence(result, x, alpha, which)
            row["note"] = "intervalle dégénéré"
    else:
        z = None
        if kind == "Su":
            z = _tuple(args["z"])
            if z.shape != (result.q,):
                raise UsageError(f"z doit avoir {result.q} composantes")
            z = _center_profile(z, result.latency_labels, centering, offset=0)
        if "q" in args:
            t, attained = survival_quantile(result, float(args["q"]), z_row=z)
            if not attained:
                row["note"] = "quantile non atteint"
        else:
            t = float(args["t"])
        row["time"] = t
        interval = (
            ci_baseline_survival(result, t, alpha)
            if z is None
            else ci_latency_survival(result, z, t, alpha)
        )
    row.update(
        estimate=interval.point,
        lower=interval.lower,
        upper=interval.upper,
        level=interval.level,
        transform=interval.transform,
    )
    return row


def cmd_intervals(
    fit_file: Path, targets: list[str], alphas, out_path: Path, logger: logging.Logger
) -> Path:
    """Évalue les cibles demandées sur un ajustement enregistré et écrit un CSV."""
    if not targets:
        raise UsageError("Aucune cible fournie (--target)")
    result, centering = read_fit_file(fit_file)
    rows = [
        evaluate_target(result, target, alpha, centering)
        for target in targets
        for alpha in alphas
    ]
    table = pd.DataFrame(
        rows,
        columns=["target", "time", "estimate", "lower", "upper", "level", "transform", "note"],
    )
    path = write_table(table, out_path, "intervals")
    logger.info(f"✅ {len(rows)} intervalle(s) écrit(s) dans {path}")
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(
    config: RunConfig,
    scenario_name: str,
    n: int,
    S: int,
    logger: logging.Logger,
    workers: int | None = None,
    dump_curves: bool = False,
    censoring: str | None = None,
    coverage: bool = False,
    coverage_K: int = 30,
    rates_draws: int = 0,
) -> dict[str, Path]:
    """Étude de simulation et export de ses tables."""
    changes = {"n": n}
    if censoring:
        changes["censor_truncation"] = censoring
    try:
        scenario = get_scenario(scenario_name, **changes)
    except KeyError as e:
        raise UsageError(str(e.args[0])) from e

    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    if rates_draws:
        rates = scenario_rates(scenario, rates_draws, seed=config.seed, sample_size=n)
        paths["rates"] = out / "rates.csv"
        rates.rename_axis("rate").reset_index(name="percent").to_csv(paths["rates"], index=False)

    summary = run_study(
        scenario,
        n,
        S,
        config.seed,
        hyper=config.hyper,
        workers=workers,
        dump_curves=dump_curves,
        logger=logger,
    )
    paths["summary"] = out / "study_summary.csv"
    summary.to_csv(paths["summary"])
    paths["summary_text"] = out / "study_summary.txt"
    paths["summary_text"].write_text(summary.to_text(), encoding="utf-8")
    paths["replications"] = out / "replications.csv"
    summary.replications.to_csv(paths["replications"], index=False)
    paths["ase"] = out / "ase.csv"
    summary.replications[["replication", "ase"]].to_csv(paths["ase"], index=False)

    if summary.curves is not None:
        curve_dir = out / "curves"
        curve_dir.mkdir(exist_ok=True)
        for column in summary.curves.columns.drop("t"):
            summary.curves[["t", column]].rename(columns={column: "estimate"}).to_csv(
                curve_dir / f"baseline_{column}.csv", index=False
            )
        paths["curves"] = curve_dir
        paths["median_curve"] = out / "median_curve.csv"
        summary.median_curve().to_csv(paths["median_curve"], index=False)

    if coverage:
        table = coverage_survival(
            scenario,
            n,
            S,
            K_override=coverage_K,
            base_seed=config.seed,
            hyper=config.hyper,
            workers=workers,
            logger=logger,
        )
        paths["coverage"] = out / "coverage_survival.csv"
        table.to_csv(paths["coverage"], index=False)

    logger.info(f"✅ Étude écrite dans {out}")
    return paths


# ---------------------------------------------------------------------------
# km
# ---------------------------------------------------------------------------


def cmd_km(config: RunConfig, logger: logging.Logger) -> Path:
    """Courbe de Kaplan-Meier (table en escalier) et hauteur du plateau."""
    if config.input is None or config.mapping is None:
        raise UsageError("km demande --input, --time-col et --status-col")
    mapping = ColumnMapping(config.mapping.time, config.mapping.status)
    frame = read_survival_frame(
        config.input, mapping, config.delimiter, config.rejected_out, logger, require_event=False
    )
    curve = kaplan_meier(frame[mapping.time], frame[mapping.status], logger=logger)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    path = write_table(curve.to_frame(), config.out_dir / "kaplan_meier.csv", "kaplan_meier")
    logger.info(
        f"Plateau de Kaplan-Meier: hauteur {curve.plateau_height:.3f}, "
        f"{100 * curve.plateau_share():.1f}% des observations"
    )
    return path


# ---------------------------------------------------------------------------
# Analyse des arguments
# ---------------------------------------------------------------------------


def _add_model_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--K", type=int, help="Nombre de B-splines cubiques")
    parser.add_argument("--J", type=int, help="Nombre d'intervalles de Riemann")
    parser.add_argument("--penalty-order", type=int, help="Ordre r de la pénalité")
    parser.add_argument("--delta-v", type=float, help="Pas de l'encadrement de v = log(lambda)")
    parser.add_argument("--a-lambda", type=float, help="Paramètre a du prior Gamma sur lambda")
    parser.add_argument("--b-lambda", type=float, help="Paramètre b du prior Gamma sur lambda")
    parser.add_argument("--zeta", type=float, help="Précision du prior des régressions")


def _add_data_options(parser: argparse.ArgumentParser, covariates: bool = True) -> None:
    parser.add_argument("--input", type=Path, required=True, help="Fichier CSV d'entrée")
    parser.add_argument("--time-col", required=True, help="Colonne des temps de suivi")
    parser.add_argument("--status-col", required=True, help="Colonne de l'indicateur d'événement")
    if covariates:
        parser.add_argument("--incidence-cols", help="Covariables d'incidence (séparées par ,)")
        parser.add_argument("--latency-cols", help="Covariables de latence (séparées par ,)")
    parser.add_argument("--delimiter", default=",", help="Délimiteur du CSV (défaut ',')")
    parser.add_argument("--rejected-out", type=Path, help="CSV des lignes écartées")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpsmc",
        description="Modèle de guérison par mélange avec P-splines laplaciennes",
    )
    parser.add_argument("--config", type=Path, help="Fichier config.ini")
    parser.add_argument("--out-dir", type=Path, help="Répertoire de sortie")
    parser.add_argument("--log-file", type=Path, help="Fichier de log")
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Augmenter la verbosité (utiliser -v pour INFO, -vv pour DEBUG)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="Ajuster le modèle sur un CSV")
    _add_data_options(p_fit)
    _add_model_options(p_fit)
    p_fit.add_argument(
        "--alpha", type=float, action="append", help="Niveau alpha (répétable, défaut 0.05)"
    )
    p_fit.add_argument("--center", help="Covariables continues à centrer (séparées par ,)")
    p_fit.add_argument("--t-upper", type=float, help="Borne t_u (défaut: plus grand temps)")
    p_fit.add_argument(
        "--constrain-last-theta",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="Fixer theta_K = 1 dans l'ajustement final",
    )
    p_fit.add_argument(
        "--include-spline", action="store_true", help="Inclure les theta dans la table"
    )
    p_fit.add_argument("--profile-grid", help="Profil de v sur start:stop:step")
    p_fit.add_argument("--seed", type=int, help="Graine (sans effet sur l'ajustement)")

    p_int = sub.add_parser("intervals", help="Intervalles de crédibilité depuis fit.json")
    p_int.add_argument("--fit-file", type=Path, required=True, help="Fichier fit.json")
    p_int.add_argument(
        "--target", action="append", default=[], help='Cible, ex: "cure x=(1,80)" (répétable)'
    )
    p_int.add_argument("--targets-file", type=Path, help="Une cible par ligne")
    p_int.add_argument("--alpha", type=float, action="append", help="Niveau alpha (répétable)")
    p_int.add_argument("--out", type=Path, help="CSV de sortie (défaut: intervals.csv)")

    p_sim = sub.add_parser("simulate", help="Étude de simulation")
    p_sim.add_argument("--scenario", default="scenario1", help="scenario1 ou scenario2")
    p_sim.add_argument("--n", type=int, default=300, help="Taille d'échantillon")
    p_sim.add_argument("--S", type=int, default=100, help="Nombre de réplications")
    p_sim.add_argument("--seed", type=int, help="Graine de base")
    p_sim.add_argument("--workers", type=int, help="Processus (défaut: LPSMC_THREADS)")
    p_sim.add_argument("--dump-curves", action="store_true", help="Écrire chaque courbe S0")
    p_sim.add_argument(
        "--censoring", choices=("cap", "condition"), help="Troncature de la censure à tau1"
    )
    p_sim.add_argument(
        "--coverage", action="store_true", help="Couverture des intervalles de S0 et S_u"
    )
    p_sim.add_argument("--coverage-K", type=int, default=30, help="K pour la couverture")
    p_sim.add_argument(
        "--rates-draws", type=int, default=0, help="Taux de guérison/censure/plateau sur N tirages"
    )
    _add_model_options(p_sim)

    p_km = sub.add_parser("km", help="Courbe de Kaplan-Meier")
    _add_data_options(p_km, covariates=False)
    return parser


def _log_paths(config: ConfigReader, command: str, explicit: Path | None) -> Path | None:
    if explicit is not None:
        return explicit
    log_dir = config.get_path("paths", "log_dir")
    date_iso = datetime.now().strftime("%Y-%m-%d")
    return log_dir / f"lpsmc-{command}-{date_iso}.log"


def run(args: argparse.Namespace) -> int:
    config = ConfigReader(args.config)
    logger = setup_logger(_log_paths(config, args.command, args.log_file), args.verbose)
    logger.debug(f"Niveau de verbosité: {args.verbose}")
    run_config = RunConfig.from_args(args, config)

    if args.command == "fit":
        cmd_fit(run_config, logger)
    elif args.command == "intervals":
        targets = list(args.target)
        if args.targets_file:
            lines = args.targets_file.read_text(encoding="utf-8").splitlines()
            targets.extend(line.strip() for line in lines if line.strip())
        out = args.out or run_config.out_dir / "intervals.csv"
        cmd_intervals(args.fit_file, targets, run_config.alphas, out, logger)
    elif args.command == "simulate":
        workers = args.workers if args.workers is not None else get_threads()
        cmd_simulate(
            run_config,
            args.scenario,
            args.n,
            args.S,
            logger,
            workers=workers,
            dump_curves=args.dump_curves,
            censoring=args.censoring,
            coverage=args.coverage,
            coverage_K=args.coverage_K,
            rates_draws=args.rates_draws,
        )
    else:
        cmd_km(run_config, logger)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """
    Point d'entrée.

    Codes de sortie : 0 succès, 2 erreur d'usage ou de configuration,
    3 erreur de données, 4 échec numérique.
    """
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (UsageError, ConstrainedCoordinateError) as e:
        logging.getLogger("lpsmc").error(f"Erreur d'usage: {e}")
        return EXIT_USAGE
    except (DatasetError, FileNotFoundError) as e:
        logging.getLogger("lpsmc").error(f"Erreur de données: {e}")
        return EXIT_DATA
    except (NumericError, ConvergenceError, StudyError, TransformSingularityError) as e:
        logging.getLogger("lpsmc").error(f"Échec numérique: {e}")
        return EXIT_NUMERIC
    except (KeyError, ValueError) as e:
        logging.getLogger("lpsmc").error(f"Erreur de configuration: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
