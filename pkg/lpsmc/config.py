import configparser
import dataclasses
import logging
import os
import shutil
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from lpsmc.laplace_inference import Hyperparameters

logger = logging.getLogger("lpsmc")

# Correspondance clé INI -> champ de Hyperparameters
_MODEL_KEYS = {
    "k": "num_basis",
    "j": "num_bins",
    "penalty_order": "penalty_order",
    "epsilon": "epsilon",
    "a_lambda": "a_lambda",
    "b_lambda": "b_lambda",
    "zeta": "zeta",
    "v0": "v0",
    "delta_v": "delta_v",
    "v_min": "v_min",
    "newton_tol": "newton_tol",
    "newton_max_iter": "newton_max_iter",
}


class ConfigReader:
    """Lecteur de configuration : chemins de sortie et hyperparamètres du modèle depuis config.ini"""

    def __init__(self, config_path: Path | None = None):
        """
        Initialise le lecteur de configuration.

        Args:
            config_path: Chemin vers le fichier config.ini.
                        Si None, utilise ~/.config/lpsmc/config.ini
        """
        self.config = configparser.ConfigParser()

        if config_path is None:
            config_path = Path.home() / ".config" / "lpsmc" / "config.ini"

        self.config_path = Path(config_path)
        self._load_config()

    def _load_config(self) -> None:
        """Charge le fichier de configuration, en copiant le modèle du paquet au premier usage"""
        if not self.config_path.exists():
            self.config_path.parent.mkdir(parents=True, exist_ok=True)

            package_config = Path(__file__).parent / "config.ini"

            if package_config.exists():
                shutil.copy2(package_config, self.config_path)
                logger.info(f"✓ Fichier de configuration créé: {self.config_path}")
            else:
                raise FileNotFoundError(
                    f"Le fichier de configuration n'a pas été trouvé: {self.config_path}\n"
                    f"Et le fichier template {package_config} est introuvable."
                )

        self.config.read(self.config_path, encoding="utf-8")

    def get_path(self, section: str, key: str) -> Path:
        """
        Récupère un chemin depuis la configuration.

        Args:
            section: Section du fichier INI (ex: 'paths')
            key: Clé dans la section (ex: 'output_dir')

        Returns:
            Path: Chemin absolu

        Raises:
            KeyError: Si la section ou la clé n'existe pas
        """
        if not self.config.has_section(section):
            raise KeyError(f"Section '{section}' introuvable dans {self.config_path}")

        if not self.config.has_option(section, key):
            raise KeyError(f"Option '{key}' introuvable dans la section '{section}'")

        return Path(self.config.get(section, key)).expanduser().resolve()

    def get(self, section: str, key: str, fallback: str | None = None) -> str | None:
        return self.config.get(section, key, fallback=fallback)

    def get_int(self, section: str, key: str, fallback: int | None = None) -> int | None:
        return self.config.getint(section, key, fallback=fallback)

    def hyperparameters(self, **overrides) -> "Hyperparameters":
        """
        Construit les hyperparamètres depuis la section [model].

        Les clés absentes gardent la valeur par défaut de la dataclass ; les
        `overrides` non None (options de ligne de commande) ont priorité.

        Returns:
            Hyperparameters: Hyperparamètres validés

        Raises:
            ValueError: Si une valeur n'est pas numérique ou viole les invariants
        """
        from lpsmc.laplace_inference import Hyperparameters

        types = {f.name: f.type for f in dataclasses.fields(Hyperparameters)}
        values = {}
        if self.config.has_section("model"):
            for key, raw in self.config.items("model"):
                field = _MODEL_KEYS.get(key.lower())
                if field is None:
                    logger.warning(f"⚠️  Clé inconnue ignorée dans [model]: {key}")
                    continue
                values[field] = int(raw) if types[field] in (int, "int") else float(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return Hyperparameters(**values)


# Instance globale pour faciliter l'utilisation
_config_reader: ConfigReader | None = None


def get_config(config_path: Path | None = None) -> ConfigReader:
    """
    Obtient l'instance globale du lecteur de configuration.

    Args:
        config_path: Chemin vers config.ini (utilisé uniquement au premier appel)

    Returns:
        ConfigReader: Instance du lecteur de configuration
    """
    global _config_reader
    if _config_reader is None:
        _config_reader = ConfigReader(config_path)
    return _config_reader


def reset_config() -> None:
    """Réinitialise l'instance globale (utile pour les tests)"""
    global _config_reader
    _config_reader = None


def get_threads() -> int:
    """
    Nombre maximal de processus pour les réplications de simulation.

    Lu dans la variable d'environnement `LPSMC_THREADS` ; à défaut, le nombre de
    processeurs. Une valeur invalide ou inférieure à 1 ramène à 1.

    Returns:
        int: Nombre de processus (>= 1)
    """
    raw = os.getenv("LPSMC_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        threads = int(raw)
    except ValueError:
        logger.warning(f"⚠️  LPSMC_THREADS invalide ({raw!r}), utilisation d'un seul processus")
        return 1
    return max(threads, 1)
