"""Loggers nommés du paquet"""

import logging


def get_logger(name: str = "lpsmc", logger: logging.Logger | None = None) -> logging.Logger:
    """
    Retourne `logger` s'il est fourni, sinon le logger nommé `name`.

    Un handler console de niveau INFO est ajouté au logger par défaut lorsqu'aucun
    handler n'est configuré sur lui ni sur ses parents.

    Args:
        name: Nom hiérarchique (ex: "lpsmc.inference")
        logger: Logger fourni par l'appelant

    Returns:
        Logger prêt à l'emploi
    """
    if logger is not None:
        return logger
    logger = logging.getLogger(name)
    if not logger.hasHandlers():
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s - %(message)s"))
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)
    return logger
