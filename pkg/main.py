"""Lancement direct depuis le dépôt : uv run python main.py fit --input ..."""

import sys

from lpsmc.cli import main

if __name__ == "__main__":
    sys.exit(main())
