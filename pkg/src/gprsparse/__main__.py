"""Allow ``python -m gprsparse``."""
from .cli import main

main()
