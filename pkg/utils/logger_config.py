import logging
import os
import re
from typing import Optional, Tuple

from dotenv import load_dotenv

load_dotenv()

RUN_TAG_PATTERN = re.compile(r"PTG_r(\d+)_s(\d+)_([a-z_]+)")


def run_tag(restart: int, seed: int, stage: str) -> str:
    """Construye la etiqueta de corrida que el formateador sabe extraer. Formato: PTG_r<restart>_s<seed>_<stage>."""
    return f"PTG_r{restart:02d}_s{seed}_{stage}"


class RunLoggerFormatter(logging.Formatter):
    """Formateador que extrae reinicio, semilla y etapa de la etiqueta de corrida del mensaje."""

    def format(self, record):
        parsed = self._extract_run_tag(record.getMessage())
        if parsed:
            restart, seed, stage = parsed
            record.restart = f"r{restart}"
            record.seed = f"s{seed}"
            record.stage = stage
        else:
            record.restart = "NO_RUN"
            record.seed = "-"
            record.stage = "-"
        return super().format(record)

    def _extract_run_tag(self, message: str) -> Optional[Tuple[str, str, str]]:
        """Extrae (reinicio, semilla, etapa) del mensaje si contiene una etiqueta."""
        match = RUN_TAG_PATTERN.search(message)
        if match:
            return match.group(1), match.group(2), match.group(3)
        return None


def setup_structured_logging(level: Optional[str] = None):
    """Configura logging estructurado para toda la aplicación."""
    format_template = (
        "%(asctime)s | %(stage)s | %(restart)s | %(seed)s | "
        "%(levelname)-8s | %(name)s:%(lineno)d | %(message)s"
    )

    formatter = RunLoggerFormatter(format_template)
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    level_name = (level or os.getenv("PTG_LOG_LEVEL", "INFO")).upper()
    root_logger.setLevel(getattr(logging, level_name, logging.INFO))

    # Limpiar handlers existentes
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    root_logger.addHandler(console_handler)
    return root_logger
