import logging
import os
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_LEVELS = {
    "error": logging.ERROR,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

logger = logging.getLogger(__name__)


def env_int(name: str, default: Optional[int]) -> Optional[int]:
    """Non-negative integer from the environment; unset, malformed or negative values give ``default``."""
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring {name}='{raw}': not an integer, using {default}")
        return default
    if value < 0:
        logger.warning(f"Ignoring {name}={value}: must be >= 0, using {default}")
        return default
    return value


# Logging verbosity: error | info | debug
MOEF_LOG = os.getenv("MOEF_LOG", "info").strip().lower()

# Length of the per-engine diagnostics ring (0 disables it)
MOEF_HISTORY = env_int("MOEF_HISTORY", 256)

# Upper bound on per-expert worker threads; unset or 0 means one per expert
MOEF_WORKERS = env_int("MOEF_WORKERS", None)


def configure_logging(level_name: str = None) -> int:
    """Configure the root logger from MOEF_LOG (or an explicit level name)."""
    name = (level_name or MOEF_LOG).strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.INFO, format=LOG_FORMAT, force=True)
    if level is None:
        logger.warning(
            f"Unknown MOEF_LOG value '{name}', falling back to 'info'")
        level = logging.INFO
    return level
