"""
Schema version checks for scenario files
Versions are compared with packaging.version; files written for another
major version are rejected.
"""
import logging

from packaging import version

from src.config import SCHEMA_VERSION
from src.core.errors import ConfigError

logger = logging.getLogger(__name__)


def parse_schema_version(text: str) -> version.Version:
    try:
        return version.parse(text.strip().lstrip("v"))
    except version.InvalidVersion as e:
        raise ConfigError(f"invalid schema_version {text!r}") from e


def check_schema_version(text: str, supported: str = SCHEMA_VERSION) -> version.Version:
    """
    Validate a file's schema_version against the supported one

    Args:
        text: Version string found in the file
        supported: Version this build reads and writes

    Returns:
        The parsed file version

    Raises:
        ConfigError: Unparseable version or a different major version
    """
    found = parse_schema_version(text)
    current = version.parse(supported)
    if found.major != current.major:
        raise ConfigError(f"schema_version {found} is not supported (this build reads {current.major}.x)")
    if found > current:
        logger.warning("scenario written for schema %s, newer than %s; reading it anyway", found, current)
    return found
