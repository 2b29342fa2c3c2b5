import logging
import os
from enum import StrEnum

LOG_FORMAT_DEBUG = (
    "%(asctime)s:%(levelname)s:%(message)s:%(filename)s:%(funcName)s:%(lineno)d"
)


class LogLevel(StrEnum):
    debug = "DEBUG"
    info = "INFO"
    warning = "WARNING"
    error = "ERROR"
    critical = "CRITICAL"


# * package-wide logger, handlers are attached by configure_logging()
LOGGER = logging.getLogger("smc_stock")


def configure_logging(level: LogLevel | str = LogLevel.info, log_dir: str | None = "logs"):
    """
    * set up console + file logging for a cli run
    """
    handlers: list[logging.Handler] = [logging.StreamHandler()]  # * console
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.FileHandler(os.path.join(log_dir, "smc_stock.log")))

    for handler in list(LOGGER.handlers):
        LOGGER.removeHandler(handler)
    formatter = logging.Formatter(LOG_FORMAT_DEBUG)
    for handler in handlers:
        handler.setFormatter(formatter)
        LOGGER.addHandler(handler)

    LOGGER.setLevel(LogLevel(str(level).upper()).value)
    LOGGER.propagate = False
