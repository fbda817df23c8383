"""
Logging Utility - Better than print() statements
All solver loggers hang below the "ailfem" root so one configuration covers them.
"""
import logging
import config

ROOT_LOGGER = "ailfem"


def setup_logger(name: str = ROOT_LOGGER) -> logging.Logger:
    """Setup centralized logger and return the named child"""
    root = logging.getLogger(ROOT_LOGGER)

    if not root.handlers:
        root.setLevel(getattr(logging, config.LOG_LEVEL))

        # Console handler
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)

        # File handler (opened on first record)
        file_handler = logging.FileHandler(config.LOG_FILE, delay=True)
        file_handler.setLevel(logging.DEBUG)

        # Formatter
        formatter = logging.Formatter(
            '%(asctime)s | %(levelname)-8s | %(name)s | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        console_handler.setFormatter(formatter)
        file_handler.setFormatter(formatter)

        root.addHandler(console_handler)
        root.addHandler(file_handler)

    if name == ROOT_LOGGER or name.startswith(ROOT_LOGGER + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")
