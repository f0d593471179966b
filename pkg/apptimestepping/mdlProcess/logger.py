import logging
import os


def _log_dir():
    """Log directory from the NSE3D settings block, or ./logs outside Django."""
    try:
        from django.conf import settings
        if settings.configured:
            return str(settings.NSE3D.get('LOG_DIR', 'logs'))
    except (ImportError, AttributeError):
        pass
    return "logs"


class Logger:
    _logger = None

    @staticmethod
    def get_logger():
        """Returns a single shared logger instance."""
        if Logger._logger:
            return Logger._logger

        logger = logging.getLogger("nse3d")
        logger.setLevel(logging.DEBUG)
        logger.propagate = False

        # Create logs directory if not exists
        log_dir = _log_dir()
        os.makedirs(log_dir, exist_ok=True)

        log_file = os.path.join(log_dir, "application.log")
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

        # File handler
        file_handler = logging.FileHandler(log_file, mode='a')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)

        # Console handler (stderr, stdout is reserved for command output)
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(formatter)

        logger.addHandler(file_handler)
        logger.addHandler(console_handler)

        Logger._logger = logger

        return logger
