import json
import logging
import traceback
from datetime import datetime
from pathlib import Path

from ..config import config

logger = logging.getLogger("neuralmvs.diagnostics")


class Diagnostics:
    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory or config.DIAGNOSTICS_DIR)

    def log_error(
        self, error: Exception, context: dict | None = None, directory: str | Path | None = None
    ) -> Path | None:
        """Write a JSON record of `error` and return its path; None if the dump itself failed."""
        target_dir = Path(directory) if directory is not None else self.directory
        try:
            error_type = type(error).__name__
            created_at = datetime.now()
            record = {
                "error_type": error_type,
                "message": str(error),
                "traceback": "".join(traceback.format_exception(type(error), error, error.__traceback__)),
                "context": context or {},
                "created_at": created_at.isoformat(),
            }
            target_dir.mkdir(parents=True, exist_ok=True)
            path = target_dir / f"{error_type}_{created_at:%Y%m%d_%H%M%S_%f}.json"
            path.write_text(json.dumps(record, indent=2, default=str))
            logger.error(f"Logged diagnostics to {path}: {error_type}: {error}")
            return path
        except Exception as e:
            logger.error(f"Failed to write diagnostics: {e}")
            logger.error(f"Original error: {error}")
            return None


diagnostics = Diagnostics()
