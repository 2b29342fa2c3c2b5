import time
from contextlib import contextmanager
from typing import Dict, Iterator, List

from app.core.exceptions import StageError
from app.utils.logger import LOGGER


class StageManager:
    """
    * runs named pipeline stages, times them and wraps their failures
    """

    def __init__(self):
        self.stage_seconds: Dict[str, float] = {}
        self.completed: List[str] = []

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """
        * time one stage; any failure is re-raised as StageError(name, cause)
        """
        LOGGER.info(f"[Start] stage {name}")
        started = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            elapsed = time.perf_counter() - started
            self.stage_seconds[name] = elapsed
            LOGGER.exception(f"[Failed] stage {name} after {elapsed:.2f}s: {e}")
            raise StageError(name, e) from e

        elapsed = time.perf_counter() - started
        self.stage_seconds[name] = elapsed
        self.completed.append(name)
        LOGGER.info(f"[Done] stage {name} in {elapsed:.2f}s")

    @property
    def total_seconds(self) -> float:
        return sum(self.stage_seconds.values())
