"""
Debugging utilities for thermoloop.
"""

import logging
import time
from typing import Dict
from typing import Optional

logger = logging.getLogger(__name__)


class DebugTimer:
    """
    Context manager timing one stage of a command.

    Usage:
        timings = {}
        with DebugTimer("simulate", timings):
            # code to time

    Seconds accumulate in ``sink[name]`` so repeated blocks add up.
    """

    def __init__(self, name: str, sink: Optional[Dict[str, float]] = None):
        self.name = name
        self.sink = sink
        self.elapsed = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed = time.perf_counter() - self.start
        if self.sink is not None:
            self.sink[self.name] = self.sink.get(self.name, 0.0) + self.elapsed
        logger.debug("%s took %.4f seconds", self.name, self.elapsed)
