# Utility functions, including logging setup, stage timing and checksums
import hashlib
import logging
import sys
import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Dict, Iterator, List


# --- Logging Setup ---
def setup_logging(level=logging.INFO):
    """Configures basic logging for the application."""
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        stream=sys.stderr,
    )
    # Optionally silence logs from dependencies if they are too verbose
    # logging.getLogger("numexpr").setLevel(logging.WARNING)


logger = logging.getLogger(__name__)


class StageTimings:
    """Nanosecond timers per learning stage (update, prediction, feature extraction)."""

    ONLINE_UPDATE = "online_update"
    OFFLINE_UPDATE = "offline_update"
    ONLINE_PREDICTION = "online_prediction"
    OFFLINE_PREDICTION = "offline_prediction"
    FEATURE_EXTRACTION = "feature_extraction"

    def __init__(self):
        self._samples: Dict[str, List[int]] = defaultdict(list)

    @contextmanager
    def measure(self, stage: str, count: int = 1) -> Iterator[None]:
        """Times the enclosed block and records its duration divided over `count` items."""
        start = time.perf_counter_ns()
        try:
            yield
        finally:
            elapsed = time.perf_counter_ns() - start
            if count > 0:
                self._samples[stage].append(elapsed // count)

    def record(self, stage: str, nanoseconds: int) -> None:
        self._samples[stage].append(int(nanoseconds))

    def count(self, stage: str) -> int:
        return len(self._samples.get(stage, []))

    def mean_ns(self, stage: str) -> float:
        samples = self._samples.get(stage)
        if not samples:
            return 0.0
        return sum(samples) / len(samples)

    def stages(self) -> List[str]:
        return sorted(self._samples)

    def summary(self) -> Dict[str, float]:
        """Mean seconds per stage, the unit of the learning-stage timing table."""
        return {stage: self.mean_ns(stage) / 1e9 for stage in self.stages()}


def sha256_hex(payload: bytes) -> str:
    """Hex SHA-256 digest used for model-file checksums."""
    return hashlib.sha256(payload).hexdigest()


def derive_seed(*parts: int) -> int:
    """Derives a reproducible 63-bit rng seed from integer parts (experiment fan-out)."""
    digest = hashlib.sha256(",".join(str(int(p)) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
