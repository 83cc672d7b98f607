import logging
import os
import shutil

from .models import RunConfig
from .storage import PATH_HEADER_SIZE, PATH_MAGIC

logger = logging.getLogger(__name__)

# below this much free space large path dumps may not fit
LOW_DISK_BYTES = 100 * 2**20


def check_local_storage(path: str) -> None:
    """The artifact folder exists (created on demand) and round-trips binary data.

    A scratch file the size of a path-dump header is written, read back and removed.
    """
    if not path:
        raise RuntimeError("output_dir must be set.")
    if os.path.exists(path) and not os.path.isdir(path):
        raise RuntimeError(f"Failed to create output folder at '{path}': not a directory.")
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise RuntimeError(f"Failed to create output folder at '{path}': {e}") from e

    scratch = os.path.join(path, ".skewwalk_scratch.bin")
    payload = PATH_MAGIC + bytes(PATH_HEADER_SIZE - len(PATH_MAGIC))
    try:
        with open(scratch, "wb") as f:
            f.write(payload)
        with open(scratch, "rb") as f:
            echoed = f.read()
    except OSError as e:
        raise RuntimeError(f"Cannot write path dumps to '{path}': {e}") from e
    finally:
        if os.path.exists(scratch):
            os.remove(scratch)
    if echoed != payload:
        raise RuntimeError(f"Binary data written to '{path}' did not read back intact.")

    free = shutil.disk_usage(path).free
    if free < LOW_DISK_BYTES:
        logger.warning("Only %d MiB free under %s.", free // 2**20, path)


def check_workers(workers: int) -> None:
    """Worker count must be positive; more workers than CPUs only logs a warning."""
    if workers < 1:
        raise RuntimeError(f"worker_count must be positive, got {workers}.")
    available = os.cpu_count() or 1
    if workers > available:
        logger.warning("worker_count=%d exceeds the %d available CPUs.", workers, available)


def validate_environment(cfg: RunConfig) -> None:
    """Run all environment validations. Raises on first failure.

    Set SKEWWALK_VALIDATION_SKIP=true to bypass in development environments.
    """
    if os.getenv("SKEWWALK_VALIDATION_SKIP", "false").lower() == "true":
        logger.warning("SKEWWALK_VALIDATION_SKIP=true: Skipping environment checks.")
        return

    check_local_storage(cfg.output_dir)
    check_workers(cfg.worker_count)

    logger.info("Environment validation succeeded.")
