import logging
import time
from functools import wraps

from ..exceptions import NotApplicableError


def timed(fn):
    """Log the wall-clock duration of ``fn``."""
    @wraps(fn)
    def decorator(*args, **kwargs):
        logger = logging.getLogger(fn.__module__)
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            elapsed = time.perf_counter() - start
            logger.info(f"{fn.__name__} finished in {elapsed:.3f} s", extra={'elapsed': elapsed})
    return decorator


def refuses_3d(fn):
    """Guard for identities that only hold for two-dimensional fields."""
    @wraps(fn)
    def decorator(field, *args, **kwargs):
        if field.grid.dim != 2:
            raise NotApplicableError(f"{fn.__name__} is a two-dimensional identity, got {field.grid!r}")
        return fn(field, *args, **kwargs)
    return decorator
