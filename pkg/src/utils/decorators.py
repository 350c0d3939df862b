import functools
import logging
import time

logger = logging.getLogger("neuralmvs.utils")


def count_calls(func):
    """
    Decorator that counts invocations of `func`.

    The count lives on the wrapper (`wrapper.calls`) and is shared by every
    instance when `func` is a method; `wrapper.reset()` zeroes it.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        wrapper.calls += 1
        return func(*args, **kwargs)

    def reset():
        wrapper.calls = 0

    wrapper.calls = 0
    wrapper.reset = reset
    return wrapper


def log_timing(label: str | None = None, level: int = logging.DEBUG):
    """
    Decorator that logs the wall-clock duration of each call.

    Args:
        label: Name used in the log line (defaults to the function name).
        level: Logging level of the timing message.
    """
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                elapsed = time.perf_counter() - start
                logger.log(level, f"{label or func.__name__} took {elapsed:.3f}s")
        return wrapper
    return decorator
