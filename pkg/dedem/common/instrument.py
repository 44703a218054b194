"""Contains code common to all modules

instrument: wraps solver entry points so that we can track their usage
"""

import logging
from functools import wraps

from statsd.defaults.env import statsd

from dedem.errors import DedemError

logger = logging.getLogger(__name__)


def instrument(prefix: str):
    """Count calls to the wrapped function, time them, and count the ones
    that end in a `DedemError` under `dedem.<prefix>.<func>.errors`.
    """

    def decorator(func):
        metric = f"dedem.{prefix}.{func.__name__}"

        @wraps(func)
        def wrapper(*args, **kwargs):
            statsd.incr(f"{metric}.count")
            try:
                with statsd.timer(f"{metric}.timer"):
                    return func(*args, **kwargs)
            except DedemError as exc:
                statsd.incr(f"{metric}.errors")
                logger.debug("%s failed: %s", metric, exc)
                raise

        return wrapper

    return decorator
