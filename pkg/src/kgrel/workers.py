import os

THREADS_ENV = "KGREL_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Number of worker threads: ``requested`` (default 1), capped by $KGREL_THREADS."""
    n = 1 if requested is None else int(requested)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap))) if requested is not None else max(1, int(cap))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)
