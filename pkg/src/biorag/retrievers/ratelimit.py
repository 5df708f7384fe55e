from __future__ import annotations

import threading
import time
from typing import Callable

from ..errors import RateLimited


class TokenBucket:
    """Thread-safe token bucket. ``acquire`` sleeps for a token unless the wait exceeds ``max_wait``."""

    def __init__(
        self,
        rate: float = 3.0,
        capacity: float | None = None,
        endpoint: str = "",
        max_wait: float = 5.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else rate
        self.endpoint = endpoint
        self.max_wait = max_wait
        self._clock = clock
        self._sleep = sleep
        self._tokens = self.capacity
        self._stamp = clock()
        self._lock = threading.Lock()

    def _reserve(self) -> float:
        with self._lock:
            now = self._clock()
            self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
            self._stamp = now
            wait = max(0.0, (1.0 - self._tokens) / self.rate)
            if wait > self.max_wait:
                raise RateLimited(self.endpoint, wait)
            self._tokens -= 1.0
            return wait

    def acquire(self) -> None:
        wait = self._reserve()
        if wait > 0:
            self._sleep(wait)


_shared: dict[str, TokenBucket] = {}
_shared_lock = threading.Lock()


def limiter_for(endpoint: str, rate: float = 3.0) -> TokenBucket:
    """One bucket per endpoint, shared by every client in the process."""
    with _shared_lock:
        bucket = _shared.get(endpoint)
        if bucket is None:
            bucket = _shared[endpoint] = TokenBucket(rate=rate, endpoint=endpoint)
        return bucket
