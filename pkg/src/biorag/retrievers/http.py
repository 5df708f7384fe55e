from __future__ import annotations

import time
from typing import Callable

import httpx

from ..errors import RateLimited
from .ratelimit import TokenBucket


def _retry_after(resp: httpx.Response, default: float = 1.0) -> float:
    value = resp.headers.get("Retry-After")
    try:
        return max(0.0, float(value)) if value is not None else default
    except ValueError:
        return default


def get_json(
    client: httpx.Client,
    url: str,
    params: dict,
    limiter: TokenBucket | None,
    sleep: Callable[[float], None] = time.sleep,
):
    """GET with client-side rate limiting; a 429 is retried once after Retry-After.

    Raises ``RateLimited`` if the server still refuses or asks for a wait
    longer than the limiter's budget, ``httpx.HTTPError`` on other failures.
    """
    for attempt in (0, 1):
        if limiter is not None:
            limiter.acquire()
        resp = client.get(url, params=params)
        if resp.status_code == 429:
            wait = _retry_after(resp)
            budget = limiter.max_wait if limiter is not None else 5.0
            if attempt == 1 or wait > budget:
                raise RateLimited(url, wait)
            sleep(wait)
            continue
        resp.raise_for_status()
        return resp.json()
    raise AssertionError("unreachable")
