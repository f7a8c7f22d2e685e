"""JSON-over-HTTP POST with bounded retries and exponential backoff."""

import logging
import time

import httpx

from .errors import TransportError

logger = logging.getLogger(__name__)

RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


def _error_message(response):
    try:
        return response.json().get("error") or response.text
    except ValueError:
        return response.text


def post_json(client, url, payload, retries=3, backoff=0.5, sleep=time.sleep):
    """POST ``payload`` and return the decoded JSON body.

    Connection errors and retryable statuses are retried ``retries`` times,
    sleeping ``backoff * 2**attempt`` between attempts. Other 4xx statuses
    fail immediately.
    """
    attempt = 0
    while True:
        try:
            response = client.post(url, json=payload)
        except httpx.HTTPError as exc:
            reason = f"{type(exc).__name__}: {exc}"
        else:
            if response.status_code < 400:
                try:
                    return response.json()
                except ValueError:
                    reason = "response is not valid JSON"
            elif response.status_code in RETRY_STATUSES:
                reason = f"HTTP {response.status_code}: {_error_message(response)}"
            else:
                raise TransportError(
                    f"{url}: HTTP {response.status_code}: {_error_message(response)}",
                    retries=attempt,
                )
        if attempt >= retries:
            raise TransportError(f"{url}: {reason} (gave up after {attempt} retries)", retries=attempt)
        delay = backoff * (2**attempt)
        logger.warning("%s: %s; retrying in %.2fs", url, reason, delay)
        sleep(delay)
        attempt += 1
