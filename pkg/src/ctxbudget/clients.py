"""HTTP plumbing for the optional external embedding service."""

from __future__ import annotations

import time
from typing import Optional

import requests

from .errors import EmbeddingServiceError


def post_json(
    url: str,
    payload: dict,
    timeout: float,
    api_key: Optional[str] = None,
    retries: int = 0,
    error_cls=EmbeddingServiceError,
) -> dict:
    """POST JSON and return the decoded JSON body.

    Transport failures and 5xx responses are retried `retries` times with a
    short backoff; any remaining failure raises `error_cls` with a body
    excerpt so callers can distinguish protocol problems from validation.
    """
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
            if attempt < retries:
                time.sleep(0.1 * (attempt + 1))
            continue
        if 500 <= response.status_code < 600 and attempt < retries:
            last_error = error_cls(
                f"{url} returned {response.status_code}: {response.text[:200]}"
            )
            time.sleep(0.1 * (attempt + 1))
            continue
        if not response.ok:
            raise error_cls(
                f"{url} returned {response.status_code}: {response.text[:200]}"
            )
        try:
            return response.json()
        except ValueError as exc:
            raise error_cls(f"{url} returned non-JSON body: {response.text[:200]}") from exc
    raise error_cls(f"cannot reach {url}: {last_error}")


def fetch_embeddings(
    texts: list[str],
    endpoint: str,
    api_key: Optional[str] = None,
    timeout: float = 10.0,
    retries: int = 2,
) -> list[list[float]]:
    """Request {"texts": [...]} -> {"vectors": [[...], ...]} from a service."""
    body = post_json(
        endpoint,
        {"texts": texts},
        timeout=timeout,
        api_key=api_key,
        retries=retries,
        error_cls=EmbeddingServiceError,
    )
    if "vectors" not in body or not isinstance(body["vectors"], list):
        raise EmbeddingServiceError(f"{endpoint} response has no 'vectors' list")
    return body["vectors"]
