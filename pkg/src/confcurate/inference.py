"""Completion-style client for a locally hosted inference server.

The transport is deliberately small: send prompt text to ``POST /completion`` and read
the completion text back from ``content`` (the llama.cpp server contract).
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar

import requests

from .config import ModelStageConfig
from .errors import EndpointUnreachableError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

MALFORMED_RETRIES = 1


def extract_json(text: str) -> Dict[str, Any]:
    """Parse a single JSON object out of model output, tolerating code fences."""

    text = text.strip()
    text = re.sub(r"^```(?:json)?\s*", "", text)
    text = re.sub(r"\s*```$", "", text)

    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        match = re.search(r"\{.*\}", text, re.DOTALL)
        if not match:
            raise ValueError("No JSON object found in model output") from None
        candidate = re.sub(r"[\x00-\x1F\x7F]", " ", match.group(0))
        value = json.loads(candidate)

    if not isinstance(value, dict):
        raise ValueError("Model output is not a JSON object")
    return value


class CompletionClient:
    """Client for a local completion endpoint."""

    def __init__(
        self,
        endpoint: str,
        temperature: float = 0.1,
        max_tokens: int = 512,
        timeout_s: float = 120.0,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout_s = timeout_s
        self._session = session or requests.Session()

    @classmethod
    def from_config(cls, config: ModelStageConfig) -> "CompletionClient":
        return cls(
            endpoint=config.endpoint or "",
            temperature=config.temperature,
            max_tokens=config.max_tokens,
            timeout_s=config.timeout_s,
        )

    def health_check(self) -> None:
        """Fail fast when the server is not reachable.

        Raises:
            EndpointUnreachableError: If the server cannot be contacted or is not ready.
        """
        try:
            response = self._session.get(f"{self.endpoint}/health", timeout=10)
        except requests.RequestException as exc:
            raise EndpointUnreachableError(
                f"Inference server unreachable at {self.endpoint}: {exc}"
            ) from exc
        if response.status_code >= 400:
            raise EndpointUnreachableError(
                f"Inference server at {self.endpoint} not ready (HTTP {response.status_code})"
            )

    def complete(self, prompt: str) -> Dict[str, Any]:
        """Send ``prompt`` and return ``{"success": True, "text": ...}`` or an error dict.

        Raises:
            EndpointUnreachableError: If the connection itself fails.
        """
        payload = {
            "prompt": prompt,
            "temperature": self.temperature,
            "n_predict": self.max_tokens,
        }
        try:
            response = self._session.post(
                f"{self.endpoint}/completion", json=payload, timeout=self.timeout_s
            )
        except requests.ConnectionError as exc:
            raise EndpointUnreachableError(
                f"Inference server unreachable at {self.endpoint}: {exc}"
            ) from exc
        except requests.RequestException as exc:
            return {"success": False, "error": str(exc)}

        try:
            response.raise_for_status()
            return {"success": True, "text": response.json()["content"]}
        except Exception as exc:
            return {"success": False, "error": str(exc)}


def complete_json(
    client: CompletionClient,
    prompt: str,
    parse: Callable[[Dict[str, Any]], T],
    retries: int = MALFORMED_RETRIES,
) -> Dict[str, Any]:
    """Request a JSON completion and convert it with ``parse``.

    Malformed output (no JSON object, or ``parse`` raising ``ValueError``) is retried
    ``retries`` times. The result dict carries ``value`` on success, otherwise ``error``
    and the last raw completion.
    """
    last_error = ""
    raw_output = None
    for attempt in range(1, retries + 2):
        result = client.complete(prompt)
        if not result["success"]:
            last_error = result["error"]
            logger.debug("Completion attempt %d failed: %s", attempt, last_error)
            continue
        raw_output = result["text"]
        try:
            value = parse(extract_json(raw_output))
        except (ValueError, KeyError, TypeError) as exc:
            last_error = f"Malformed model output: {exc}"
            logger.debug("Attempt %d returned malformed output: %s", attempt, exc)
            continue
        return {"success": True, "value": value, "attempts": attempt}

    return {
        "success": False,
        "error": last_error,
        "raw_output": raw_output,
        "attempts": retries + 1,
    }


def map_bounded(fn: Callable[[T], R], items: Iterable[T], max_in_flight: int) -> List[R]:
    """Apply ``fn`` with at most ``max_in_flight`` concurrent calls, keeping input order."""

    items = list(items)
    if max_in_flight <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as executor:
        return list(executor.map(fn, items))
