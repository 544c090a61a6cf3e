"""Prompt token counting for the model-backed extractors."""

from __future__ import annotations

import logging
from functools import lru_cache

import tiktoken

from .config import ModelStageConfig
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_ENCODING = "o200k_base"
FALLBACK_ENCODING = "cl100k_base"


@lru_cache(maxsize=4)
def _encoding(name: str):
    try:
        return tiktoken.get_encoding(name)
    except Exception:  # pragma: no cover - fallback path
        logger.debug("Encoding %s unavailable, using %s", name, FALLBACK_ENCODING)
        return tiktoken.get_encoding(FALLBACK_ENCODING)


def count_tokens_with_tiktoken(text: str, encoding: str = DEFAULT_ENCODING) -> int:
    """Count tokens using the local tiktoken encoder."""

    return len(_encoding(encoding).encode(text))


def check_prompt_budget(prompt: str, config: ModelStageConfig) -> int:
    """Return the prompt's token count, failing if prompt plus completion exceeds the context.

    Raises:
        ConfigurationError: If ``max_context`` cannot hold the prompt and ``max_tokens``.
    """

    tokens = count_tokens_with_tiktoken(prompt)
    if tokens + config.max_tokens > config.max_context:
        raise ConfigurationError(
            f"Prompt needs {tokens} tokens plus {config.max_tokens} for the completion, "
            f"but max_context is {config.max_context}"
        )
    return tokens
