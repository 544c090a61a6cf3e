"""Unit tests for the completion client, JSON recovery and the prompt budget."""

import threading
import time
from unittest.mock import MagicMock, patch

import pytest
import requests

from confcurate.config import ExtractorConfig
from confcurate.errors import ConfigurationError, EndpointUnreachableError
from confcurate.inference import CompletionClient, complete_json, extract_json, map_bounded
from confcurate.token_counting import check_prompt_budget


def _client(**calls):
    session = MagicMock()
    for method, outcome in calls.items():
        if isinstance(outcome, Exception):
            getattr(session, method).side_effect = outcome
        else:
            getattr(session, method).return_value = outcome
    return CompletionClient("http://127.0.0.1:8080/", session=session), session


def _response(status=200, content=None):
    response = MagicMock()
    response.status_code = status
    response.json.return_value = {"content": content}
    if status >= 400:
        response.raise_for_status.side_effect = requests.HTTPError(f"HTTP {status}")
    return response


class TestExtractJson:
    """Test suite for JSON recovery from model output."""

    @pytest.mark.parametrize(
        "text",
        [
            '{"label": "Review"}',
            '```json\n{"label": "Review"}\n```',
            'Sure! Here it is: {"label": "Review"} Hope that helps.',
        ],
    )
    def test_recovers_object(self, text):
        """Test plain, fenced and chatty output."""
        assert extract_json(text) == {"label": "Review"}

    @pytest.mark.parametrize("text", ["no json at all", "[1, 2, 3]", ""])
    def test_rejects(self, text):
        """Test output without a JSON object."""
        with pytest.raises(ValueError):
            extract_json(text)


class TestCompletionClient:
    """Test suite for the local completion endpoint."""

    def test_complete_success(self):
        """Test the request payload and the returned text."""
        client, session = _client(post=_response(content='{"label": "Review"}'))
        result = client.complete("Classify this.")

        assert result == {"success": True, "text": '{"label": "Review"}'}
        url = session.post.call_args[0][0]
        payload = session.post.call_args[1]["json"]
        assert url == "http://127.0.0.1:8080/completion"
        assert payload["prompt"] == "Classify this."
        assert payload["temperature"] == pytest.approx(0.1)
        assert payload["n_predict"] == 512

    def test_http_error(self):
        """Test that a server error becomes an error result."""
        client, _ = _client(post=_response(status=500))
        result = client.complete("x")
        assert result["success"] is False
        assert "500" in result["error"]

    def test_connection_refused(self):
        """Test that an unreachable server raises."""
        client, _ = _client(post=requests.ConnectionError("refused"))
        with pytest.raises(EndpointUnreachableError):
            client.complete("x")

    def test_timeout(self):
        """Test that a timeout is reported without raising."""
        client, _ = _client(post=requests.Timeout("slow"))
        assert client.complete("x")["success"] is False

    def test_health_check(self):
        """Test ready, not ready and unreachable servers."""
        client, _ = _client(get=_response(status=200))
        client.health_check()

        client, _ = _client(get=_response(status=503))
        with pytest.raises(EndpointUnreachableError):
            client.health_check()

        client, _ = _client(get=requests.ConnectionError("refused"))
        with pytest.raises(EndpointUnreachableError):
            client.health_check()


class TestCompleteJson:
    """Test suite for parsed completions with one retry."""

    def test_retry_succeeds(self):
        """Test that malformed output is retried once."""
        client = MagicMock()
        client.complete.side_effect = [
            {"success": True, "text": "thinking..."},
            {"success": True, "text": '{"n": 2}'},
        ]
        result = complete_json(client, "p", lambda data: data["n"])
        assert result == {"success": True, "value": 2, "attempts": 2}

    def test_gives_up(self):
        """Test that the last raw output is kept for review."""
        client = MagicMock()
        client.complete.return_value = {"success": True, "text": '{"m": 1}'}
        result = complete_json(client, "p", lambda data: data["n"])
        assert result["success"] is False
        assert result["raw_output"] == '{"m": 1}'
        assert client.complete.call_count == 2

    def test_transport_error(self):
        """Test that request failures are retried like malformed output."""
        client = MagicMock()
        client.complete.return_value = {"success": False, "error": "timeout"}
        result = complete_json(client, "p", dict)
        assert result["error"] == "timeout"
        assert result["raw_output"] is None


class TestMapBounded:
    """Test suite for bounded concurrency."""

    def test_order_kept(self):
        """Test that results follow input order."""
        assert map_bounded(lambda x: x * 2, range(20), 4) == [x * 2 for x in range(20)]

    def test_in_flight_limit(self):
        """Test that no more than the limit run at once."""
        lock = threading.Lock()
        state = {"now": 0, "peak": 0}

        def work(item):
            with lock:
                state["now"] += 1
                state["peak"] = max(state["peak"], state["now"])
            time.sleep(0.01)
            with lock:
                state["now"] -= 1
            return item

        map_bounded(work, range(16), 3)
        assert state["peak"] <= 3


class TestPromptBudget:
    """Test suite for the context window check."""

    @patch("confcurate.token_counting.count_tokens_with_tiktoken")
    def test_fits(self, mock_count):
        """Test a prompt that fits beside the completion."""
        mock_count.return_value = 1000
        config = ExtractorConfig(max_context=2048, max_tokens=512)
        assert check_prompt_budget("prompt", config) == 1000

    @patch("confcurate.token_counting.count_tokens_with_tiktoken")
    def test_too_long(self, mock_count):
        """Test a prompt that leaves no room for the completion."""
        mock_count.return_value = 1800
        config = ExtractorConfig(max_context=2048, max_tokens=512)
        with pytest.raises(ConfigurationError):
            check_prompt_budget("prompt", config)
