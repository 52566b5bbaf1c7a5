"""
Client for remote model endpoints that speak the chat-completion protocol.
"""

import logging
import os
import random
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional
from urllib.parse import urlparse

import requests

from dilemma_bench.exceptions import CredentialMissing, RateLimited, ServerError, TransportError
from dilemma_bench.prompts import PromptBundle

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_CREDENTIAL_ENV = "DILEMMA_BENCH_API_KEY"
RETRYABLE_STATUS = 429


@dataclass(frozen=True)
class ModelEndpoint:
    """
    A remote model: server base URL, model id and the name of the environment
    variable holding its credential. The credential value itself is read at
    call time and never stored.
    """

    base_url: str
    model_id: str
    credential_env: Optional[str] = DEFAULT_CREDENTIAL_ENV

    def __post_init__(self):
        parsed = urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"Endpoint base_url must be an absolute http(s) URL: {self.base_url!r}")
        if not self.model_id:
            raise ValueError("Endpoint model_id must not be empty")

    @property
    def chat_url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"

    def ref(self) -> Dict[str, str]:
        return {"base_url": self.base_url, "model_id": self.model_id}

    @classmethod
    def from_config(cls, data: Dict[str, Any]) -> "ModelEndpoint":
        return cls(
            base_url=data["base_url"],
            model_id=data["model_id"],
            credential_env=data.get("credential_env", DEFAULT_CREDENTIAL_ENV),
        )


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.6
    top_p: float = 0.95
    top_k: int = 20
    max_tokens: int = 4096
    # Server-side context window; recorded, not sent.
    context_limit: int = 32768

    def request_fields(self) -> Dict[str, Any]:
        return {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "top_k": self.top_k,
            "max_tokens": self.max_tokens,
        }

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_config(cls, data: Optional[Dict[str, Any]]) -> "SamplingConfig":
        data = data or {}
        defaults = cls()
        return cls(
            temperature=float(data.get("temperature", defaults.temperature)),
            top_p=float(data.get("top_p", defaults.top_p)),
            top_k=int(data.get("top_k", defaults.top_k)),
            max_tokens=int(data.get("max_tokens", defaults.max_tokens)),
            context_limit=int(data.get("context_limit", defaults.context_limit)),
        )


@dataclass
class CallTranscript:
    """One network attempt, successful or not."""

    request_id: str
    timestamp: str
    endpoint: Dict[str, str]
    messages: List[Dict[str, str]]
    sampling: Dict[str, Any]
    attempt: int
    latency_ms: float
    status: Optional[int] = None
    raw_response: Optional[str] = None
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Completion:
    text: str
    request_id: str
    attempts: int = 1


@dataclass
class GatewayStats:
    calls: int = 0
    attempts: int = 0
    retries: int = 0
    failures: int = 0
    max_in_flight: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def to_dict(self) -> Dict[str, int]:
        return {
            "calls": self.calls,
            "attempts": self.attempts,
            "retries": self.retries,
            "failures": self.failures,
            "max_in_flight": self.max_in_flight,
        }


def _retry_after_seconds(response: Optional[requests.Response]) -> Optional[float]:
    if response is None:
        return None
    value = response.headers.get("Retry-After")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


def _completion_text(response: requests.Response) -> str:
    try:
        body = response.json()
        content = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise ServerError(f"Unusable completion body: {type(e).__name__}: {e}")
    if not isinstance(content, str):
        raise ServerError("Completion content is not a string")
    return content


class LLMGateway:
    """
    Thread-safe chat-completion client with a shared concurrency budget.

    Args:
        concurrency (int): Maximum requests in flight across all callers.
        timeout (float): Per-request timeout in seconds.
        max_attempts (int): Attempts per call, first one included.
        backoff_base (float): Delay before the second attempt, in seconds.
        backoff_max (float): Cap on the computed delay.
        session (requests.Session, optional): Shared session; by default
            each thread gets its own.
        transcript_sink (callable, optional): Receives every CallTranscript.
        sleep (callable): Sleep function, replaceable in tests.
        jitter_seed (int, optional): Seed for the backoff jitter.
    """

    def __init__(
        self,
        concurrency: int = 8,
        timeout: float = 120.0,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        backoff_max: float = 60.0,
        session: Optional[requests.Session] = None,
        transcript_sink: Optional[Callable[[CallTranscript], None]] = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: Optional[int] = None,
    ):
        if concurrency < 1:
            raise ValueError(f"Concurrency budget must be at least 1, got {concurrency}")
        if max_attempts < 1:
            raise ValueError(f"max_attempts must be at least 1, got {max_attempts}")
        self.concurrency = concurrency
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_max = backoff_max
        self.transcript_sink = transcript_sink
        self.stats = GatewayStats()
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(concurrency)
        self._shared_session = session
        self._local = threading.local()
        self._jitter = random.Random(jitter_seed)
        self._jitter_lock = threading.Lock()
        self._in_flight = 0

    def _session(self) -> requests.Session:
        if self._shared_session is not None:
            return self._shared_session
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            self._local.session = session
        return session

    def _backoff(self, attempt: int, retry_after: Optional[float]) -> float:
        delay = min(self.backoff_max, self.backoff_base * (2 ** (attempt - 1)))
        with self._jitter_lock:
            delay *= 0.5 + 0.5 * self._jitter.random()
        if retry_after is not None and retry_after > delay:
            delay = retry_after
        return delay

    def _record(self, transcript: CallTranscript) -> None:
        if self.transcript_sink is not None:
            try:
                self.transcript_sink(transcript)
            except Exception as e:
                logger.error(f"Error writing transcript {transcript.request_id}: {e}")

    def _post(self, url: str, payload: Dict[str, Any], headers: Dict[str, str]) -> requests.Response:
        with self._semaphore:
            with self.stats._lock:
                self._in_flight += 1
                self.stats.max_in_flight = max(self.stats.max_in_flight, self._in_flight)
            try:
                return self._session().post(url, json=payload, headers=headers, timeout=self.timeout)
            finally:
                with self.stats._lock:
                    self._in_flight -= 1

    def chat_complete(
        self,
        endpoint: ModelEndpoint,
        bundle: PromptBundle,
        sampling: Optional[SamplingConfig] = None,
    ) -> Completion:
        """
        Send one two-message conversation and return the completion text.

        Args:
            endpoint (ModelEndpoint): Target model.
            bundle (PromptBundle): System and user texts.
            sampling (SamplingConfig, optional): Sampling parameters.

        Returns:
            Completion: First choice's content verbatim, request id and the
            number of attempts used.

        Raises:
            CredentialMissing: The credential variable is not set.
            RateLimited: HTTP 429 on every attempt.
            ServerError: Non-retryable status, 5xx on every attempt or an
                unusable body.
            TransportError: Connection failure or timeout on every attempt.
        """
        if not bundle.system_text or not bundle.user_text:
            raise ValueError("Prompt bundle must not be empty")
        sampling = sampling or SamplingConfig()

        headers = {"Content-Type": "application/json"}
        if endpoint.credential_env:
            credential = os.environ.get(endpoint.credential_env)
            if not credential:
                raise CredentialMissing(f"Environment variable {endpoint.credential_env} is not set")
            headers["Authorization"] = f"Bearer {credential}"

        messages = bundle.messages()
        payload = {"model": endpoint.model_id, "messages": messages}
        payload.update(sampling.request_fields())

        request_id = uuid.uuid4().hex
        with self.stats._lock:
            self.stats.calls += 1

        for attempt in range(1, self.max_attempts + 1):
            started = time.monotonic()
            timestamp = datetime.now(timezone.utc).isoformat()
            response = None
            error: Optional[Exception] = None
            text = None

            try:
                response = self._post(endpoint.chat_url, payload, headers)
            except requests.RequestException as e:
                error = TransportError(f"{type(e).__name__}: {e}")

            if response is not None:
                if response.status_code == 200:
                    try:
                        text = _completion_text(response)
                    except ServerError as e:
                        error = e
                elif response.status_code == RETRYABLE_STATUS:
                    error = RateLimited(f"HTTP 429 from {endpoint.base_url}")
                else:
                    error = ServerError(f"HTTP {response.status_code} from {endpoint.base_url}")

            with self.stats._lock:
                self.stats.attempts += 1
            self._record(CallTranscript(
                request_id=request_id,
                timestamp=timestamp,
                endpoint=endpoint.ref(),
                messages=messages,
                sampling=sampling.to_dict(),
                attempt=attempt,
                latency_ms=(time.monotonic() - started) * 1000.0,
                status=response.status_code if response is not None else None,
                raw_response=response.text if response is not None else None,
                error=str(error) if error is not None else None,
            ))

            if error is None:
                return Completion(text=text, request_id=request_id, attempts=attempt)

            retryable = isinstance(error, (RateLimited, TransportError)) or (
                response is not None and response.status_code >= 500
            )
            if not retryable or attempt == self.max_attempts:
                with self.stats._lock:
                    self.stats.failures += 1
                logger.error(f"Request {request_id} to {endpoint.model_id} failed after {attempt} attempt(s): {error}")
                raise error

            delay = self._backoff(attempt, _retry_after_seconds(response))
            with self.stats._lock:
                self.stats.retries += 1
            logger.warning(f"Request {request_id} attempt {attempt} failed ({error}); retrying in {delay:.2f}s")
            self._sleep(delay)

        raise ServerError("Retry loop exited without a result")


def with_concurrency_budget(limit: int, **kwargs: Any) -> LLMGateway:
    """
    Gateway handle allowing at most `limit` requests in flight.

    Raises:
        ValueError: If limit < 1.
    """
    return LLMGateway(concurrency=limit, **kwargs)


def gateway_from_config(config: Dict[str, Any], transcript_sink: Optional[Callable[[CallTranscript], None]] = None) -> LLMGateway:
    gateway_config = config.get("gateway", {})
    return LLMGateway(
        concurrency=int(config.get("concurrency", 8)),
        timeout=float(gateway_config.get("timeout", 120.0)),
        max_attempts=int(gateway_config.get("max_attempts", 5)),
        backoff_base=float(gateway_config.get("backoff_base", 1.0)),
        backoff_max=float(gateway_config.get("backoff_max", 60.0)),
        transcript_sink=transcript_sink,
        jitter_seed=config.get("seed"),
    )
