import json
import os
import threading
from abc import ABC, abstractmethod
from collections import defaultdict, deque
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple, Union

from langchain_openai import ChatOpenAI
from openai import APIConnectionError, APIStatusError, APITimeoutError
from tenacity import Retrying, retry_if_exception, stop_after_attempt, wait_random_exponential

from src.exceptions import ReflectionTransportError
from src.monitoring.logger import setup_logger

Message = Tuple[str, str]

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


def is_retryable(error: BaseException) -> bool:
    """Rate limits, server errors, timeouts and dropped connections"""
    if isinstance(error, (APIConnectionError, APITimeoutError)):
        return True
    if isinstance(error, APIStatusError):
        return error.status_code in RETRYABLE_STATUS
    return False


class ChatTransport(ABC):
    @abstractmethod
    def complete(self, messages: Sequence[Message], stage: str) -> str:
        """Send (role, content) messages and return the reply text"""


class LangChainChatTransport(ChatTransport):
    """
        Chat-completions client with bounded concurrency and exponential
        backoff on retryable failures.
    """

    def __init__(self, endpoint: str, model: str, api_key_env: str, temperature: float = 0.7,
                 max_retries: int = 5, timeout: float = 60.0, max_in_flight: int = 4,
                 langfuse_handler: Optional[Any] = None):
        self.logger = setup_logger(__name__)
        self.model = model
        self.max_retries = max_retries
        api_key = os.getenv(api_key_env)
        if not api_key:
            # Self-hosted policy servers accept any bearer token
            self.logger.warning(f"{api_key_env} is not set, sending a placeholder token to {endpoint}")
            api_key = "EMPTY"
        # Retries are owned by tenacity below, not by the client
        self.llm = ChatOpenAI(
            model=model,
            base_url=endpoint,
            api_key=api_key,
            temperature=temperature,
            timeout=timeout,
            max_retries=0,
        )
        self.semaphore = threading.BoundedSemaphore(max_in_flight)
        self.callbacks = [langfuse_handler] if langfuse_handler is not None else []
        self.logger.info(f"Chat transport ready: {model} @ {endpoint} (in-flight cap {max_in_flight})")

    def _log_retry(self, retry_state) -> None:
        self.logger.warning(
            f"Retrying {self.model} call (attempt {retry_state.attempt_number}): {retry_state.outcome.exception()}"
        )

    def complete(self, messages: Sequence[Message], stage: str) -> str:
        retrying = Retrying(
            stop=stop_after_attempt(self.max_retries + 1),
            wait=wait_random_exponential(multiplier=1, max=60),
            retry=retry_if_exception(is_retryable),
            before_sleep=self._log_retry,
            reraise=True,
        )
        try:
            for attempt in retrying:
                # The slot is released before tenacity sleeps between attempts
                with attempt, self.semaphore:
                    response = self.llm.invoke(
                        list(messages),
                        config={"callbacks": self.callbacks, "run_name": stage},
                    )
        except Exception as e:
            self.logger.error(f"Chat call failed at stage '{stage}': {e}", exc_info=True)
            raise ReflectionTransportError(f"{stage}: {e}") from e
        return str(response.content)


class RecordingTransport(ChatTransport):
    """Pass-through that appends every exchange to a JSON-lines fixture"""

    def __init__(self, inner: ChatTransport, path: Union[str, Path]):
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[Message], stage: str) -> str:
        response = self.inner.complete(messages, stage)
        record = {"stage": stage, "messages": [list(m) for m in messages], "response": response}
        with self._lock, open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")
        return response


class ReplayTransport(ChatTransport):
    """
        Serves recorded responses per stage in recording order. Request
        content is not matched, only the stage.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._queues: Dict[str, Deque[str]] = defaultdict(deque)
        self._lock = threading.Lock()
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    record = json.loads(line)
                    self._queues[record["stage"]].append(record["response"])
        self.requests: List[Tuple[str, List[Message]]] = []

    def remaining(self, stage: str) -> int:
        return len(self._queues[stage])

    def complete(self, messages: Sequence[Message], stage: str) -> str:
        with self._lock:
            self.requests.append((stage, list(messages)))
            if not self._queues[stage]:
                raise ReflectionTransportError(f"No recorded response left for stage '{stage}' in {self.path}")
            return self._queues[stage].popleft()
