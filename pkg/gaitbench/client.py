"""Chat-completion backends and the retrying trial classifier."""

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np
import requests
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt, wait_exponential

from gaitbench.domain import CHANNELS, ClassLabel, GaitCycle
from gaitbench.encoding import decode_trial_payload
from gaitbench.exceptions import (
    BackendError,
    BackendTransientError,
    ConfigError,
    DatasetError,
    MissingCredentialError,
    SchemaError,
    VerdictRetriesExhausted,
)
from gaitbench.helpers import get_settings
from gaitbench.preprocess import vectorize
from gaitbench.prompts import TRIAL_DATA_MARKER, split_system_message
from gaitbench.verdict import LlmVerdict, parse_verdict

logger = logging.getLogger(__name__)

BACKEND_KINDS = ('http', 'mock')
FAULT_MODES = ('truncate', 'garbage', 'extra-field', 'bad-class', 'fence')
MOCK_MODEL_ID = 'mock-nearest-centroid'
HIGH_CONFIDENCE_RATIO = 0.8
LOW_CONFIDENCE_RATIO = 0.95


class ChatBackend:
    """
    A stateless prompt -> text completion service.

    ``bind_fold`` gives the backend a chance to see the fold's training data; real models ignore it.
    """

    model_id = ''

    def bind_fold(self, training: Iterable[GaitCycle]) -> 'ChatBackend':  # pylint: disable=unused-argument
        """Backend to use for one LOSO fold."""
        return self

    def complete(self, prompt: str) -> str:
        """Send one prompt and return the response text."""
        raise NotImplementedError


class HttpChatBackend(ChatBackend):
    """
    OpenAI-compatible ``/chat/completions`` client.
    """

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        api_key: str,
        timeout: Tuple[float, float] = (5, 120),
        temperature_model_prefixes: Tuple[str, ...] = ('gpt-4',),
        split_system: bool = False,
    ) -> None:
        """Initialize client."""
        self.endpoint = endpoint.rstrip('/')
        self.model_id = model_id
        self.api_key = api_key
        self.timeout = tuple(timeout)
        self.temperature_model_prefixes = tuple(temperature_model_prefixes)
        self.split_system = split_system

    @property
    def authentication_headers(self) -> dict:
        """
        Return the authentication headers.
        """
        return {
            'Authorization': f'Bearer {self.api_key}'
        }

    @property
    def supports_temperature(self) -> bool:
        """True when the model family accepts temperature 0."""
        return self.model_id.startswith(self.temperature_model_prefixes)

    def build_payload(self, prompt: str) -> Dict[str, Any]:
        """Request body for one prompt."""
        if self.split_system:
            system, user = split_system_message(prompt)
            messages = [{'role': 'system', 'content': system}, {'role': 'user', 'content': user}]
        else:
            messages = [{'role': 'user', 'content': prompt}]
        payload: Dict[str, Any] = {'model': self.model_id, 'messages': messages}
        if self.supports_temperature:
            payload['temperature'] = 0
        return payload

    def record_response(self, response: requests.Response) -> None:
        """Log the API response status and size."""
        logger.debug(
            'Chat completion response from %s: status %s, %d bytes',
            self.endpoint, response.status_code, len(response.content or b''),
        )

    def complete(self, prompt: str) -> str:
        """
        POST the prompt and return the first choice's message content.

        :raises BackendTransientError: on timeouts, connection errors and HTTP 5xx.
        :raises BackendError: on HTTP 4xx and malformed responses.
        """
        try:
            response = requests.post(
                f'{self.endpoint}/chat/completions',
                json=self.build_payload(prompt),
                headers=self.authentication_headers,
                timeout=self.timeout,
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise BackendTransientError(f'Chat completion request failed: {exc}') from exc
        except requests.RequestException as exc:
            raise BackendError(f'Chat completion request failed: {exc}') from exc

        self.record_response(response)
        if response.status_code >= 500:
            raise BackendTransientError(f'Chat completion server error: HTTP {response.status_code}')
        if response.status_code >= 400:
            raise BackendError(f'Chat completion rejected: HTTP {response.status_code}: {response.text[:200]}')

        try:
            content = response.json()['choices'][0]['message']['content']
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f'Invalid chat completion response. {exc!r}') from exc
        if content is None:
            return ''
        if not isinstance(content, str):
            raise BackendError(f'Invalid chat completion content type: {type(content).__name__}')
        return content


def class_centroids(training: Iterable[GaitCycle]) -> Dict[ClassLabel, np.ndarray]:
    """Mean 143-value vector of each class present in the training cycles."""
    grouped: Dict[ClassLabel, list] = {}
    for cycle in training:
        grouped.setdefault(cycle.label, []).append(vectorize(cycle))
    return {label: np.mean(grouped[label], axis=0) for label in ClassLabel if label in grouped}


def nearest_centroids(centroids: Dict[ClassLabel, np.ndarray], vector: np.ndarray) -> list:
    """(label, squared Euclidean distance) pairs, nearest first; ties keep canonical label order."""
    distances = [(label, float(np.sum((vector - centroid) ** 2))) for label, centroid in centroids.items()]
    return sorted(distances, key=lambda item: (item[1], item[0].order))


def confidence_from_ratio(ratio: float) -> str:
    """Level for a nearest to second-nearest squared-distance ratio: high below 0.8, low above 0.95."""
    if ratio < HIGH_CONFIDENCE_RATIO:
        return 'high'
    if ratio > LOW_CONFIDENCE_RATIO:
        return 'low'
    return 'medium'


def _prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode('utf8')).hexdigest()


class MockBackend(ChatBackend):
    """
    Offline nearest-centroid stand-in for an LLM.

    Reads the trial payload after the last "TRIAL DATA (% Gait Cycle): " marker, picks the class
    whose training centroid is nearest, and answers in the verdict schema. With a fault mode,
    a deterministic share of prompts (by prompt hash) gets malformed answers for the first
    ``fault_attempts`` submissions (every submission when None).
    """

    model_id = MOCK_MODEL_ID

    def __init__(
        self,
        centroids: Optional[Dict[ClassLabel, np.ndarray]] = None,
        fault: Optional[str] = None,
        fault_fraction: float = 1.0,
        fault_attempts: Optional[int] = None,
    ) -> None:
        """Keep the centroid table and fault settings."""
        if fault is not None and fault not in FAULT_MODES:
            raise ConfigError('fault', f'expected one of {", ".join(FAULT_MODES)}, got {fault!r}')
        if not 0 <= fault_fraction <= 1:
            raise ConfigError('fault_fraction', f'must be in [0, 1], got {fault_fraction}')
        self.centroids = centroids
        self.fault = fault
        self.fault_fraction = fault_fraction
        self.fault_attempts = fault_attempts
        self._submissions: Dict[str, int] = {}
        self._lock = threading.Lock()

    def bind_fold(self, training: Iterable[GaitCycle]) -> 'MockBackend':
        """A mock with centroids from the fold's training cycles."""
        return MockBackend(class_centroids(training), self.fault, self.fault_fraction, self.fault_attempts)

    def _faulty(self, prompt: str) -> bool:
        if self.fault is None:
            return False
        digest = _prompt_digest(prompt)
        if int(digest[:8], 16) / 2 ** 32 >= self.fault_fraction:
            return False
        with self._lock:
            submission = self._submissions.get(digest, 0) + 1
            self._submissions[digest] = submission
        return self.fault_attempts is None or submission <= self.fault_attempts

    def decode(self, prompt: str) -> np.ndarray:
        """
        143-value vector of the trial payload in a prompt.

        :raises DatasetError: when the prompt holds no decodable trial payload.
        """
        position = prompt.rfind(TRIAL_DATA_MARKER)
        if position < 0:
            raise DatasetError('Prompt has no TRIAL DATA block')
        try:
            payload, _ = json.JSONDecoder().raw_decode(prompt, position + len(TRIAL_DATA_MARKER))
        except ValueError as exc:
            raise DatasetError(f'TRIAL DATA is not JSON: {exc}') from exc
        channels = decode_trial_payload(payload)
        return np.concatenate([np.asarray(channels[channel], dtype=float) for channel in CHANNELS])

    def answer(self, vector: np.ndarray) -> Dict[str, str]:
        """Verdict fields for a decoded trial."""
        ranked = nearest_centroids(self.centroids, vector)
        best_label, best_distance = ranked[0]
        if len(ranked) == 1:
            return {
                'class': best_label.value,
                'confidence': 'high',
                'justification': (
                    f'Only the {best_label.value} centroid is available (squared distance {best_distance:.2f}).'
                ),
            }
        second_label, second_distance = ranked[1]
        ratio = best_distance / second_distance if second_distance > 0 else 1.0
        return {
            'class': best_label.value,
            'confidence': confidence_from_ratio(ratio),
            'justification': (
                f'The trial is nearest to the {best_label.value} centroid (squared distance {best_distance:.2f}), '
                f'followed by {second_label.value} ({second_distance:.2f}).'
            ),
        }

    def complete(self, prompt: str) -> str:
        """
        Nearest-centroid verdict, possibly corrupted by the configured fault.

        :raises BackendError: when unbound, or when the prompt cannot be decoded outside fault mode.
        """
        if self.centroids is None:
            raise BackendError('Mock backend has no centroid table; call bind_fold first')
        faulty = self._faulty(prompt)
        try:
            vector = self.decode(prompt)
        except DatasetError as exc:
            if self.fault is not None:
                return 'I could not read the trial data.'
            raise BackendError(f'Mock backend cannot decode the prompt: {exc}') from exc

        answer = self.answer(vector)
        if not faulty:
            return json.dumps(answer)
        return _corrupt(answer, self.fault)


def _corrupt(answer: Dict[str, str], fault: str) -> str:
    text = json.dumps(answer)
    if fault == 'truncate':
        return text[:len(text) // 2]
    if fault == 'garbage':
        return f'Based on the data, I believe this is {answer["class"]}.'
    if fault == 'extra-field':
        return json.dumps({**answer, 'severity': 'moderate'})
    if fault == 'bad-class':
        return json.dumps({**answer, 'class': f'{answer["class"]}, because of the kinematic pattern'})
    return f'```json\n{text}\n```'


def classify_trial(
    backend: ChatBackend,
    prompt: str,
    max_retries: int = 3,
    backoff_multiplier: float = 1.0,
    backoff_max: float = 30.0,
) -> LlmVerdict:
    """
    Classify one trial, resubmitting the identical prompt while the answer breaks the schema.

    At most ``1 + max_retries`` submissions are made. Each submission retries transport
    failures with exponential backoff, up to the same cap.

    :raises VerdictRetriesExhausted: when no submission yields a valid verdict.
    :raises BackendError: on a terminal transport failure.
    """
    total = max_retries + 1
    retrying = Retrying(
        stop=stop_after_attempt(total),
        wait=wait_exponential(multiplier=backoff_multiplier, max=backoff_max),
        retry=retry_if_exception_type(BackendTransientError),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )

    last_error: Optional[SchemaError] = None
    raw: Optional[str] = None
    for attempt in range(1, total + 1):
        try:
            raw = retrying(backend.complete, prompt)
        except BackendTransientError as exc:
            raise BackendError(f'Transport failed after {total} attempts: {exc}') from exc
        try:
            verdict = parse_verdict(raw)
        except SchemaError as exc:
            last_error = exc
            logger.warning('Invalid verdict on attempt %d of %d (%s); resubmitting.', attempt, total, exc)
            continue
        if verdict.fence_stripped:
            logger.warning('Verdict was wrapped in a markdown fence; accepted after stripping it.')
        return replace(verdict, attempts=attempt)

    raise VerdictRetriesExhausted(total, last_error, raw)


@dataclass(frozen=True)
class BackendSpec:
    """How to reach the classifying model."""

    kind: str = 'mock'
    model_id: str = ''
    endpoint: str = ''
    max_retries: int = 3
    max_concurrent: int = 4
    timeout: Tuple[float, float] = (5, 120)
    fault: Optional[str] = None
    fault_fraction: float = 1.0
    fault_attempts: Optional[int] = None

    def __post_init__(self) -> None:
        """Validate kind and limits."""
        if self.kind not in BACKEND_KINDS:
            raise ConfigError('backend', f'expected one of {", ".join(BACKEND_KINDS)}, got {self.kind!r}')
        if self.max_retries < 0:
            raise ConfigError('max_retries', f'must be >= 0, got {self.max_retries}')
        if self.max_concurrent < 1:
            raise ConfigError('max_concurrent', f'must be >= 1, got {self.max_concurrent}')
        if self.fault is not None and self.kind != 'mock':
            raise ConfigError('fault', 'fault injection needs the mock backend')

    @property
    def resolved_model_id(self) -> str:
        """Model id recorded on predictions."""
        return MOCK_MODEL_ID if self.kind == 'mock' else self.model_id


def make_backend(spec: BackendSpec) -> ChatBackend:
    """
    Build the backend a spec describes.

    :raises MissingCredentialError: for the HTTP backend when the API key variable is unset.
    """
    if spec.kind == 'mock':
        return MockBackend(
            fault=spec.fault, fault_fraction=spec.fault_fraction, fault_attempts=spec.fault_attempts,
        )

    gaitbench_settings = get_settings()
    key_name = gaitbench_settings['API_KEY_ENV']
    api_key = os.environ.get(key_name)
    if not api_key:
        raise MissingCredentialError(f'Environment variable {key_name} is not set')
    if not spec.endpoint or not spec.model_id:
        raise ConfigError('backend', 'the http backend needs an endpoint and a model id')
    return HttpChatBackend(
        endpoint=spec.endpoint,
        model_id=spec.model_id,
        api_key=api_key,
        timeout=spec.timeout,
        temperature_model_prefixes=tuple(gaitbench_settings['LLM_TEMPERATURE_MODEL_PREFIXES']),
        split_system=gaitbench_settings['LLM_SPLIT_SYSTEM_MESSAGE'],
    )
