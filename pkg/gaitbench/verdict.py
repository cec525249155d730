"""
Strict parsing of the LLM's JSON verdict.

Accepted grammar: one JSON object with exactly the keys ``class``, ``confidence`` and
``justification``, optionally wrapped in a single markdown code fence.

- ``class``: an allowed label after trimming whitespace. Canonical labels are accepted, plus the
  two spellings the prompt itself uses, "OUTWARD FOOT" and "INWARD FOOT".
- ``confidence``: high, medium or low, any letter case.
- ``justification``: a string with at least one non-whitespace character.
"""

import json
import re
from dataclasses import dataclass
from typing import Any, Tuple

from gaitbench.domain import ClassLabel, Confidence
from gaitbench.exceptions import SchemaError, SchemaErrorKind

REQUIRED_FIELDS = ('class', 'confidence', 'justification')
CLASS_ALIASES = {
    'OUTWARD FOOT': ClassLabel.OUTWARD_FOOT,
    'INWARD FOOT': ClassLabel.INWARD_FOOT,
}
FENCE_RE = re.compile(r'\A\s*```[A-Za-z0-9_-]*[ \t]*\r?\n(?P<body>.*?)\r?\n?[ \t]*```\s*\Z', re.DOTALL)


@dataclass(frozen=True)
class LlmVerdict:
    predicted: ClassLabel
    confidence: Confidence
    justification: str
    attempts: int
    raw_response: str
    fence_stripped: bool = False


def strip_fence(raw: str) -> Tuple[str, bool]:
    """Remove one enclosing markdown code fence, reporting whether there was one."""
    match = FENCE_RE.match(raw)
    if match is None:
        return raw, False
    return match.group('body'), True


def parse_class(value: Any) -> ClassLabel:
    """Allowed label after trimming, or SchemaError bad-class."""
    if isinstance(value, str):
        text = value.strip()
        if text in ClassLabel.__members__:
            return ClassLabel[text]
        if text in CLASS_ALIASES:
            return CLASS_ALIASES[text]
    raise SchemaError(SchemaErrorKind.BAD_CLASS, f'"class" must be exactly one allowed label, got {value!r}')


def parse_confidence(value: Any) -> Confidence:
    """high / medium / low in any case, or SchemaError bad-confidence."""
    if isinstance(value, str):
        try:
            return Confidence(value.lower())
        except ValueError:
            pass
    raise SchemaError(SchemaErrorKind.BAD_CONFIDENCE, f'"confidence" must be high, medium or low, got {value!r}')


def parse_verdict(raw: str) -> LlmVerdict:
    """
    Validate a raw response against the verdict grammar.

    :raises SchemaError: with kind not-json, missing-field, extra-field, bad-class,
        bad-confidence or empty-justification.
    """
    if not isinstance(raw, str):
        raise SchemaError(SchemaErrorKind.NOT_JSON, f'expected text, got {type(raw).__name__}')
    body, fence_stripped = strip_fence(raw)
    try:
        data = json.loads(body)
    except ValueError as exc:
        raise SchemaError(SchemaErrorKind.NOT_JSON, str(exc)) from exc
    if not isinstance(data, dict):
        raise SchemaError(SchemaErrorKind.NOT_JSON, f'expected a JSON object, got {type(data).__name__}')

    for name in REQUIRED_FIELDS:
        if name not in data:
            raise SchemaError(SchemaErrorKind.MISSING_FIELD, f'missing "{name}"')
    extra = sorted(set(data) - set(REQUIRED_FIELDS))
    if extra:
        raise SchemaError(SchemaErrorKind.EXTRA_FIELD, f'unexpected field(s): {", ".join(extra)}')

    predicted = parse_class(data['class'])
    confidence = parse_confidence(data['confidence'])
    justification = data['justification']
    if not isinstance(justification, str) or not justification.strip():
        raise SchemaError(SchemaErrorKind.EMPTY_JUSTIFICATION, '"justification" must be non-empty text')

    return LlmVerdict(
        predicted=predicted,
        confidence=confidence,
        justification=justification,
        attempts=1,
        raw_response=raw,
        fence_stripped=fence_stripped,
    )
