"""
Prompt templates and prompt assembly.
"""

import os
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

from gaitbench.exceptions import ConfigError
from gaitbench.helpers import sha256_text

TEMPLATES_DIR = os.path.join(os.path.dirname(__file__), 'templates')
GROUNDED_TEMPLATE = 'prompt_grounded.txt'
UNGROUNDED_TEMPLATE = 'prompt_ungrounded.txt'

FEATURE_PLACEHOLDER = 'feature_text'
REFERENCE_PLACEHOLDER = 'reference_text'
KNOWN_PLACEHOLDERS = (FEATURE_PLACEHOLDER, REFERENCE_PLACEHOLDER)
PLACEHOLDER_RE = re.compile(r'\{([a-z_]+)\}')

SYSTEM_SPLIT_MARKER = 'Data inputs:'
TRIAL_DATA_MARKER = 'TRIAL DATA (% Gait Cycle): '


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    @property
    def sha256(self) -> str:
        """Digest recorded in the run config echo."""
        return sha256_text(self.text)

    @property
    def placeholders(self) -> List[str]:
        """Placeholder names in order of appearance."""
        return PLACEHOLDER_RE.findall(self.text)

    @property
    def grounded(self) -> bool:
        """True when the template asks for reference statistics."""
        return REFERENCE_PLACEHOLDER in self.placeholders


@lru_cache(maxsize=None)
def load_template(grounded: bool) -> PromptTemplate:
    """One of the two shipped templates."""
    name = GROUNDED_TEMPLATE if grounded else UNGROUNDED_TEMPLATE
    with open(os.path.join(TEMPLATES_DIR, name), encoding='utf8') as template_file:
        return PromptTemplate(name=name, text=template_file.read())


def assemble_prompt(trial_text: str, reference_text: Optional[str], template: PromptTemplate) -> str:
    """
    Substitute the trial (and, for the grounded template, reference) payloads into a template.

    Payloads are inserted verbatim; everything else in the template is left untouched.

    :raises ConfigError: on an unknown or missing placeholder, or a reference/template mismatch.
    """
    placeholders = template.placeholders
    unknown = [name for name in placeholders if name not in KNOWN_PLACEHOLDERS]
    if unknown:
        raise ConfigError('template', f'{template.name} has unknown placeholder {{{unknown[0]}}}')
    if FEATURE_PLACEHOLDER not in placeholders:
        raise ConfigError('template', f'{template.name} is missing the {{{FEATURE_PLACEHOLDER}}} placeholder')
    if template.grounded and reference_text is None:
        raise ConfigError('template', f'{template.name} needs reference statistics')
    if not template.grounded and reference_text is not None:
        raise ConfigError('template', f'{template.name} has no {{{REFERENCE_PLACEHOLDER}}} placeholder')

    values = {FEATURE_PLACEHOLDER: trial_text, REFERENCE_PLACEHOLDER: reference_text}
    # A single pass, so placeholder-like text inside the payloads is never expanded.
    return PLACEHOLDER_RE.sub(lambda match: values[match.group(1)], template.text)


def split_system_message(prompt: str) -> Tuple[str, str]:
    """(instructions, data inputs) around the 'Data inputs:' line."""
    position = prompt.find(SYSTEM_SPLIT_MARKER)
    if position < 0:
        return '', prompt
    return prompt[:position].rstrip() + '\n', prompt[position:]
