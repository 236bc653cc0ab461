"""
Prompt templates for the generated description conditions

The instruction wording of every built-in template is frozen; INSTRUCTION_SHA256
pins each one and the test suite checks them. Rendered prompts are the
instruction followed by a blank line and the caption(s), or the instruction
alone for conditions that send the image itself.
"""

import hashlib
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

from specrank.conditions import (
    COMPOSITE, CONCISE, HARD_LIMITED, IMAGE_CONDITIONS, IMAGE_TO_TEXT, K_LIMITED, VERBOSE
)
from specrank.errors import ArityError, EmptyInput, MissingLimit, ValidationError

COMPOSITE_ARITY = 5
HARD_LIMIT_CHARS = 200

_DESCRIBE = (
    "Describe this image and don't introduce any emotional information. "
    "Just describe what's there."
)

INSTRUCTIONS: Dict[str, str] = {
    VERBOSE: (
        "Given this description, generate one longer description that expresses the same "
        "information as in the original description but in a more verbose way. In other words, "
        "use more words but say the same thing as given. Do not augment the description with any "
        "emotional or made-up information. Only output the longer description and nothing else."
    ),
    COMPOSITE: (
        "Given these 5 descriptions, generate one longer, final description that combines all "
        "information in the individual descriptions. Do not augment the description with any "
        "emotional or made-up information. Only output the longer description and nothing else."
    ),
    IMAGE_TO_TEXT: _DESCRIBE,
    CONCISE: _DESCRIBE + " Be as concise as possible.",
    HARD_LIMITED: _DESCRIBE + f" Don't exceed {HARD_LIMIT_CHARS} characters.",
    K_LIMITED: _DESCRIBE + " Don't exceed {k} characters.",
}

INSTRUCTION_SHA256: Dict[str, str] = {
    VERBOSE: 'eb93650a846c2fbb69eedb6af87688769fddeb663edb578ccac01ea09c5f4eac',
    COMPOSITE: '118552f2048d4ef7000ab5625bd4af0e40fb5cf82bedb044dcace824f10a4216',
    IMAGE_TO_TEXT: '7ddcda60dc006f71b052153745f2c92ea2e3f3184c4557395ae5a576ac02b0da',
    CONCISE: '0b139b36e8f4a611fbbfcb63866357751f18d7dd874e5898bb855a850b18aaf4',
    HARD_LIMITED: '264fc693add8e2b47ae28915ad1593ae7ccc67d535ff60cfb1c0e75ac6823987',
    K_LIMITED: '3da8abfe722980148e1cac944f4284725ec4e1b0f28bf5ca4549d885ad33c5a8',
}


@dataclass(frozen=True)
class PromptTemplate:
    condition: str
    template_text: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(INSTRUCTIONS[self.condition].encode('utf-8')).hexdigest()

    @property
    def needs_image(self) -> bool:
        return self.condition in IMAGE_CONDITIONS


TEMPLATES: Dict[str, PromptTemplate] = {
    VERBOSE: PromptTemplate(VERBOSE, INSTRUCTIONS[VERBOSE] + "\n\n{original_caption}"),
    COMPOSITE: PromptTemplate(COMPOSITE, INSTRUCTIONS[COMPOSITE] + "\n\n{all_five_captions}"),
    IMAGE_TO_TEXT: PromptTemplate(IMAGE_TO_TEXT, INSTRUCTIONS[IMAGE_TO_TEXT]),
    CONCISE: PromptTemplate(CONCISE, INSTRUCTIONS[CONCISE]),
    HARD_LIMITED: PromptTemplate(HARD_LIMITED, INSTRUCTIONS[HARD_LIMITED]),
    K_LIMITED: PromptTemplate(K_LIMITED, INSTRUCTIONS[K_LIMITED]),
}

GENERATED_CONDITIONS = tuple(TEMPLATES)


def get_template(condition: str) -> PromptTemplate:
    try:
        return TEMPLATES[condition]
    except KeyError:
        raise ValidationError(
            f"No prompt template for condition {condition!r}; generated conditions are "
            f"{', '.join(GENERATED_CONDITIONS)}"
        )


def build_prompt(condition: str, captions: Sequence[str] = (), k: Optional[int] = None) -> str:
    """
    Render the prompt for one generated description

    Args:
        condition: One of GENERATED_CONDITIONS
        captions: The original caption (verbose) or all five reference
            captions (composite); empty for image conditions
        k: Character limit, required for k_limited only

    Returns:
        The template instruction with inputs substituted

    Raises:
        ArityError: wrong number of captions for the condition
        MissingLimit: k_limited without a positive k
        ValidationError: no template for condition, or k given for another condition
    """
    template = get_template(condition)
    captions = list(captions)

    if condition == VERBOSE:
        if len(captions) != 1:
            raise ArityError(f"verbose takes exactly 1 caption, got {len(captions)}")
        return template.template_text.format(original_caption=captions[0])

    if condition == COMPOSITE:
        if len(captions) != COMPOSITE_ARITY:
            raise ArityError(f"composite takes exactly {COMPOSITE_ARITY} captions, got {len(captions)}")
        return template.template_text.format(all_five_captions="\n".join(captions))

    if captions:
        raise ArityError(f"{condition} is prompted with the image, not captions")
    if condition == K_LIMITED:
        if k is None or isinstance(k, bool) or int(k) != k or k < 1:
            raise MissingLimit(f"k_limited needs a positive integer k, got {k!r}")
        return template.template_text.format(k=int(k))
    if k is not None:
        raise ValidationError(f"k only applies to k_limited, not {condition}")
    return template.template_text


def k_limit(reference_caption_lengths: Sequence[int]) -> int:
    """
    Mean reference caption length rounded half-up to whole characters

    Raises:
        EmptyInput: no lengths
    """
    lengths = [int(n) for n in reference_caption_lengths]
    if not lengths:
        raise EmptyInput("k_limit needs at least one caption length")
    if any(n < 0 for n in lengths):
        raise ValidationError("caption lengths must be >= 0")
    # Integer arithmetic keeps exact halves exact
    k = (2 * sum(lengths) + len(lengths)) // (2 * len(lengths))
    if k < 1:
        raise ValidationError("reference captions are empty; k would be 0")
    return k


def char_limit(condition: str, k: Optional[int] = None) -> Optional[int]:
    """Length the prompt asks the model to stay under, if any"""
    if condition == HARD_LIMITED:
        return HARD_LIMIT_CHARS
    if condition == K_LIMITED:
        return k
    return None
