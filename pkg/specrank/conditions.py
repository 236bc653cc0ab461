"""
Description condition labels

Built-in conditions cover the human caption, the three rephrasings used to
build the corpus and the three length-constrained model conditions. Anything
else must be spelled ``custom:<tag>``.
"""

from typing import Iterable, List

from specrank.errors import ValidationError

ORIGINAL = 'original'
VERBOSE = 'verbose'
COMPOSITE = 'composite'
IMAGE_TO_TEXT = 'image_to_text'
CONCISE = 'concise'
HARD_LIMITED = 'hard_limited'
K_LIMITED = 'k_limited'

BUILTIN_CONDITIONS = (
    ORIGINAL, VERBOSE, COMPOSITE, IMAGE_TO_TEXT, CONCISE, HARD_LIMITED, K_LIMITED
)

# Conditions whose text is produced from the reference captions
CAPTION_CONDITIONS = (VERBOSE, COMPOSITE)

# Conditions whose prompt is sent together with the image itself
IMAGE_CONDITIONS = (IMAGE_TO_TEXT, CONCISE, HARD_LIMITED, K_LIMITED)

CUSTOM_PREFIX = 'custom:'


def is_valid_condition(name) -> bool:
    """True for a built-in condition or a non-empty custom:<tag>"""
    if not isinstance(name, str):
        return False
    if name in BUILTIN_CONDITIONS:
        return True
    return name.startswith(CUSTOM_PREFIX) and len(name) > len(CUSTOM_PREFIX)


def validate_condition(name) -> str:
    if not is_valid_condition(name):
        raise ValidationError(
            f"Unknown condition {name!r}; expected one of "
            f"{', '.join(BUILTIN_CONDITIONS)} or custom:<tag>"
        )
    return name


def parse_conditions(value) -> List[str]:
    """Parse a comma separated string (or iterable) into validated condition names"""
    if isinstance(value, str):
        items: Iterable[str] = [part.strip() for part in value.split(',')]
    else:
        items = value
    conditions = []
    for item in items:
        if not item:
            continue
        validate_condition(item)
        if item not in conditions:
            conditions.append(item)
    return conditions
