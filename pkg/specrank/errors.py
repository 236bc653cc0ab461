"""
Exception hierarchy for specrank

Every error raised by the library derives from SpecRankError. Errors caused by
bad input also derive from ValueError so callers that already guard on
ValueError keep working. The CLI maps each class to its exit code.
"""

from typing import Optional


EXIT_VALIDATION = 1
EXIT_BACKEND = 2


class SpecRankError(Exception):
    """Base class for all specrank errors"""

    exit_code = EXIT_VALIDATION


# ========== Input / Dataset Errors ==========

class ValidationError(SpecRankError, ValueError):
    """Configuration or argument failed validation"""


class ParseError(SpecRankError, ValueError):
    """A manifest or record line could not be parsed"""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DuplicateId(SpecRankError, ValueError):
    """An image or description id appears more than once"""


class DanglingTarget(SpecRankError, ValueError):
    """A description refers to an image that is not available"""


class MissingArtifact(SpecRankError, FileNotFoundError):
    """An upstream file a command depends on does not exist"""


class EmptyInput(SpecRankError, ValueError):
    """An operation received no data to work on"""


# ========== Vector / Storage Errors ==========

class DegenerateVector(SpecRankError, ValueError):
    """Vector is zero or contains non-finite values"""


class DimMismatch(SpecRankError, ValueError):
    """Vectors or matrices disagree on dimensionality"""


class FormatError(SpecRankError, ValueError):
    """Embedding file is corrupt or truncated"""


class MissingEmbedding(SpecRankError, KeyError):
    """A non-excluded description or image has no embedding"""

    def __str__(self):
        return str(self.args[0]) if self.args else ''


# ========== Backend Errors ==========

class BackendUnavailable(SpecRankError):
    """Remote service still failing after all retries"""

    exit_code = EXIT_BACKEND


class ProtocolError(SpecRankError):
    """Remote service answered with a malformed response"""

    exit_code = EXIT_BACKEND


# ========== Statistics Errors ==========

class SingularDesign(SpecRankError, ValueError):
    """Design matrix (or information matrix) is not full rank"""


class NotNested(SpecRankError, ValueError):
    """Two regression fits are not nested on the same response"""


class SeparationDetected(SpecRankError, ValueError):
    """Logistic regression data are completely separated"""


class DegenerateInput(SpecRankError, ValueError):
    """Input has zero variance where variance is required"""


# ========== Generation Errors ==========

class ArityError(SpecRankError, ValueError):
    """Prompt received the wrong number of captions"""


class MissingLimit(SpecRankError, ValueError):
    """k-limited prompt requested without a character limit"""


class EmptyGeneration(SpecRankError):
    """Generation service returned no text"""
