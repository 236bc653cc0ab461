"""
Generation Client Interface

Defines the abstract interface that all text-generation clients must implement
"""

from abc import ABC, abstractmethod
from typing import Optional


class GenerationClient(ABC):
    """
    Abstract base class for text-generation clients

    A client turns one rendered prompt (plus an optional image) into one
    description. Retries and credentials are the client's business; callers
    only see the final text or an exception.
    """

    @abstractmethod
    def generate(self, prompt: str, image_b64: Optional[str] = None, seed: Optional[int] = None) -> str:
        """
        Generate one description

        Args:
            prompt: Fully rendered prompt
            image_b64: Base64-encoded image for image-conditioned prompts
            seed: Per-job seed for services that support seeded decoding

        Returns:
            The generated text, unmodified

        Raises:
            BackendUnavailable: service still failing after retries
            ProtocolError: service replied with something that is not a generation
        """
        pass

    @abstractmethod
    def model_tag(self) -> str:
        """
        Identify the model and decoding options for provenance

        Returns:
            A stable string such as 'gpt-4o-mini;temperature=0.7'
        """
        pass

    @abstractmethod
    def close(self):
        """Release any held connections"""
        pass

    @abstractmethod
    def get_client_type(self) -> str:
        """
        Get the client type identifier

        Returns:
            Client type string ('http', ...)
        """
        pass
