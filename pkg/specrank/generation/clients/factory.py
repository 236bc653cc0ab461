"""
Generation Client Factory

Provides factory functions for creating generation clients based on configuration
"""

from typing import Optional

from specrank.config import Config, GenerationOptions, get_generation_token
from specrank.errors import ValidationError
from .http_client import HTTPGenerationClient
from .interface import GenerationClient


def get_generation_client(
    options: Optional[GenerationOptions] = None,
    client_type: str = 'http',
    **kwargs
) -> GenerationClient:
    """
    Factory function to create the appropriate generation client

    Args:
        options: Generation options (endpoint, model, temperature)
        client_type: Client implementation ('http')
        **kwargs: Client-specific options (session, timeout, sleep)

    Returns:
        GenerationClient instance

    Environment Variables:
        SPECRANK_GEN_ENDPOINT: used when options.endpoint is unset
        SPECRANK_GEN_TOKEN: bearer token for the generation service

    Usage:
        client = get_generation_client(GenerationOptions(endpoint='http://...', model='gpt-4o-mini'))
    """
    options = options or GenerationOptions()

    if client_type == 'http':
        endpoint = options.endpoint or Config.GEN_ENDPOINT
        if not endpoint:
            raise ValidationError("No generation endpoint: set [generation] endpoint or SPECRANK_GEN_ENDPOINT")
        return HTTPGenerationClient(
            endpoint=endpoint,
            model=options.model,
            token=kwargs.pop('token', None) or get_generation_token(),
            temperature=options.temperature,
            **kwargs
        )

    else:
        raise ValidationError(f"Unsupported generation client: {client_type}")
