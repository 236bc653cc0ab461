from .factory import get_generation_client
from .http_client import HTTPGenerationClient
from .interface import GenerationClient

__all__ = ['GenerationClient', 'HTTPGenerationClient', 'get_generation_client']
