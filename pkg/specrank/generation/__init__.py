"""
Description variant generation

Renders the frozen prompt templates, sends them to a generation client and
keeps a resumable job ledger.
"""

from .clients import GenerationClient, HTTPGenerationClient, get_generation_client
from .ledger import GenerationJob, JobLedger
from .prompts import INSTRUCTIONS, TEMPLATES, PromptTemplate, build_prompt, k_limit
from .runner import GenerationResult, generate_variants, plan_jobs

__all__ = [
    'GenerationClient',
    'HTTPGenerationClient',
    'get_generation_client',
    'GenerationJob',
    'JobLedger',
    'INSTRUCTIONS',
    'TEMPLATES',
    'PromptTemplate',
    'build_prompt',
    'k_limit',
    'GenerationResult',
    'generate_variants',
    'plan_jobs',
]
