from .charts import (
    cdf_frame, mean_rank_by_length_figure, preference_figure, rank_cdf_figure, write_svg
)
from .tables import provenance_header, read_table, write_table

__all__ = [
    'cdf_frame',
    'mean_rank_by_length_figure',
    'preference_figure',
    'rank_cdf_figure',
    'write_svg',
    'provenance_header',
    'read_table',
    'write_table',
]
