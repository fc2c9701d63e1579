"""Pairwise-distance kernels with a compiled fast path.

``pair_dist_sum`` and ``pair_dist_sum_weighted`` are the inner loop of the
annuli fitness function. The Cython build is preferred when available; the
numpy fallback computes identical values blockwise. ``BACKEND`` records which
one was selected at import.
"""

try:
    from ._compiled import pair_dist_sum, pair_dist_sum_weighted

    BACKEND = "compiled"
except ImportError:  # extension not built
    from ._fallback import pair_dist_sum, pair_dist_sum_weighted

    BACKEND = "numpy"

__all__ = ["pair_dist_sum", "pair_dist_sum_weighted", "BACKEND"]
