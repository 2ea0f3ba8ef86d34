"""Hot numeric kernels with a compiled core and a pure-Python fallback.

The Cython extension is preferred when it was built; otherwise the pure
implementations are used transparently. ``BACKEND`` records which one is
active so reports and benchmarks can name it.
"""

try:
    from lumionsim._kernels._core import fill_dp, grid_bfs

    BACKEND = "compiled"
except ImportError:  # extension not built; fall back to pure Python
    from lumionsim._kernels._pure import fill_dp, grid_bfs

    BACKEND = "python"

__all__ = ["BACKEND", "fill_dp", "grid_bfs"]
