"""Hot numerical kernels with a compiled core and a pure-numpy fallback.

The compiled extension (Cython) is preferred when importable; setting the
environment variable MACROPLACE_PURE_PYTHON=1 forces the fallback. Both
implementations share one contract and are cross-checked in the test suite;
``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

from . import _py

if os.environ.get("MACROPLACE_PURE_PYTHON"):
    impl = _py
else:
    try:
        from . import _ext as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _py

USING_COMPILED = impl.IMPL_NAME == "compiled"

hpwl_sum = impl.hpwl_sum
route_usage = impl.route_usage
density_add = impl.density_add
feasibility_mask = impl.feasibility_mask
fd_run = impl.fd_run

__all__ = [
    "impl",
    "USING_COMPILED",
    "hpwl_sum",
    "route_usage",
    "density_add",
    "feasibility_mask",
    "fd_run",
]
