"""Bitset kernel backend selection.

Prefers the compiled Cython extension; falls back to the pure-numpy
implementation when the extension is missing or when the environment
variable ``REBAC_MINER_PURE_PYTHON=1`` forces the fallback.
"""

import os

if os.environ.get("REBAC_MINER_PURE_PYTHON") == "1":
    from rebacminer._core._bitops_py import (  # noqa: F401
        BACKEND,
        and_reduce,
        popcount,
        popcount_and,
        popcount_andnot,
    )
else:
    try:
        from rebacminer._core._bitops import (  # type: ignore  # noqa: F401
            BACKEND,
            and_reduce,
            popcount,
            popcount_and,
            popcount_andnot,
        )
    except ImportError:
        from rebacminer._core._bitops_py import (  # noqa: F401
            BACKEND,
            and_reduce,
            popcount,
            popcount_and,
            popcount_andnot,
        )
