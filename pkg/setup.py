import os

from setuptools import Extension, setup

# The compiled bitset kernel is optional: if Cython or a C compiler is
# unavailable the package falls back to the pure-numpy implementation,
# selected at import time in rebacminer._core.
ext_modules = []
if os.environ.get("REBAC_MINER_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext = Extension(
            "rebacminer._core._bitops",
            ["src/rebacminer/_core/_bitops.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        pass

setup(ext_modules=ext_modules)
