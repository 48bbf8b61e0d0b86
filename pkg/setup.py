import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# SWARMSCA_NO_EXT=1 skips the compiled core; the package then runs on the numpy fallback.
BUILD_EXT = cythonize is not None and not int(os.getenv("SWARMSCA_NO_EXT", "0"))

ext_modules = []
if BUILD_EXT:
    extensions = [
        Extension(
            "swarmsca._ckernels",
            ["src/swarmsca/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            # no FMA contraction: scores must match the sequential reference bit-for-bit
            extra_compile_args=["-O3", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )

setup(ext_modules=ext_modules)
