"""Build script for the compiled distance/voting kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only costs speed, not functionality.
Skip the extension entirely with IMPOSTORNET_NO_EXT=1.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("IMPOSTORNET_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "impostornet._kernels._core",
                    ["src/impostornet/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-march=native", "-ffast-math"],
                    extra_link_args=["-lmvec", "-lm"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        print("Cython not available; building without the compiled kernels")

setup(ext_modules=ext_modules)
