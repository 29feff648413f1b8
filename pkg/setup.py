"""Build script: compiles the optional Cython kernel extension.

The extension accelerates the loop-bound kernels (dense simplex pivoting,
k-NN voting).  If the build toolchain is unavailable, set ANML_SKIP_EXTENSION=1
and the package falls back to the pure-numpy implementations at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("ANML_SKIP_EXTENSION"):
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "anml._kernels._fast",
                ["src/anml/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
