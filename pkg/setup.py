"""Build script: compiles the optional Cython kernel core.

The compiled extension is optional.  If Cython or a C compiler is missing the
package still installs and falls back to the pure-NumPy kernel lane at import
time (see instasim.kernels).
"""

import os
import sys

from setuptools import setup

ext_modules = []
try:
    if not os.path.exists("src/instasim/kernels/_core.pyx"):
        raise ImportError("Cython source not present")
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "instasim.kernels._core",
                ["src/instasim/kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write(f"instasim: skipping Cython core build ({exc}); "
                     "the NumPy kernel lane will be used.\n")

setup(ext_modules=ext_modules)
