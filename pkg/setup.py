"""Build script for the optional compiled time-stepping core.

The package is pure Python plus one Cython extension holding the hot
per-step kernels.  When Cython or a C compiler is unavailable the
extension is skipped and the package falls back to the numpy kernels at
import time, so installation never hard-fails on the build step.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    import numpy

    ext = Extension(
        "pulsegate._kernels._core",
        sources=["src/pulsegate/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
