"""Build script for the optional compiled dissimilarity kernel.

The package is pure Python with a numpy fallback for every numeric
routine; the Cython extension only accelerates the batch compound
dissimilarity evaluation. If Cython or a C compiler is unavailable the
install proceeds without the extension and the fallback is selected at
import time.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"compiled kernel skipped ({exc}); using the numpy fallback")
        return []
    ext = Extension(
        "rfmloc._kernels._cdm",
        ["src/rfmloc/_kernels/_cdm.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


class optional_build_ext(build_ext):
    """Never fail the install over the accelerator."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            warnings.warn(f"compiled kernel skipped ({exc}); using the numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"building {ext.name} failed ({exc}); using the numpy fallback")


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})
