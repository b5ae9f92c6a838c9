"""Build script for the optional compiled kernel core.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile must not fail the install.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible; degrade to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: compiled kernel build skipped ({exc!r}); "
                  "falling back to the pure-Python backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: building {ext.name} failed ({exc!r}); "
                  "falling back to the pure-Python backend")


def _extensions():
    if os.environ.get("EXOPT_NO_EXT"):
        return []
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "exopt._core._fastkern",
        sources=["src/exopt/_core/_fastkern.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": 3})


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
