"""Build script: compiles the optional Cox kernel extension when Cython and a
C toolchain are available, otherwise installs with the pure-NumPy fallback."""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class _OptionalBuildExt(build_ext):
    """Skip extension compilation on failure instead of aborting the install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler or toolchain missing
            print(f"warning: skipping compiled kernel build ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "the pure-Python kernel will be used")


def _extensions():
    if os.environ.get("FRAILTY_METRICS_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "frailty_metrics.survival._kernel",
        ["src/frailty_metrics/survival/_kernel.pyx"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions(), cmdclass={"build_ext": _OptionalBuildExt})
