"""Build the optional Cython kernels.

If Cython or a C compiler is unavailable the package still installs and
``tmpc._kernels`` falls back to the pure-Python implementations.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: kernel extension not built ({exc}); using pure Python", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc}); using pure Python", file=sys.stderr)


def extensions():
    if os.environ.get("TMPC_PURE_PYTHON_BUILD"):
        return []
    try:
        from Cython.Build import cythonize
        import numpy  # noqa: F401
    except ImportError:
        return []
    import numpy as np
    from setuptools import Extension

    ext = Extension(
        "tmpc._kernels._ckernels",
        ["src/tmpc/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
        },
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
