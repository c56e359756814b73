"""Build shim: compiles the optional native kernel extension.

The package works without the extension (a numpy reference backend is
selected at import time), so a missing Cython toolchain degrades the
build instead of failing it.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "drivefit._kernels._native",
                ["src/drivefit/_kernels/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
