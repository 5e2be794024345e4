"""Build the optional C extension for the linearization enumerator.

The package works without it: conflow.verify falls back to the pure-Python
kernel when the compiled module is missing.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "conflow._permkernel",
                ["src/conflow/_permkernel.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover
    sys.stderr.write(f"conflow: building without compiled kernel ({exc})\n")

setup(ext_modules=ext_modules)
