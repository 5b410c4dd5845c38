import os

from setuptools import Extension, setup

# Build with: pip install -e . --no-build-isolation
# DEBTSCHED_NO_EXT=1 skips the compiled core; the package then runs on the pure-Python kernels.

ext_modules = []
if not os.environ.get("DEBTSCHED_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "debtsched._ckernel",
                ["src/debtsched/_ckernel.pyx"],
                # no fast-math / contraction: the compiled and pure-Python kernels must agree bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
