"""Build hook for the optional compiled integration kernel.

The package is pure Python unless Cython and a C compiler are available,
in which case `attbench.core._kernels_cy` is built. A missing or failed
build is not an error: `attbench.core` falls back to the numpy kernels
at import time.
"""

import os

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/attbench/core/_kernels_cy.pyx",
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        # fp-contract off keeps the C arithmetic bit-identical to the
        # numpy fallback (no FMA fusing of a*b+c).
        if os.name == "posix":
            ext.extra_compile_args.extend(["-O3", "-ffp-contract=off"])
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
