"""Build script for the optional compiled QP core.

The package works without the extension (a pure-numpy solver is selected at
import time), but the compiled core is what makes large Monte Carlo batches
practical.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mergecbf._qp_fast",
                ["src/mergecbf/_qp_fast.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
