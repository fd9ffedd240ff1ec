"""Build script for the optional compiled sampling kernel.

The package is fully functional without the extension: kmdp._kernels falls
back to a pure-Python implementation at import time. Set KMDP_PURE_PYTHON=1
to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

extensions = []
if not os.environ.get("KMDP_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = cythonize(
            [
                Extension(
                    "kmdp._kernels._ckernels",
                    ["src/kmdp/_kernels/_ckernels.pyx"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=extensions)
