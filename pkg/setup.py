"""Build the optional compiled snapping kernel.

Set TAXIAQ_NO_EXT=1 to skip compilation; the package then runs on the
pure-Python/numpy kernel.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TAXIAQ_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "taxiaq._csnap",
                    ["src/taxiaq/_csnap.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: results must match the numpy path bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
