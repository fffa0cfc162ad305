import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("HANDOVER_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "handover._ckernels",
                    ["src/handover/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: keeps float results equal to the numpy fallback
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
