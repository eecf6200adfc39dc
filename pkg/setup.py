import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("EMOCLASS_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            "emoclass._ckernels",
            ["src/emoclass/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )
        ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
