import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SPATOCC_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "spatocc.learners._ckern",
                    ["src/spatocc/learners/_ckern.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython available: install pure-Python only, the kernel
        # backend falls back at import time.
        ext_modules = []

setup(ext_modules=ext_modules)
