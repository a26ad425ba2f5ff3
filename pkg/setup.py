import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; _fallback is used at import time
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("DEFINETTI_NO_EXT"):
    np_inc = np.get_include()
    ext_modules = cythonize(
        [
            Extension(
                "definetti._core",
                sources=["src/definetti/_core.pyx", "src/definetti/_talbot_q.c"],
                include_dirs=[np_inc, "src/definetti"],
                library_dirs=[
                    os.path.join(np_inc, "..", "..", "random", "lib"),
                    os.path.join(np_inc, "..", "lib"),
                ],
                libraries=["npyrandom", "npymath", "quadmath", "m"],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
