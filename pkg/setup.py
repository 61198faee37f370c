"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any build failure here downgrades to a pure
Python install instead of aborting.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "coverlab._kernels._native",
        ["src/coverlab/_kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level=3)
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"coverlab: skipping native kernel build ({exc!r}); "
          "the NumPy fallback will be used")

setup(ext_modules=ext_modules)
