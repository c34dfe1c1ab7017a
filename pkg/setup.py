"""Build script for the optional compiled kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed extension build downgrades to a warning instead
of aborting the install.
"""

import sys

from setuptools import Extension, setup


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"jacdeform: skipping compiled kernels ({exc})", file=sys.stderr)
        return []
    ext = Extension(
        "jacdeform._kernels._speedups",
        sources=["src/jacdeform/_kernels/_speedups.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions())
