"""Build script. The compiled core is optional: if Cython is unavailable or
the extension fails to build, the package installs pure-Python and selects
the numpy fallback at import time."""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DIPKIT_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("dipkit._core", ["src/dipkit/_core.pyx"])],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
