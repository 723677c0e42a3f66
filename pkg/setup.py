import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; cmrf falls back to _pykernels
    cythonize = None

ext_modules = []
if cythonize is not None:
    random_lib = os.path.join(os.path.dirname(numpy.__file__), "random", "lib")
    ext = Extension(
        "cmrf._ckernels",
        ["src/cmrf/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        library_dirs=[random_lib],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
