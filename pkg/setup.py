"""Build script: compiles the optional fast kernel extension.

The package works without the extension (a pure-NumPy backend is selected
at import time), so a failed compile only costs performance.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "gridransac._kernels._fastback",
                ["src/gridransac/_kernels/_fastback.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
