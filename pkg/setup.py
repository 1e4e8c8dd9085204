"""Build script for the optional compiled dispatch kernel.

The package installs and runs without a compiler; `coarsematch._backend`
falls back to the pure-Python kernel when the extension is absent.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "coarsematch._kernels",
                sources=["src/coarsematch/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
