"""Build script: compiles the optional numerics extension.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time); the compiled kernels only make the
iterative solvers faster.  Build in place with

    python setup.py build_ext --inplace
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ialab.numerics._ckernels",
                ["src/ialab/numerics/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps the compiled kernels bit-identical
                # to the pure-Python twin (no FMA contraction).
                extra_compile_args=["-O2", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
