"""Build the optional compiled kernels.

The extension is marked optional: when Cython or a C compiler is missing the
package still installs and ``anisovoro.kernels`` falls back to numpy.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None:
    extensions = [
        Extension(
            "anisovoro._ckernels",
            ["src/anisovoro/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3", "-fopenmp", "-ffp-contract=off"],
            extra_link_args=["-fopenmp"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            optional=True,
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
