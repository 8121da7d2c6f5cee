"""Build script for the compiled feedforward-net kernels.

The extension is optional: if Cython or a C compiler is unavailable the
package installs anyway and `aanetsim.nnet` falls back to the numpy
kernels at import time.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("aanetsim._mlp_cy", ["src/aanetsim/_mlp_cy.pyx"],
                   extra_compile_args=["-O3"])],
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
