from setuptools import Extension, setup

import numpy

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "canopynav._kernels_cy",
                ["src/canopynav/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
