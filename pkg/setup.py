import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

setup(
    ext_modules=cythonize(
        [
            Extension(
                "spdegibbs._kernel",
                ["src/spdegibbs/_kernel.pyx"],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                include_dirs=[numpy.get_include()],
                define_macros=[("_GNU_SOURCE", "1")],
            )
        ],
        language_level=3,
    )
)
