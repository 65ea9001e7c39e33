import warnings

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "uegroup._kernels",
                ["src/uegroup/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fno-math-errno"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ModuleNotFoundError:
    warnings.warn("cython/numpy missing, building pure-Python uegroup only")

setup(ext_modules=ext_modules)
