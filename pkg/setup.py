import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are optional: if the build fails (or Cython is
# missing) the package falls back to the pure-numpy implementations in
# uavfed._purecore, selected at import time by uavfed.backend.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "uavfed._fastcore",
                ["src/uavfed/_fastcore.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
