import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# Compiled kernels are an optimization only; biformer3d.kernels falls back to
# the pure-numpy implementation when the extension is absent.
extensions = [
    Extension(
        "biformer3d.kernels._core",
        ["src/biformer3d/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
