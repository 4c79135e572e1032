import os

from setuptools import Extension, setup

# The compiled kernels are optional: without a working Cython/C toolchain the
# package falls back to the numpy reference kernels at import time.
ext_modules = []
if os.environ.get("VOXELFORM_SKIP_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "voxelform.kernels._compiled",
                    ["src/voxelform/kernels/_compiled.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
