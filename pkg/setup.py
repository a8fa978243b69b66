import numpy as np
from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "acssil._kernels._fastcore",
                ["src/acssil/_kernels/_fastcore.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off: keep mul+add rounding identical to the
                # numpy fallback so the two backends agree bitwise on ties
                extra_compile_args=[
                    "-O3",
                    "-march=native",
                    "-funroll-loops",
                    "-ffp-contract=off",
                ],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
