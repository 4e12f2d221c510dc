import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; spam_forge falls back to numpy kernels
    cythonize = None

# -ffp-contract=off keeps a*b+c unfused so the kernel rounds exactly like numpy.
compile_args = ["-O3", "-ffp-contract=off"]
if os.environ.get("SPAM_FORGE_NATIVE", "1") != "0":
    compile_args += ["-march=native"]

ext_modules = []
if cythonize is not None and os.environ.get("SPAM_FORGE_PURE") != "1":
    ext_modules = cythonize(
        [
            Extension(
                "spam_forge._kernels",
                ["src/spam_forge/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=compile_args,
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
