"""Build script: compiles the optional log-domain scaling kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so the extension is marked optional and a missing
compiler degrades to the pure-Python build instead of failing the install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext = Extension(
        "s3ot.backend._ckernels",
        ["src/s3ot/backend/_ckernels.pyx"],
        extra_compile_args=["-O3"],
    )
    ext.optional = True
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
    for e in ext_modules:
        e.optional = True
except ImportError:
    pass

setup(ext_modules=ext_modules)
