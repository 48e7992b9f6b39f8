"""Build the optional compiled kernels; the package works without them.

OSNN_PORTABLE_BUILD=1 drops -march=native (e.g. when building wheels).
"""

import os

from setuptools import setup

ext_modules = []
try:
    import numpy  # noqa: F401
    from Cython.Build import cythonize
    from setuptools import Extension

    # reassociation lets the compiler vectorize the dot-product reductions;
    # NaN/Inf semantics are left intact (no finite-math assumptions)
    flags = ["-O3", "-fno-math-errno", "-fno-trapping-math", "-fno-signed-zeros", "-fassociative-math"]
    if not os.environ.get("OSNN_PORTABLE_BUILD"):
        flags.append("-march=native")
    ext_modules = cythonize(
        [Extension("osnn.kernels._ckernels", ["src/osnn/kernels/_ckernels.pyx"], extra_compile_args=flags)],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("Cython not available; installing the numpy kernels only")

setup(ext_modules=ext_modules)
