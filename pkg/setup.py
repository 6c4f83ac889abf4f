"""Build the optional Cython kernels; the package falls back to numpy without them."""
import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("RBSDE_NO_EXTENSION") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        openmp = [] if sys.platform == "darwin" else ["-fopenmp"]
        ext = Extension(
            "rbsde_horizon._ckernels",
            ["src/rbsde_horizon/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3", "-ffp-contract=off"] + openmp,
            extra_link_args=openmp,
        )
        ext_modules = cythonize(
            [ext], compiler_directives={"language_level": "3"}, quiet=True
        )
    except ImportError as exc:  # build without the extension
        print(f"warning: compiled kernels skipped ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
