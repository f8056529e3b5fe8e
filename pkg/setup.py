"""Build hook for the optional compiled kernels.

The extension is marked optional: when Cython or a C compiler is missing
the package still installs and falls back to the numpy kernels.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # no build tooling; pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("cranbf._ckernels", ["src/cranbf/_ckernels.pyx"],
                   include_dirs=[np.get_include()],
                   define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                   extra_compile_args=["-O3"],
                   optional=True)],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
