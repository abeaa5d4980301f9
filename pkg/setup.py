import os

import numpy as np
from setuptools import Extension, setup

# The max-flow kernel is optional; the package falls back to the pure-Python
# solver when the extension is missing, so a failed compile must not abort
# the install.
try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("TIMELINEKIT_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "timelinekit.segment._bk",
                ["src/timelinekit/segment/_bk.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
