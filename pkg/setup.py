import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "npmle._ckernels",
        ["src/npmle/_ckernels.pyx"],
        include_dirs=[np.get_include(), "src/npmle"],
        depends=["src/npmle/_kernels_impl.h"],
        extra_compile_args=["-O3", "-march=native", "-ffast-math"],
        extra_link_args=["-lmvec"],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
