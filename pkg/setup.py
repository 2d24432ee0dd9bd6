"""Builds the optional compiled kernel extension.

The package is fully functional without it: evtrack.kernels falls back to
vectorized numpy implementations when the extension is missing.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Tolerate a failing extension build; the numpy fallback takes over."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain
            print(f"warning: skipping compiled kernels ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc})")


try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/evtrack/kernels/_accel.pyx",
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
        ext.extra_compile_args = ["-O3"]
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
