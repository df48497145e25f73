"""Builds the pybind11 extension from the C++ core sources directly."""

from glob import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

setup(
    ext_modules=[
        Pybind11Extension(
            "emoseg._core",
            sorted(glob("src/*.cpp")) + ["python/bindings.cpp"],
            include_dirs=["include"],
            cxx_std=20,
            extra_compile_args=["-O2"],
        )
    ],
    cmdclass={"build_ext": build_ext},
)
