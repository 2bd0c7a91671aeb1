import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        extdir = Path(self.get_ext_fullpath(ext.name)).parent.resolve()
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        import pybind11

        cfg = "Release"
        cmake_args = [
            f"-DCMAKE_BUILD_TYPE={cfg}",
            f"-DPython3_EXECUTABLE={sys.executable}",
            f"-Dpybind11_DIR={pybind11.get_cmake_dir()}",
            "-DRAP_BUILD_PYTHON=ON",
            "-DRAP_BUILD_TESTS=OFF",
            "-DRAP_BUILD_CLI=OFF",
            f"-DRAP_PY_OUTDIR={extdir}",
        ]
        src = Path(__file__).parent.resolve()
        subprocess.run(["cmake", str(src), *cmake_args], cwd=build_dir, check=True)
        jobs = os.environ.get("CMAKE_BUILD_PARALLEL_LEVEL", str(os.cpu_count() or 1))
        subprocess.run(
            ["cmake", "--build", ".", "--target", "_rap", "-j", jobs],
            cwd=build_dir,
            check=True,
        )


setup(ext_modules=[CMakeExtension("rap._rap")], cmdclass={"build_ext": CMakeBuild})
