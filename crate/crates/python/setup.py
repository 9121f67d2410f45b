"""Build glue: compile the Rust extension with cargo and ship the cdylib.

setuptools-rust is not assumed to be available, so this drives cargo
directly: `cargo build --release -p nomalink-python --features
extension-module` produces an abi3 cdylib which is copied to the package as
`_native.abi3.so`.
"""

import os
import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

WORKSPACE_ROOT = Path(__file__).resolve().parent.parent.parent


class CargoBuildExt(build_ext):
    def build_extension(self, ext):
        cargo = shutil.which("cargo") or str(
            Path.home() / ".cargo" / "bin" / "cargo"
        )
        subprocess.check_call(
            [
                cargo,
                "build",
                "--release",
                "-p",
                "nomalink-python",
                "--features",
                "extension-module",
            ],
            cwd=WORKSPACE_ROOT,
        )
        target_dir = Path(
            os.environ.get("CARGO_TARGET_DIR", WORKSPACE_ROOT / "target")
        )
        artifact = target_dir / "release" / "libnomalink_native.so"
        destination = Path(self.get_ext_fullpath(ext.name))
        destination.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(artifact, destination)

    def get_ext_filename(self, fullname):
        return fullname.replace(".", os.sep) + ".abi3.so"


setup(
    ext_modules=[Extension("nomalink._native", sources=[])],
    cmdclass={"build_ext": CargoBuildExt},
)
