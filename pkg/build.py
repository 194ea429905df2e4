"""
Tomodual Build Script
Creates a standalone executable using PyInstaller.
"""

import subprocess
import sys
from pathlib import Path


def build():
    """Build the Tomodual executable."""

    root_dir = Path(__file__).parent
    src_dir = root_dir / "src"
    main_script = src_dir / "main.py"
    app_dir = root_dir / "app"

    # The CLI subcommands need a console, so no --windowed here
    cmd = [
        sys.executable, "-m", "PyInstaller",
        "--onefile",
        "--name", "Tomodual",           # Avoid 'app' to prevent module conflict
        "--distpath", str(app_dir),
        "--add-data", f"{src_dir}{';' if sys.platform == 'win32' else ':'}src",
        "--hidden-import", "app",
        "--hidden-import", "ui",
        "--hidden-import", "ui.components",
        "--hidden-import", "ui.experiments",
        "--hidden-import", "core",
        "--collect-submodules", "customtkinter",
        "--collect-submodules", "scipy.sparse",
        str(main_script),
    ]

    print("[BUILD] Building Tomodual...")
    print(f"   Command: {' '.join(cmd)}")
    print()

    result = subprocess.run(cmd, cwd=root_dir)

    if result.returncode == 0:
        print()
        print("[SUCCESS] Build successful!")
        print(f"[OUTPUT] Executable in: {app_dir}")
    else:
        print()
        print("[ERROR] Build failed!")
        sys.exit(1)


if __name__ == "__main__":
    build()
