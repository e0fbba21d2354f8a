import subprocess
import sys
import venv
from pathlib import Path

import pytest


ROOT = Path(__file__).resolve().parent.parent


def _venv_paths(tmp_path: Path):
    if sys.platform.startswith("win"):
        bindir = tmp_path / "Scripts"
        python = bindir / "python.exe"
        vnlab = bindir / "vnlab.exe"
    else:
        bindir = tmp_path / "bin"
        python = bindir / "python"
        vnlab = bindir / "vnlab"
    return python, vnlab


def test_vnlab_entrypoint_installs_and_reports_help(tmp_path):
    distdir = tmp_path / "dist"
    distdir.mkdir()
    subprocess.run(
        [
            sys.executable,
            "-m",
            "pip",
            "wheel",
            "--no-cache-dir",
            "--no-deps",
            "--no-build-isolation",
            "--wheel-dir",
            str(distdir),
            str(ROOT),
        ],
        check=True,
    )
    wheel = next(distdir.glob("vnlab-*.whl"))

    envdir = tmp_path / "venv"
    venv.create(envdir, with_pip=True, system_site_packages=True)
    python, vnlab = _venv_paths(envdir)

    subprocess.run(
        [str(python), "-m", "pip", "install", "--no-deps", str(wheel)],
        check=True,
    )

    result = subprocess.run([str(vnlab), "--help"], check=True, capture_output=True, text=True)
    assert "usage: vnlab " in result.stdout
    assert "check-square" in result.stdout


def test_pyproject_keeps_base_dependencies_numeric():
    tomllib = pytest.importorskip("tomllib")
    pyproject = tomllib.loads((ROOT / "pyproject.toml").read_text(encoding="utf-8"))
    deps = pyproject["project"]["dependencies"]
    optional = pyproject["project"]["optional-dependencies"]

    names = {pkg.split(">=")[0] for pkg in deps}
    assert names == {"numpy", "scipy", "pyyaml"}
    assert any(pkg.startswith("pytest") for pkg in optional["dev"])
    assert any(pkg.startswith("hypothesis") for pkg in optional["dev"])
    assert pyproject["project"]["scripts"]["vnlab"] == "vnlab.cli:main"


def test_readme_documents_the_commands():
    readme = (ROOT / "README.md").read_text(encoding="utf-8")
    for command in ("check-square", "cmi", "entropy", "ucr", "measure", "scan", "demo"):
        assert f"vnlab {command}" in readme
    assert "vnlab.example.yaml" in readme
