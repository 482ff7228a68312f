import json
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent

SAMPLE_CONFIG = {
    "n_rounds": 4096,
    "qber_threshold": 0.11,
    "sample_fraction": 0.5,
    "eps_pe": 1e-6,
    "eps_cor": 1e-12,
    "eps_sec": 1e-9,
    "seed": 20240229,
    "eve": "intercept:random:0.25",
    "noise": {"p_x": 0.01, "p_y": 0.0, "p_z": 0.01, "p_loss": 0.05},
}


def install_requirements(requirements: Path = ROOT / "requirements.txt") -> bool:
    """pip-install the simulator stack into the running interpreter"""
    command = [sys.executable, "-m", "pip", "install", "--quiet", "-r", str(requirements)]
    result = subprocess.run(command, capture_output=True, text=True)
    if result.returncode != 0:
        print(f"[ERROR] pip exited with {result.returncode} for {requirements.name}")
        print(result.stderr.strip())
        return False
    print(f"[OK] Installed numpy, pandas, scipy, python-dotenv and pytest from {requirements.name}")
    return True


def create_env_file():
    """Copy .env.example to .env unless one exists"""
    env_file = ROOT / ".env"
    if env_file.exists():
        print("[OK] .env already present, left unchanged")
        return
    shutil.copyfile(ROOT / ".env.example", env_file)
    print("[OK] Created .env from .env.example")


def create_sample_config():
    """Write a sample protocol config for `qkdsim.py run --config`"""
    config_file = ROOT / "qkdsim_config.json"
    if config_file.exists():
        print("[OK] qkdsim_config.json already present, left unchanged")
        return
    config_file.write_text(json.dumps(SAMPLE_CONFIG, indent=2) + "\n", encoding="utf-8")
    print("[OK] Sample config written to qkdsim_config.json")


def main():
    print("Setting up qkdsim...")

    if install_requirements():
        create_env_file()
        create_sample_config()
        (ROOT / "results").mkdir(exist_ok=True)
        print("\nSetup complete! Try:")
        print("  python qkdsim.py run --config qkdsim_config.json")
        print("  pytest")
    else:
        print("\nSetup failed. Please install requirements manually.")


if __name__ == "__main__":
    main()
