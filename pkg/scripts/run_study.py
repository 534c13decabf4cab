"""Full study over N=2..8 with the default settings; extra flags pass through.

    python3 scripts/run_study.py --out results --cache-dir .cache/spectra
"""
import sys

from memtherm.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:] or ["--n-max", "8", "-v"]))
