"""Run the command-line pipeline into a directory and hash the resulting tree."""

import hashlib
import os
from pathlib import Path

from showbook.cli import main


def run(argv, cwd) -> int:
    old = os.getcwd()
    os.chdir(cwd)
    try:
        return main([str(a) for a in argv])
    finally:
        os.chdir(old)


def full_pipeline(cwd, rows=None, seed=1) -> None:
    gen = ["--seed", seed, "generate", "--out", "gen"] + (["--rows", rows] if rows else [])
    steps = [
        gen,
        ["--seed", seed, "train", "gen/corpus.csv", "--schema", "gen/schema.cfg", "--out", "bundle"],
        ["score", "bundle", "gen/corpus.csv", "--out", "scored"],
        ["plan", "--staff", 5, "--hours", 8, "--utilization", 0.85, "--days", 20,
         "--customers", "scored/scored.csv", "--service-minutes", 30, "--what-if", "1..40", "--out", "plan"],
        ["report", "bundle", "--out", "report"],
    ]
    for argv in steps:
        code = run(argv, cwd)
        if code != 0:
            raise AssertionError(f"{argv[0:3]} exited with {code}")


def tree_digest(root) -> dict[str, str]:
    root = Path(root)
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }
