"""Convenience shims that shell out to the core CLI.

The front-end's only contract with the core is the pair of JSON documents;
these helpers write them to a scratch directory and drive the ``lpforge``
executable, so nothing here imports the core package.
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess
import tempfile


class CoreError(RuntimeError):
    def __init__(self, argv, returncode, stderr):
        self.returncode = returncode
        super().__init__(f"{' '.join(argv)} exited {returncode}: "
                         f"{stderr.strip()[:500]}")


def core_available(executable: str = "lpforge") -> bool:
    return shutil.which(executable) is not None


def _run(argv):
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise CoreError(argv, proc.returncode, proc.stderr)
    return proc


def instantiate(ir_text: str, data_text: str, out_path: str,
                executable: str = "lpforge", dense_columns: bool = False,
                threads: int | None = None) -> dict:
    """Write the documents, run ``lpforge instantiate``, return the timing
    summary the core prints."""
    with tempfile.TemporaryDirectory(prefix="lpbuild-") as tmp:
        ir = os.path.join(tmp, "model.glir.json")
        data = os.path.join(tmp, "model.data.json")
        with open(ir, "w") as f:
            f.write(ir_text)
        with open(data, "w") as f:
            f.write(data_text)
        argv = [executable, "instantiate", ir, data, "-o", out_path]
        if dense_columns:
            argv.append("--dense-columns")
        if threads is not None:
            argv += ["--threads", str(threads)]
        proc = _run(argv)
        return json.loads(proc.stderr.strip().splitlines()[-1])


def solve(ir_text: str, data_text: str, executable: str = "lpforge",
          solver: str = "reference") -> dict:
    """Instantiate + solve through the CLI; returns {status, objective,
    iterations, solution: {column name: value}}."""
    with tempfile.TemporaryDirectory(prefix="lpbuild-") as tmp:
        ir = os.path.join(tmp, "model.glir.json")
        data = os.path.join(tmp, "model.data.json")
        sol = os.path.join(tmp, "model.sol")
        with open(ir, "w") as f:
            f.write(ir_text)
        with open(data, "w") as f:
            f.write(data_text)
        proc = _run([executable, "solve", ir, data, "--solver", solver,
                     "--solution-out", sol])
        summary = json.loads(proc.stdout.strip().splitlines()[-1])
        values = {}
        with open(sol) as f:
            for line in f:
                name, value = line.split()
                values[name] = float(value)
        summary["solution"] = values
        return summary
