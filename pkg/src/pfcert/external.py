import json
import logging
import os
import shlex
import subprocess
from pathlib import Path
from typing import Any, Optional, Union

logger = logging.getLogger(__name__)


def run_external_solver(
    command: Union[str, Path, None],
    problem_path: Path,
    status_path: Path,
    timeout: Optional[float] = None,
) -> dict[str, Any]:
    """Run an external conic solver on an exported problem.

    The command is invoked as ``<command> PROBLEM_JSON STATUS_JSON`` and must
    write a status document to STATUS_JSON:

      {"schema_version": "pfcert.status/1",
       "status": "feasible" | "infeasible" | "unknown",
       "y": [...],                       # when feasible
       "certificate": {...}}             # when infeasible, certificate schema

    Args:
      command: str | Path | None
        Executable (optionally with leading arguments) or name to look up on
        the path; defaults to $PFCERT_EXTERNAL_SOLVER.
    """
    if command is None:
        command = os.getenv("PFCERT_EXTERNAL_SOLVER")
    if not command:
        raise FileNotFoundError("no external solver command configured")

    argv = shlex.split(str(command)) + [str(problem_path), str(status_path)]
    logger.debug("running external solver: %s", argv)

    try:
        proc = subprocess.run(
            argv,
            stdout=subprocess.PIPE,
            # this just goes to the parent's stderr
            stderr=None,
            stdin=subprocess.DEVNULL,
            timeout=timeout,
            check=False,
        )
    except FileNotFoundError:
        raise FileNotFoundError(f"external solver could not be located: '{command}'")

    if proc.returncode != 0:
        logger.warning("external solver exited with status %d", proc.returncode)
        return {"status": "unknown", "message": f"exit status {proc.returncode}"}

    try:
        return json.loads(Path(status_path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        logger.warning("could not read external solver status: %s", e)
        return {"status": "unknown", "message": f"unreadable status: {e}"}
