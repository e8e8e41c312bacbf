"""Experiment environment for bnsvp runs.

This module wraps the process-level settings of one experiment run (thread
cap, log level, resolved configuration) and the run record that every CLI
invocation leaves behind as ``run.json``.
"""

import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

SETTINGS_PREFIX = "bnsvp."
DEFAULT_SETTINGS = {
    "bnsvp.log_level": "INFO",
    "bnsvp.threads": "1",
}
ENVIRON_KEYS = {
    "BNSVP_LOG_LEVEL": "bnsvp.log_level",
    "BNSVP_THREADS": "bnsvp.threads",
}


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent u64 seed for a sub-stream.

    Args:
        seed: Base seed of the run
        *keys: Integers naming the sub-stream (bag index, refresh round, ...)

    Returns:
        A 64-bit seed that depends only on ``seed`` and ``keys``
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(key) for key in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunRecord:
    """Everything needed to reproduce one CLI invocation."""

    command: list[str]
    config: dict[str, Any]
    seed: Optional[int] = None
    started_at: str = field(default_factory=_utc_now)
    finished_at: Optional[str] = None
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": self.outputs,
        }


class ExperimentEnvironment:
    """Settings and run bookkeeping for one experiment process.

    Attributes:
        settings: Resolved ``bnsvp.*`` settings
        threads: Maximum worker threads for bag-parallel work
        record: The run record written by ``close``

    Example:
        env = ExperimentEnvironment.from_environ(os.environ)
        env.start(command=sys.argv, config={"alpha": 1.0}, seed=7)
        ...
        env.add_output("out/model.json")
        env.close(Path("out"))
    """

    def __init__(self, settings: Optional[Mapping[str, str]] = None) -> None:
        """Initialize the environment.

        Args:
            settings: Partial ``bnsvp.*`` settings; missing keys take defaults
        """
        resolved = dict(DEFAULT_SETTINGS)
        resolved.update(settings or {})
        self._settings = resolved
        self._record: Optional[RunRecord] = None

        logger.debug("Created ExperimentEnvironment with settings: %s", resolved)

    @classmethod
    def from_environ(cls, environ: Optional[Mapping[str, str]] = None) -> "ExperimentEnvironment":
        """Create an environment from process environment variables.

        ``BNSVP_THREADS`` and ``BNSVP_LOG_LEVEL`` map onto ``bnsvp.threads``
        and ``bnsvp.log_level``.

        Args:
            environ: Mapping to read, defaults to ``os.environ``

        Returns:
            ExperimentEnvironment instance
        """
        environ = os.environ if environ is None else environ
        settings = {key: environ[name] for name, key in ENVIRON_KEYS.items() if name in environ}
        return cls(settings)

    @property
    def settings(self) -> dict[str, str]:
        return self._settings

    @property
    def threads(self) -> int:
        try:
            threads = int(self._settings["bnsvp.threads"])
        except ValueError:
            logger.warning("Ignoring invalid thread setting %r", self._settings["bnsvp.threads"])
            return 1
        return max(1, threads)

    @property
    def log_level(self) -> str:
        return self._settings["bnsvp.log_level"].upper()

    @property
    def record(self) -> RunRecord:
        if self._record is None:
            raise RuntimeError("ExperimentEnvironment.record accessed before start()")
        return self._record

    def start(self, config: Mapping[str, Any], seed: Optional[int] = None, command: Optional[list[str]] = None) -> None:
        """Begin a run record.

        Args:
            config: Fully resolved configuration of the run
            seed: Base seed, if the run is seeded
            command: Command line, defaults to ``sys.argv``
        """
        self._record = RunRecord(
            command=list(sys.argv if command is None else command),
            config={**dict(config), "threads": self.threads},
            seed=seed,
        )
        logger.info("Run started with seed %s", seed)

    def add_output(self, path: Union[str, Path]) -> None:
        self.record.outputs.append(str(path))

    def close(self, directory: Union[str, Path]) -> Path:
        """Finish the run and write ``run.json`` into ``directory``.

        Returns:
            Path of the written run record
        """
        record = self.record
        record.finished_at = _utc_now()
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "run.json"
        path.write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        logger.info("Run record written to %s", path)
        return path

    def __repr__(self) -> str:
        return f"<ExperimentEnvironment threads={self.threads} log_level={self.log_level}>"
