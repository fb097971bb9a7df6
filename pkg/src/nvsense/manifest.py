"""Run manifests: enough metadata to re-run any command bit-identically.

A manifest records the exact argument vector, the seed, the tool version,
and content hashes of every input and output file. No timestamps are
stored, so two identical runs produce identical manifests.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: list  # argv of the subcommand, excluding the program name
    seed: int
    version: str
    config_path: str | None = None
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: dict = field(default_factory=dict)  # path -> sha256

    def add_input(self, path):
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path):
        self.outputs[str(path)] = sha256_file(path)

    def to_json(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "seed": self.seed,
                "version": self.version,
                "config_path": self.config_path,
                "inputs": self.inputs,
                "outputs": self.outputs,
            },
            sort_keys=True,
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(
            command=d["command"],
            seed=d["seed"],
            version=d["version"],
            config_path=d.get("config_path"),
            inputs=d.get("inputs", {}),
            outputs=d.get("outputs", {}),
        )

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())

    def verify_outputs(self) -> list[str]:
        """Paths whose current content hash differs from the recorded one."""
        stale = []
        for path, digest in self.outputs.items():
            if not Path(path).exists() or sha256_file(path) != digest:
                stale.append(path)
        return stale
