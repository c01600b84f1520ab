import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

MANIFEST_NAME = 'manifest.json'


@dataclass
class RunManifest:
    """Everything needed to rerun a command: its name, resolved configuration and seed."""
    command: str
    config: Dict[str, Any]
    seed: int
    artifacts: Dict[str, str] = field(default_factory=dict)
    duration: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + '\n'

    @classmethod
    def from_json(cls, text: str) -> 'RunManifest':
        try:
            data = json.loads(text)
            return cls(
                command=data['command'],
                config=dict(data['config']),
                seed=int(data['seed']),
                artifacts=dict(data.get('artifacts', {})),
                duration=float(data.get('duration', 0.0)),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise ValueError('Manifest malformed') from None


def write_manifest(manifest: RunManifest, directory: Union[str, Path]) -> Path:
    """Writes ``manifest.json`` into ``directory`` through a temporary file and an atomic rename."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / MANIFEST_NAME
    handle, temporary = tempfile.mkstemp(dir=directory, prefix='.manifest-', suffix='.json')
    try:
        with os.fdopen(handle, 'w', encoding='utf-8') as stream:
            stream.write(manifest.to_json())
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise
    return path


def read_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    return RunManifest.from_json(path.read_text(encoding='utf-8'))
