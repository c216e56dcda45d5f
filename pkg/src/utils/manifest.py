import typing as tp
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

import yaml

from config import GeneralConfig, PathConfig, dump_config
from .io import file_hash


@dataclass
class RunManifest:
    command: str
    config_path: tp.Optional[str] = None
    seed: tp.Optional[int] = None
    inputs: tp.Dict[str, str] = field(default_factory=dict)
    outputs: tp.List[str] = field(default_factory=list)
    artifact_version: str = GeneralConfig.ARTIFACT_VERSION
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: tp.Optional[str] = None

    def add_input(self, path: tp.Union[str, Path, None]):
        if path is not None:
            self.inputs[str(path)] = file_hash(path)

    def add_output(self, path: tp.Union[str, Path]):
        self.outputs.append(str(path))

    def write(self, output_dir: tp.Union[str, Path]) -> Path:
        self.finished_at = datetime.now(timezone.utc).isoformat()
        PathConfig.mkdir(output_dir)
        path = Path(output_dir) / PathConfig.MANIFEST_NAME
        content = asdict(self)
        content['config'] = dump_config()
        with open(path, 'w') as f:
            yaml.safe_dump(content, f, sort_keys=False)
        return path
