"""
RunConfig loading.

A RunConfig is a JSON document validated by ``RunConfigSerializer``. Command
flags (``--out``, ``--seed``, ``--jobs``) and ``--set key.path=value``
overrides are applied to the raw document before validation, so every value
goes through the same checks whatever its origin.
"""

import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from django.conf import settings

from py_rdeql.binn import TrainConfig
from py_rdeql.exceptions import ConfigurationError
from py_rdeql.grid import Domain
from py_rdeql.sr import SrConfig

from .serializers import RunConfigSerializer

logger = logging.getLogger(__name__)

SECTIONS = ('input', 'synth', 'preprocess', 'train', 'sr', 'solve', 'evaluate')


def apply_override(document: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """
    Apply one ``key.path=value`` assignment in place.

    The value is decoded as JSON when possible and kept as a string otherwise,
    so ``train.es_sweep=[500]`` sets a list and ``synth.growth=1-U`` a string.
    """
    key, sep, raw = assignment.partition('=')
    if not sep or not key.strip():
        raise ConfigurationError(f"Override must look like key.path=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = document
    parts = key.strip().split('.')
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"Override {key!r} descends into non-object {part!r}")
        node = child
    node[parts[-1]] = value
    return document


@dataclass(frozen=True)
class RunConfig:
    """Validated run settings with typed accessors for the library configs."""

    data: Dict[str, Any]

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.data[section]

    @property
    def output_dir(self) -> Path:
        return Path(self.data['output_dir'])

    @property
    def base_seed(self) -> int:
        return int(self.data['base_seed'])

    @property
    def jobs(self) -> int:
        return int(self.data['jobs'])

    @property
    def preferred_es(self) -> Optional[int]:
        return self.data.get('preferred_es')

    @property
    def input_mode(self) -> str:
        section = self.data['input']
        if section.get('synth'):
            return 'synth'
        return 'points' if section.get('points') else 'density'

    @property
    def es_sweep(self):
        return list(self.data['train']['es_sweep'])

    @property
    def split_seeds(self):
        return [self.base_seed + k for k in range(self.data['train']['n_splits'])]

    def train_config(self, patience: int) -> TrainConfig:
        section = {k: v for k, v in self.data['train'].items() if k not in ('es_sweep', 'n_splits')}
        return TrainConfig(es_patience=patience, **section)

    def sr_config(self) -> SrConfig:
        return SrConfig(**self.data['sr'])

    def synth_domain(self) -> Domain:
        return Domain(*self.data['synth']['domain'])

    def input_domain(self) -> Domain:
        return Domain(*self.data['input']['domain'])

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.data)


def load_run_config(path: Optional[str] = None, overrides: Iterable[str] = (),
                    output_dir: Optional[str] = None, seed: Optional[int] = None,
                    jobs: Optional[int] = None) -> RunConfig:
    """
    Read, override and validate a RunConfig.

    Args:
        path: JSON document; None starts from an empty document
        overrides: ``key.path=value`` assignments, applied in order
        output_dir, seed, jobs: command-line values that win over the document

    Raises:
        FileNotFoundError: if ``path`` does not exist
        ConfigurationError: on malformed JSON or failed validation
    """
    document: Dict[str, Any] = {}
    if path is not None:
        try:
            document = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            logger.error(f"RunConfig {path} is not valid JSON: {str(e)}")
            raise ConfigurationError(f"RunConfig {path} is not valid JSON: {str(e)}") from e
        if not isinstance(document, dict):
            raise ConfigurationError(f"RunConfig {path} must be a JSON object")

    for assignment in overrides:
        apply_override(document, assignment)
    if output_dir is not None:
        document['output_dir'] = output_dir
    if seed is not None:
        document['base_seed'] = seed
    if jobs is not None:
        document['jobs'] = jobs
    document.setdefault('output_dir', str(settings.RD_BINN_OUTPUT_DIR))
    document.setdefault('base_seed', settings.RD_BINN_BASE_SEED)
    document.setdefault('jobs', settings.RD_BINN_JOBS)
    for section in SECTIONS:
        document.setdefault(section, {})

    serializer = RunConfigSerializer(data=document)
    if not serializer.is_valid():
        logger.error(f"RunConfig validation failed: {serializer.errors}")
        raise ConfigurationError("Invalid RunConfig", json.loads(json.dumps(serializer.errors)))
    data = json.loads(json.dumps(serializer.validated_data))
    logger.info(f"loaded RunConfig ({'defaults' if path is None else path}), "
                f"input mode {RunConfig(data).input_mode}, output {data['output_dir']}")
    return RunConfig(data)
