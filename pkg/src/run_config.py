# =====================================================
# RUN CONFIGURATION MODULE
# =====================================================
#
# A run is fully described by one flat key=value file:
#
#     # comments are allowed
#     solver.admm_iterations=4
#     update.threshold_high=0.6
#     scale.num_scales=5
#     features.backend=gradient_cells
#     synthetic.velocity_x=2.0
#     run.seed=0
#
# The part before the dot names the section (one per module),
# the part after it a field of that section's typed model.
# Anything left out keeps its default from config.py.
#
# dump_run_config() writes the EFFECTIVE config back in the
# same format, so a run can always be reproduced from its
# output directory.
#
# =====================================================

import logging
from pathlib import Path

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import OUTPUT_DIR, SEED

from src.errors import ConfigError
from src.features import FeatureConfig
from src.sequences import SyntheticSpec
from src.solver import SolverConfig
from src.tracker import ScaleConfig, TrackerConfig, UpdateConfig

logger = logging.getLogger(__name__)


class RunSettings(BaseModel):
    """Paths, seed and switches of one run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(SEED, ge=0)
    sequence_dir: str | None = None
    output_dir: str = OUTPUT_DIR
    trace: bool = False


class RunConfig(BaseModel):
    """Every setting of a run, one section per module."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    solver: SolverConfig = SolverConfig()
    update: UpdateConfig = UpdateConfig()
    scale: ScaleConfig = ScaleConfig()
    features: FeatureConfig = FeatureConfig()
    synthetic: SyntheticSpec = SyntheticSpec()
    run: RunSettings = RunSettings()

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            solver=self.solver,
            update=self.update,
            scale=self.scale,
            features=self.features,
            trace=self.run.trace,
        )


SECTIONS: dict[str, type[BaseModel]] = {
    name: info.annotation for name, info in RunConfig.model_fields.items()
}


# =====================================================
# LOADING
# =====================================================

def _blank_to_none(value):
    return None if value is None or (isinstance(value, str) and value.strip() == "") else value


def build_run_config(values: dict) -> RunConfig:
    """
    Turn flat "section.field" -> value pairs into a RunConfig.

    RAISES:
    -------
    ConfigError
        Unknown section or field, or a value the typed models
        reject. The error's `key` names the offending key.
    """
    grouped: dict[str, dict] = {name: {} for name in SECTIONS}

    for key, value in values.items():
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"unknown config key: {key}", key=key)
        if name not in SECTIONS[section].model_fields:
            raise ConfigError(f"unknown config key: {key}", key=key)
        grouped[section][name] = _blank_to_none(value)

    parts = {}
    for section, fields in grouped.items():
        model = SECTIONS[section]
        cleaned = {k: v for k, v in fields.items() if v is not None or model.model_fields[k].default is None}
        try:
            parts[section] = model(**cleaned)
        except ValidationError as e:
            first = e.errors()[0]
            loc = ".".join(str(p) for p in first["loc"])
            key = f"{section}.{loc}" if loc else section
            raise ConfigError(f"invalid value for {key}: {first['msg']}", key=key) from None

    config = RunConfig(**parts)
    sequence_dir = config.run.sequence_dir
    if sequence_dir is not None and not Path(sequence_dir).is_dir():
        raise ConfigError(f"run.sequence_dir does not exist: {sequence_dir}", key="run.sequence_dir")
    external_dir = config.features.external_dir
    if external_dir is not None and not Path(external_dir).is_dir():
        raise ConfigError(f"features.external_dir does not exist: {external_dir}", key="features.external_dir")
    return config


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """
    Read a key=value run-config file, apply overrides, validate.

    PARAMETERS:
    -----------
    path : str or Path, optional
        The run-config file; defaults only when omitted.
    overrides : dict, optional
        Extra "section.field" -> value pairs, applied last.

    RETURNS:
    --------
    RunConfig
    """
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}", key=None)
        values.update(dotenv_values(path))
        logger.info("read %d config keys from %s", len(values), path)
    if overrides:
        values.update({k: (v if isinstance(v, str) or v is None else _format_value(v))
                       for k, v in overrides.items()})
    return build_run_config(values)


# =====================================================
# DUMPING
# =====================================================

def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def dump_run_config(config: RunConfig, path=None) -> str:
    """
    The effective config as key=value text (every default written
    out). Written to `path` too when given.
    """
    lines = ["# Effective run configuration", ""]
    for section in SECTIONS:
        lines.append(f"# --- {section} ---")
        part = getattr(config, section)
        for name in type(part).model_fields:
            lines.append(f"{section}.{name}={_format_value(getattr(part, name))}")
        lines.append("")
    text = "\n".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text
