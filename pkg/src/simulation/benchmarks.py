"""
Named benchmark presets and program references.

A program reference is a path to a program-model file, a preset name
(`preset:NAME` or bare `NAME`) or an inline generator spec
`gen:key=value,...@SEED`.
"""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

from pydantic import ValidationError

from src.program_model import AnnotationRanges, GeneratorParams, ProgramModel, generate_program, load_program
from src.scheduling_interface import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_PRESET_SEED = 1

PRESETS: Dict[str, GeneratorParams] = {
    # Labels concentrate behind Hard branches: utility follows reachable labels
    "learnable": GeneratorParams(
        name="learnable", branch_count=1000, hard_fraction=0.3, label_density=0.08,
        hard_label_boost=3.0),
    # Only inputs of 48 bytes or more enter the labeled, Hard region; the small-input
    # side is an Easy decoy without labels
    "size-misleading": GeneratorParams(
        name="size-misleading", branch_count=400, hard_fraction=0.15, label_density=0.06,
        hard_label_boost=4.0, size_gate=48, gated_region_fraction=0.6),
    "shallow": GeneratorParams(
        name="shallow", branch_count=200, group_size_range=(3, 6), depth_bias=0.0),
    "deep": GeneratorParams(
        name="deep", branch_count=400, group_size_range=(2, 2), depth_bias=0.85,
        group_probability=0.6),
    "label-sparse": GeneratorParams(
        name="label-sparse", branch_count=400, label_density=0.02, hard_label_boost=2.0),
    "indirect-heavy": GeneratorParams(
        name="indirect-heavy", branch_count=300,
        annotation_ranges=AnnotationRanges(indirect_rate=0.3, indirect=(1, 3))),
    "external-heavy": GeneratorParams(
        name="external-heavy", branch_count=300,
        annotation_ranges=AnnotationRanges(external_rate=0.4, external=(1, 3))),
    "cmp-heavy": GeneratorParams(
        name="cmp-heavy", branch_count=300, annotation_ranges=AnnotationRanges(cmp=(4, 12))),
    "wide-switch": GeneratorParams(
        name="wide-switch", branch_count=300, group_size_range=(6, 12), group_probability=0.5),
    "tiny": GeneratorParams(
        name="tiny", branch_count=24, group_size_range=(2, 3), hard_fraction=0.25, label_density=0.3),
}


def preset_names() -> str:
    return ", ".join(PRESETS)


def preset_params(name: str) -> GeneratorParams:
    """
    Raises:
        ConfigError: If `name` is not a known preset (the message lists the presets).
    """
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"Unknown preset '{name}'. Available presets: {preset_names()}")


@lru_cache(maxsize=64)
def generate_preset(name: str, seed: int = DEFAULT_PRESET_SEED) -> ProgramModel:
    """Generates (and caches) the program of a preset; programs are immutable so sharing is safe."""
    return generate_program(preset_params(name), seed)


def _parse_value(raw: str):
    if ":" in raw:
        return tuple(int(part) for part in raw.split(":"))
    return raw


def apply_generator_overrides(base: GeneratorParams, entries: Iterable[str]) -> GeneratorParams:
    """
    Applies `key=value` entries to generator parameters. Range values use `low:high`.

    Raises:
        ConfigError: On malformed entries or parameters the generator rejects.
    """
    values = {}
    for item in filter(None, (part.strip() for part in entries)):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"Generator entry '{item}' is not of the form key=value")
        try:
            values[key.strip()] = _parse_value(value.strip())
        except ValueError:
            raise ConfigError(f"Invalid range value in generator entry '{item}'")
    unknown = set(values) - set(GeneratorParams.model_fields)
    if unknown:
        raise ConfigError(f"Unknown generator parameters: {', '.join(sorted(unknown))}")
    try:
        return GeneratorParams(**{**base.model_dump(), **values})
    except ValidationError as e:
        raise ConfigError(f"Invalid generator parameters {sorted(values)}: {e}")


def parse_generator_spec(spec: str) -> Tuple[GeneratorParams, int]:
    """
    Parses `key=value,...@SEED` (the part after `gen:`).

    Raises:
        ConfigError: On malformed entries or parameters the generator rejects.
    """
    body, _, seed_text = spec.partition("@")
    try:
        seed = int(seed_text) if seed_text else DEFAULT_PRESET_SEED
    except ValueError:
        raise ConfigError(f"Invalid generator seed '{seed_text}' in '{spec}'")
    return apply_generator_overrides(GeneratorParams(), body.split(",")), seed


def resolve_program(ref: str, seed: Optional[int] = None) -> ProgramModel:
    """
    Resolves a program reference to a ProgramModel.

    Args:
        ref: File path, `preset:NAME`, bare preset name or `gen:key=value,...@SEED`.
        seed: Generator seed for presets (default 1).

    Raises:
        ConfigError: On an unknown preset or malformed generator spec.
        ProgramModelError: On an unreadable program file or rejected generator parameters.
    """
    seed = DEFAULT_PRESET_SEED if seed is None else seed
    if ref.startswith("gen:"):
        params, gen_seed = parse_generator_spec(ref[len("gen:"):])
        return generate_program(params, gen_seed)
    if ref.startswith("preset:"):
        return generate_preset(ref[len("preset:"):], seed)
    if ref in PRESETS:
        return generate_preset(ref, seed)
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        return load_program(path)
    raise ConfigError(f"Cannot resolve program '{ref}': not a file, preset ({preset_names()}) or gen: spec")

