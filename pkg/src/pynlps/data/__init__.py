"""
Preset problem catalog for pynlps.

Packaged problems and manufactured solutions for testing, learning and
demonstration, similar to sklearn's datasets module.
"""

from .loader import (
    build_spec,
    get_preset_summary,
    list_presets,
    load_manufactured_solution,
    load_preset,
    make_preset,
    preset_frame,
    preset_grid,
    preset_lambda,
)

__all__ = [
    'build_spec',
    'get_preset_summary',
    'list_presets',
    'load_manufactured_solution',
    'load_preset',
    'make_preset',
    'preset_frame',
    'preset_grid',
    'preset_lambda',
]
