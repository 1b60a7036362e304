"""Time-domain backprojection with block culling and position lookup tables."""

from .arena import SlabArena
from .backprojection import (BackprojectionOptions, Backprojector, ReconstructionReport,
                             backproject_ping, reconstruct, reconstruct_with_report)
from .culling import BlockMask, block_corners, cull_blocks, cull_blocks_bistatic
from .lut import PositionLUT, build_position_lut

__all__ = [
    "BackprojectionOptions", "Backprojector", "BlockMask", "PositionLUT",
    "ReconstructionReport", "SlabArena", "backproject_ping", "block_corners",
    "build_position_lut", "cull_blocks", "cull_blocks_bistatic", "reconstruct",
    "reconstruct_with_report",
]
