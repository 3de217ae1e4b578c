from .grid import GridSpec, Volume, LabelMap, MultiChannelVolume
from .ops import (
    normalize_intensity,
    downsample_label_nn,
    downsample_intensity,
    coarse_grid,
    upsample_label_nn,
    flip_sagittal,
    RigidTransform,
    rigid_resample,
)
from .avol import read_avol, write_avol
from .tiling import Tile, TileGrid, build_tile_grid, extract_tile, tiles_covering, tiling_preset
