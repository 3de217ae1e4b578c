from .errors import (
    AssemblyNetError,
    UsageError,
    ConfigError,
    DataError,
    ShapeError,
    AvolFormatError,
    NumericalError,
    MemberTrainingError,
)

from .volume.grid import GridSpec, Volume, LabelMap, MultiChannelVolume
from .volume.tiling import Tile, TileGrid, build_tile_grid
from .volume.avol import read_avol, write_avol

from .nn.unet import UNetConfig, UNetParams, init_params, unet_forward

from .training.dag import TransferDAG, build_transfer_dag
from .training.trainer import TrainPlan
from .training.scheduler import TrainedAssembly, train_assembly, finetune_assembly

from .inference.segment import segment_assembly, cascade_segment

from .data.phantom import PhantomSpec, generate_phantom, generate_pool, simulate_rescan
from .data.pool import Pool, load_pool, write_pool

from .evaluation.dice import dice_per_label, mean_dice
from .evaluation.stats import wilcoxon_signed_rank_one_sided, mann_whitney_one_sided

from .config import ExperimentConfig, load_config, save_config
from .pipeline import (
    AssemblyNetModel,
    Subject,
    prepare_subject,
    subject_from_sample,
    train_model,
    save_model,
    load_model,
)
from .ssl import SslPlan, pseudo_label, train_student, ssl_generations

__version__ = "0.1.0"
