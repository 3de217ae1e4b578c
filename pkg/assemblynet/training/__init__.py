from .queues import TaskQueue
from .dag import TransferDAG, build_transfer_dag, parent_of, simulate_makespan
from .trainer import TrainPlan, train_unet, swa_update, transfer_weights
from .scheduler import TrainedAssembly, EventLog, train_assembly, finetune_assembly, augment_with_flips
