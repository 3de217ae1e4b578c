from .layers import (
    conv3d_forward,
    conv3d_backward,
    maxpool3d,
    maxpool3d_backward,
    upsample_conv,
    upsample_conv_backward,
    dropout_mask,
    softmax,
)
from .unet import (
    Mode,
    UNetConfig,
    UNetParams,
    init_params,
    parameter_count,
    unet_forward,
    unet_forward_cached,
    unet_backward,
    unet_loss_and_grads,
)
from .losses import dice_loss, one_hot
from .optim import AdamState, adam_step, mixup, sample_mixup_lambda
from .weights import read_weights, write_weights
