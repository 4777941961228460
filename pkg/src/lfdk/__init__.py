"""Light-field super-resolution with spatio-angular decomposition kernels."""

from .kernels import (
    ALPHA,
    BETA,
    EPI1,
    EPI2,
    EPI3,
    GAMMA,
    SAS,
    DecompositionKernel,
    KernelKind,
    SubspaceStage,
    build_kernel,
    connection_count,
    dup1,
    dup2,
    kernel_forward,
    kernel_param_count,
    parse_kind,
    stage_pairs,
)
from .lightfield import (
    LightField,
    SubspacePair,
    ViewTensor,
    crop_border,
    downsample_bilinear,
    extract_epi,
    extract_sai,
    from_view,
    to_view,
    upsample_bilinear,
)
from .losses import (
    LossConfig,
    combined_loss,
    lfvgg_loss,
    make_extractor,
    make_loss,
    mse_loss,
)
from .metrics import EvalReport, evaluate, psnr, ssim
from .network import (
    DivergenceError,
    SRNet,
    SRNetConfig,
    build_srnet,
    srnet_forward,
    srnet_param_count,
    super_resolve,
    train_step,
)
from .ops import (
    Adam,
    Conv2D,
    concat_channels,
    conv2d_backward,
    conv2d_forward,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    relu_backward,
)

__version__ = "0.1.0"
