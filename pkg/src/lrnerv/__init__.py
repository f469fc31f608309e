"""Low-rank separable convolutions for NeRV-style overfitted video decoders."""

from .checkpoint import LoadedCheckpoint, load_checkpoint, save_checkpoint
from .complexity import ComplexityReport, LayerCost, bpp, conv_macs, model_report, param_reduction
from .config import canonical_config, load_config, parse_config, save_config, toy_config
from .lrconv import (FactorizationPlan, LRConvLayer, compose_effective_kernel,
                     dense_param_count, init_lrconv, lr_param_count, lrconv_forward,
                     param_ratio, select_rank)
from .metrics import (FlickerReport, FramePairDistance, flicker_ratio, ms_ssim, psnr,
                      ssim, ssim_distance)
from .model import (DecoderConfig, NervModel, StageSpec, TrainReport, TrainingDiverged,
                    build_model, decode_frame, decode_video, fit, forward, frame_time,
                    loss, positional_embedding)
from .optim import AdamState, adam_init, adam_step, cosine_lr
from .quantize import (QuantizedCheckpoint, QuantizedTensor, dequantize_tensor,
                       evaluate_model, quantize_model, quantize_tensor, quantized_eval)
from .tensor import GradTape, Tensor, backward, conv2d, pixel_shuffle, pixel_unshuffle
from .video import (VideoManifest, load_manifest, load_video, read_ppm, save_manifest,
                    synthetic_video, write_ppm, write_video)

__version__ = "0.1.0"
