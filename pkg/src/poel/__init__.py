"""poel: perception-oriented learned image codec.

Hyperprior autoencoder with a five-group space-channel context model and a
range-coded bitstream, trained in two phases (MSE, then a composite
perceptual objective with an adversarial term).
"""

from .adversary import Discriminator, DiscriminatorConfig, spectral_normalize
from .codec import (Bitstream, BitstreamFormatError, compress_image, decode_latent,
                    decode_latent_serial, decompress_image)
from .config import CodecConfig, LossWeights, TrainConfig
from .context import checkerboard_masks, make_group_layout
from .features import FeatureExtractor
from .gaussian import build_cdf_table, gaussian_likelihood, rate_bpp
from .losses import (bce_adversarial_d, bce_adversarial_g, charbonnier, gram_matrix,
                     hinge_adversarial_d, hinge_adversarial_g, lambda_multiplexer,
                     lpips_perceptual, patched_style_loss, total_objective)
from .metrics import ms_ssim, psnr
from .model import CodecModel, build_model
from .rangecoder import (CorruptStreamError, TruncatedStreamError, backend_name,
                         range_decode, range_encode)
from .transforms import quantize

__version__ = "0.1.0"
