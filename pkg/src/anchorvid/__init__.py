"""Training-free image-anchored video diffusion inference on desk-scale latents.

Anchor image generation and selection, fixed-noise video score distillation
and staged regeneration over pluggable denoisers, with a Gaussian-mixture
prior whose optimal denoiser is known in closed form.
"""

__version__ = "0.1.0"

from .latents import (Conditioning, RandomStream, load_latent, replicate_image,
                      sample_standard_noise, save_latent)
from .schedule import (InferenceGrid, NoiseSchedule, add_noise, cut_index, make_inference_grid,
                       make_schedule, terminal_snr)
from .prior import (GmmVideoPrior, OracleDenoiser, log_likelihood, optimal_predict_noise,
                    sample_video, static_bump_prior, translating_bump_prior)
from .learned import TinyDenoiser, gradient_check, train
from .sampler import SamplerConfig, predicted_z0, regenerate, sample
from .anchor import select_anchor, synthesize_candidates
from .nivsds import NiVsdsConfig, ni_vsds, vanilla_sds
from .metrics import dynamic_degree, separability_study, temporal_consistency, video_metrics
from .config import PipelineConfig, parse_config
from .pipeline import CostLedger, build_context, run_baseline, run_i4vgen
