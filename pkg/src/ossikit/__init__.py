"""Two-phase optical-sectioning structured illumination toolkit.

Simulates phase-shifted sub-image acquisition, reconstructs optically
sectioned images (three-phase, 2P, and sequence-Hilbert-transform),
synthesizes artifact-corrupted bubble datasets, and trains encoder-decoder
denoisers on them with a small from-scratch backprop engine.
"""

from .backend import using_numba
from .bubbles import BubbleSpec, SceneConfig, compose_scene, joukowski_boundary, render_bubble
from .forward import MotionSpec, ScenePattern, SubImageSet, acquire_set, modulate
from .image import Rect, crop, load_imf1, normalize, resize_bilinear, save_imf1, translate
from .metrics import EvalReport, NotchSpec, evaluate, notch_filter, psnr
from .models import (ArchConfig, TrainConfig, build_dae, build_network, build_plain_cnn,
                     build_unet, denoise, load_checkpoint, save_checkpoint, train)
from .noise import (ArtifactField, AugmentConfig, DatasetManifest, augment_field,
                    build_dataset, build_field_bank, corrupt, extract_artifact_field)
from .reconstruct import (ReconstructionKind, hilbert_y, reconstruct, reconstruct_2p,
                          reconstruct_3p, reconstruct_sht)

__version__ = "0.1.0"

__all__ = [
    "ArchConfig", "ArtifactField", "AugmentConfig", "BubbleSpec", "DatasetManifest",
    "EvalReport", "MotionSpec", "NotchSpec", "Rect", "ReconstructionKind",
    "SceneConfig", "ScenePattern", "SubImageSet", "TrainConfig", "acquire_set",
    "augment_field", "build_dae", "build_dataset", "build_field_bank", "build_network",
    "build_plain_cnn", "build_unet", "compose_scene", "corrupt", "crop", "denoise",
    "evaluate", "extract_artifact_field", "hilbert_y", "joukowski_boundary",
    "load_checkpoint", "load_imf1", "modulate", "normalize", "notch_filter", "psnr",
    "reconstruct", "reconstruct_2p", "reconstruct_3p", "reconstruct_sht",
    "render_bubble", "resize_bilinear", "save_checkpoint", "save_imf1", "train",
    "translate", "using_numba",
]
