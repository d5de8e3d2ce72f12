"""Place-specific background modeling with recursively trained autoencoders."""

__version__ = "0.1.0"

from .data_io import Annotation, ImagePair, SyntheticSpec, generate_synthetic, load_corpus
from .evalkit import CellGrid, EvalReport, iou, kmeans_train, pool_cells, top_x_accuracy
from .model_io import load_aeset, save_aeset
from .nn import Autoencoder, TrainConfig, gradient, init_autoencoder, reconstruct, reconstruction_error, train
from .normalizer import Normalizer, normalize, normalizer_update
from .rae import AeSet, RecursionConfig, TrainingPartition, assign_best_ae, compress, partition, recursive_train
from .scoring import LoCMap, RankedPixel, rank_pixels, score_image

__all__ = [
    "AeSet", "Annotation", "Autoencoder", "CellGrid", "EvalReport", "ImagePair", "LoCMap", "Normalizer",
    "RankedPixel", "RecursionConfig", "SyntheticSpec", "TrainConfig", "TrainingPartition", "assign_best_ae",
    "compress", "generate_synthetic", "gradient", "init_autoencoder", "iou", "kmeans_train", "load_aeset",
    "load_corpus", "normalize", "normalizer_update", "partition", "pool_cells", "rank_pixels", "reconstruct",
    "reconstruction_error", "recursive_train", "save_aeset", "score_image", "top_x_accuracy", "train",
]
