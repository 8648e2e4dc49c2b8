"""Soft-margin SVMs trained with SMO, one-against-one and one-against-all
decomposition, raster classification and kappa-based comparison."""
from ._accel import JIT_ENABLED, backend_name
from .assessment import AccuracyReport, ComparisonVerdict, ConfusionMatrix, build_confusion, kappa, z_test
from .errors import ConvergenceError, DegenerateError, FormatError, InputError, MultiSvmError
from .harness import ExperimentConfig, generate_synthetic, run_experiment
from .kernels import DEFAULT_KERNELS, KernelSpec, gram_matrix
from .modelfile import load_model, save_model
from .multiclass import (
    MIXED,
    UNCLASSIFIED,
    ClassCatalog,
    LabeledDataset,
    MulticlassModel,
    Strategy,
    Voting,
    predict,
    train_multiclass,
)
from .raster_io import LabelMap, PixelSamples, RasterImage, classify_raster, read_raster, write_raster
from .svm_binary import BinaryProblem, BinarySvmModel, train

__version__ = "0.1.0"
