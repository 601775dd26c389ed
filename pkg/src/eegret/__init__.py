"""eegret: dual-stream contrastive EEG-to-image retrieval, desk scale.

A fully self-contained retrieval pipeline (EEG encoder, blur/second-stream
fusion, symmetric InfoNCE training, 200-way and one-to-one assignment
retrieval) plus the reconstruction-quality metric battery, with all frozen
visual backbones abstracted behind feature providers.
"""

__version__ = "0.1.0"

from .kernels import BACKEND_NAME, HAVE_COMPILED

__all__ = ["BACKEND_NAME", "HAVE_COMPILED", "__version__"]
