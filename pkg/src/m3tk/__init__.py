"""m3tk: discrete multi-modal motion tokenization toolkit.

Modality-specific FSQ/VQ motion VAEs over a parametric upper-body model,
plus the vocabulary/decoding layer and the evaluation metric suite, all
verifiable at desk scale on bundled synthetic data.
"""

__version__ = "0.1.0"
