"""Aspect-based sentiment classification over dependency parses.

The pipeline encodes a sentence with a Bi-LSTM and a transformer encoder,
runs a bidirectional graph convolution over an edge-weighted dependency
adjacency, masks everything outside the aspect span, pools context states
with retrieval attention, and classifies the fused representation into
{positive, neutral, negative}.
"""

__version__ = "0.1.0"
