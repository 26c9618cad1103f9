"""Transformer sidecar for the sbdoh pipeline.

Talks to the pipeline only through files: it trains on the BIO training
export, reads the notes file, and writes span predictions in the pipeline's
prediction format.
"""

from sbdoh_sidecar.contract import LABELS, TAGS, SidecarError
from sbdoh_sidecar.train import SidecarConfig, train
from sbdoh_sidecar.predict import predict

__all__ = ["LABELS", "TAGS", "SidecarError", "SidecarConfig", "train", "predict"]
