"""
Two-stage gender-conditioned classifier.

Stage 1 (PD) sorts a spectrogram into HC_M, HC_F, P_M or P_F. Healthy routes
end there; pathological routes go to the male (MP) or female (FP) disease
classifier. Routing uses the predicted stage-1 class, never the true gender.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pathology.Features.features import model_input
from pathology.Hierarchy.labels import DISEASES, FINAL_LABELS, STAGE1_LABELS, FinalLabel, GenderHealthLabel
from pathology.Network.training import predict

HC_INDEX = FINAL_LABELS.index(FinalLabel.HC)
P_M_INDEX = STAGE1_LABELS.index(GenderHealthLabel.P_M)
P_F_INDEX = STAGE1_LABELS.index(GenderHealthLabel.P_F)


def stack_inputs(examples):
    """(N, 1, n_mels, n_frames) float32 batch of min-max scaled spectrograms."""
    examples = list(examples)
    if not examples:
        return np.zeros((0, 1, 0, 0), dtype=np.float32)
    return np.stack([model_input(example.spectrogram)[None] for example in examples]).astype(np.float32)


def route(stage1, male, female):
    """Final label index from stage-1 and stage-2 argmax indices."""
    if stage1 == P_M_INDEX:
        return FINAL_LABELS.index(DISEASES[male])
    if stage1 == P_F_INDEX:
        return FINAL_LABELS.index(DISEASES[female])
    return HC_INDEX


@dataclass
class HierarchicalModel:
    pd: object
    mp: object
    fp: object

    def stage1(self, X):
        return predict(self.pd, X)

    def predict_indices(self, X):
        stage1 = self.stage1(X)
        final = np.full(len(X), HC_INDEX, dtype=np.int64)
        for index, model in ((P_M_INDEX, self.mp), (P_F_INDEX, self.fp)):
            routed = np.flatnonzero(stage1 == index)
            if routed.size:
                diseases = predict(model, X[routed])
                final[routed] = [FINAL_LABELS.index(DISEASES[d]) for d in diseases]
        return final

    def predict(self, spec):
        X = model_input(spec)[None, None].astype(np.float32)
        return FINAL_LABELS[int(self.predict_indices(X)[0])]


@dataclass
class BaselineModel:
    """Single-stage seven-class classifier."""
    model: object

    def predict_indices(self, X):
        return predict(self.model, X)

    def predict(self, spec):
        X = model_input(spec)[None, None].astype(np.float32)
        return FINAL_LABELS[int(self.predict_indices(X)[0])]
