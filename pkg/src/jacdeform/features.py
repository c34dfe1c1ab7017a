"""Per-vertex descriptors for the unsupervised matching branch.

Wave-kernel signatures computed from the eigenbasis feed a small
per-vertex MLP that produces the learned matching features. This
descriptor-MLP extractor is the single intentional substitution for a
heavier learned feature backbone.
"""

import numpy as np
import torch

from .network import init_linear_

WKS_ENERGY_LEVELS = 100
# High energy bands respond to tessellation noise more than to geometry;
# the signatures use at most this many eigenpairs.
WKS_EIGENPAIRS = 60
FEATURE_DIM = 128
EXTRACTOR_LAYERS = 4
EXTRACTOR_WIDTH = 128


def wave_kernel_signature(basis, n_energies=WKS_ENERGY_LEVELS):
    """Band-pass spectral descriptor, shape (V, n_energies).

    Log-energy levels span the nonzero part of the spectrum with the usual
    two-sigma margins; each column is normalized by its total response.
    """
    evals = np.abs(basis.evals)
    positive = evals[evals > 1e-12 * max(evals.max(), 1e-300)]
    if len(positive) < 2:
        raise ValueError("need at least two nonzero eigenvalues for signatures")
    log_ev = np.log(positive)
    e_min, e_max = log_ev[0], log_ev[-1]
    sigma = 7.0 * (e_max - e_min) / max(n_energies, 2)
    if sigma <= 0:
        sigma = 1.0
    energies = np.linspace(e_min + 2.0 * sigma, e_max - 2.0 * sigma, n_energies)
    with np.errstate(divide="ignore"):
        log_all = np.where(evals > 0, np.log(np.where(evals > 0, evals, 1.0)), -np.inf)
    coef = np.exp(-((energies[:, None] - log_all[None, :]) ** 2) / (2.0 * sigma**2))
    squared = basis.evecs**2
    wks = squared @ coef.T
    totals = coef.sum(axis=1)
    wks /= np.maximum(totals, 1e-300)[None, :]
    # Center and normalize each energy band in the mass inner product: the
    # raw responses share a dominant common profile whose cosine is ~1
    # everywhere; matching lives in the variation around it.
    weights = basis.mass / basis.mass.sum()
    wks -= np.einsum("ve,v->e", wks, weights)[None, :]
    norms = np.sqrt(np.einsum("ve,v->e", wks**2, basis.mass))
    return wks / np.maximum(norms, 1e-300)[None, :]


class FeatureExtractor(torch.nn.Module):
    """Per-vertex MLP mapping descriptors to matching features.

    A pass-through skip (identity over the shared dimensions, zeroed MLP
    head) makes the initial features equal the normalized descriptors, so
    the soft correspondence is informative from step one and training
    refines it instead of first having to rediscover the descriptors.
    """

    def __init__(self, in_dim=WKS_ENERGY_LEVELS, width=EXTRACTOR_WIDTH,
                 out_dim=FEATURE_DIM, n_layers=EXTRACTOR_LAYERS, seed=0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        widths = [in_dim] + [width] * (n_layers - 1) + [out_dim]
        layers = []
        for i in range(len(widths) - 1):
            layer = torch.nn.Linear(widths[i], widths[i + 1], dtype=torch.float64)
            init_linear_(layer, generator, zero=(i == len(widths) - 2))
            layers.append(layer)
        self.layers = torch.nn.ModuleList(layers)
        self.skip = torch.nn.Linear(in_dim, out_dim, bias=False, dtype=torch.float64)
        with torch.no_grad():
            self.skip.weight.zero_()
            shared = min(in_dim, out_dim)
            self.skip.weight[:shared, :shared] = torch.eye(shared, dtype=torch.float64)

    def forward(self, descriptors_t):
        x = descriptors_t
        for layer in self.layers[:-1]:
            x = torch.relu(layer(x))
        x = self.layers[-1](x) + self.skip(descriptors_t)
        # Unit-length features: the softmax temperature acts on cosine
        # similarities, which keeps the soft map away from hard saturation.
        return x / torch.linalg.norm(x, dim=1, keepdim=True).clamp_min(1e-12)
