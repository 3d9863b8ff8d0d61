"""Transferability estimation and ranking from pre-extracted embeddings.

Submodules are imported lazily so the CLI can pin BLAS threading before
numpy loads.
"""

from __future__ import annotations

__version__ = "0.1.0"

_EXPORTS = {
    "EmbeddingSet": "embedstore",
    "FeatureStats": "embedstore",
    "SynthSpec": "embedstore",
    "load_embedding_set": "embedstore",
    "save_embedding_set": "embedstore",
    "split": "embedstore",
    "feature_stats": "embedstore",
    "standardize": "embedstore",
    "synth_generate": "embedstore",
    "PseudoClusters": "pseudocluster",
    "CenterScheme": "pseudocluster",
    "generate_centers": "pseudocluster",
    "shift_centers": "pseudocluster",
    "targets_for": "pseudocluster",
    "DvaConfig": "dva",
    "FixedN": "dva",
    "AdaptiveN": "dva",
    "PcLoss": "dva",
    "mixing_matrix": "dva",
    "evolve_closed_form": "dva",
    "evolve_backward": "dva",
    "evolve_explicit": "dva",
    "adaptive_n": "dva",
    "ItmModelState": "trainer",
    "TrainConfig": "trainer",
    "EvalMode": "trainer",
    "ScoreReport": "trainer",
    "init_state": "trainer",
    "forward_batch": "trainer",
    "adamw_step": "trainer",
    "train_itm": "trainer",
    "evaluate_score": "trainer",
    "RankResult": "metrics",
    "weighted_kendall_tau": "metrics",
    "kendall_tau": "metrics",
    "spearman_rho": "metrics",
    "stability_subsample": "metrics",
    "wz_similarity": "metrics",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name: str):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module 'itm' has no attribute {name!r}")
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    return getattr(module, name)
