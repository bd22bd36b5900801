"""Model components: CNN path, three-branch transformer path, heads."""

from .cnn import CnnConfig, cnn_forward
from .heads import (align, classify, distill_logits, flat_index, fuse_predict,
                    pair_order, N_CLASSES)
from .network import ModelConfig, init_model_params, n_parameters, param_shapes
from .transformer import (TransformerConfig, attention, attention_weights,
                          patch_embed, self_block, cross_block, layer_forward,
                          source_only_forward, target_only_forward,
                          transformer_forward, transformer_forward_multi)

__all__ = [
    "CnnConfig", "cnn_forward",
    "TransformerConfig", "attention", "attention_weights", "patch_embed",
    "self_block", "cross_block", "layer_forward", "transformer_forward",
    "transformer_forward_multi", "target_only_forward", "source_only_forward",
    "align", "classify", "distill_logits", "flat_index", "fuse_predict",
    "pair_order", "N_CLASSES",
    "ModelConfig", "init_model_params", "param_shapes", "n_parameters",
]
