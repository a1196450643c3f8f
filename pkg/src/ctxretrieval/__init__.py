"""Context-aware query encoding for particular-object retrieval.

Regional max-pooling descriptors (plain and saliency-weighted), spatial
attention over intermediate feature maps, four query encoding models, and
a mean-average-precision evaluation harness, all runnable on a
deterministic toy convolutional network.
"""

from .attention import AttentionParams, build_mask, g, modulate
from .convnet import (LayerSpec, NetworkSpec, RFParams, forward, load_network,
                      project_roi, rf_params, save_network, toy_network)
from .encoder import (PcaModel, RegionGrid, aggregate, encode,
                      encode_multiscale, fit_pca, load_pca, mac, rmac_grid,
                      save_pca, whiten)
from .evaluation import (DatasetManifest, SyntheticConfig, average_precision,
                         generate_synthetic, load_manifest,
                         mean_average_precision, save_manifest)
from .harness import (build_index, evaluate_grid, fit_dataset_pca,
                      format_report)
from .pipeline import (DescriptorIndex, PipelineConfig, QuerySpec,
                       encode_database_plain, encode_database_sa, encode_query,
                       load_index, save_index, search)
from .saliency import (BinaryMap, SaliencyMap, binarize, compute_saliency,
                       connected_components, region_weight, resize_binary)
from .tensor import (FeatureMap, Image, Rect, l2_normalize, read_fmap,
                     write_fmap)

__version__ = "0.1.0"
