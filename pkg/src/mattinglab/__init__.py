"""mattinglab: a desk-scale alpha matting laboratory.

Synthetic class-labeled matting data, a patch classifier whose class
activation maps are stitched into semantic trimaps, a small encoder-decoder
matting network trained under reconstruction, discriminator, and
content-weighted gradient losses, and the standard SAD/MSE/Grad/Conn
evaluation metrics. Everything runs on CPU with numpy/scipy.
"""

__version__ = "0.1.0"

from .autodiff import OpGraph, GraphError, evaluate, backward, grad_check
from .synth import (ClassCatalog, MattingSample, TrimapRegions, AugmentParams,
                    composite, gen_foreground, gen_background, make_trimap,
                    make_sample, augment, generate_dataset)
from .semantics import (SemanticTrimap, DiscriminatorOutput, build_classifier,
                        classifier_forward, cam, partition_patches, stitch,
                        build_semantic_trimap)
from .network import Prediction, build_matting_net, matting_forward, blend_with_trimap
from .losses import LossReport, combine
from .metrics import (MetricReport, StatsReport, sad, mse, grad_metric,
                      conn_metric, class_report, dataset_stats)
from .training import (TrainConfig, train_classifier, train_discriminator,
                       train_matting, run_ablation, save_checkpoint,
                       load_checkpoint, restore_graph)
