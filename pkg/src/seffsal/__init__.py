"""Multiscale RGB-D salient object detection with saliency-enhanced fusion."""

from .backbone import Backbone, BackboneConfig, FeaturePyramid, build_backbone, extract_features
from .data import Sample, ScalePyramid, load_dataset, load_sample, make_pyramid, synth_generate, write_dataset
from .decoder import CprDecoder, DecoderStage, decode
from .losses import ApiWeights, a_bce, a_iou, a_l1, adaptive_weight, api_loss, total_loss
from .metrics import MetricReport, e_measure_max, evaluate_dataset, f_measure_max, mae, s_measure
from .net import (GuidanceMap, NetConfig, SaliencyBundle, SaliencyNet, build_guidance,
                  build_variant, fuse_cross_scale, fuse_rgbd, predict_head)
from .seff import CbrFusion, SeffBlock, fusion_block
from .trainer import TrainConfig, infer, lr_schedule, restore_net, save_checkpoint, train

__version__ = "0.1.0"
