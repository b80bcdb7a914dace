"""Trainable FSRCNN/SRCNN super-resolution networks on the CPU, from scratch."""

from .data import ImageY, SamplePair, bicubic_resize, load_image, make_training_set, upscale_full
from .evaluation import BenchResult, EvalResult, bench, evaluate, psnr
from .model import (ArchitectureSpec, FSRCNN, InitPolicy, Model, SRCNN_915, SRCNN_EX_955,
                    TRANSITION_1, TRANSITION_2, build, count_parameters, estimate_cost,
                    load, load_file, save, save_file, speedup_vs_srcnn_ex,
                    transplant_conv_layers)
from .training import (TrainConfig, TrainReport, finetune_for_scale, train,
                       two_step_schedule)

__version__ = "0.1.0"
