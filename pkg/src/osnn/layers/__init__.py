from .blocked import (
    TRANSFORMS, BlockPadding, BlockedLinear, bsp_op, forward_blocked, grad_blocked, init_gain, pad_to_block,
)
from .conv import ConvSpec, adaptive_avg_pool, conv_forward, im2col, im2col_op, pool_matrix
from .model import IdealExecutor, Sequential, build_paper_model
