from .arrays import complex_matrix, is_unitary, matmul, real_tensor
from .autograd import (
    Tensor, abs2, add, as_tensor, backward, clip, cmatmul, cmul, complex_value, concat,
    cos, detach, div, exp, expi, log, make_node, mean, mul, neg, relu, reduce_sum,
    reshape, sin, softmax, softmax_cross_entropy, sqrt, square, straight_through, sub,
    take, transpose, unbroadcast,
)
from .autograd import matmul as tmatmul
from .gradcheck import check_gradients, numeric_grad, relative_error
