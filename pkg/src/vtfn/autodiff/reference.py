"""Direct loop convolution, the reference path the patch-matrix conv is checked against."""
import numpy as np

from .ops import output_dims, _triple


def conv3d_naive(x, kernel, bias, stride=1, padding=0):
    """Seven nested loops over (co, t, h, w, ci, dt, dh, dw), accumulated in float64."""
    stride, padding = _triple(stride), _triple(padding)
    c_out, c_in, kt, kh, kw = kernel.shape
    C, T, H, W = x.shape
    To, Ho, Wo = output_dims((T, H, W), (kt, kh, kw), stride, padding)
    sT, sH, sW = stride
    pT, pH, pW = padding
    out = np.zeros((c_out, To, Ho, Wo), dtype=np.float64)
    for co in range(c_out):
        for t in range(To):
            for h in range(Ho):
                for w in range(Wo):
                    acc = float(bias[co])
                    for ci in range(c_in):
                        for dt in range(kt):
                            it = t * sT + dt - pT
                            if it < 0 or it >= T:
                                continue
                            for dh in range(kh):
                                ih = h * sH + dh - pH
                                if ih < 0 or ih >= H:
                                    continue
                                for dw in range(kw):
                                    iw = w * sW + dw - pW
                                    if 0 <= iw < W:
                                        acc += float(x[ci, it, ih, iw]) * float(kernel[co, ci, dt, dh, dw])
                    out[co, t, h, w] = acc
    return out
