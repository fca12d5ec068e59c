# Compiled conv2d kernels: same-padded NCHW cross-correlation plus its two
# gradients, written as direct loops with a contiguous inner width axis so the
# compiler can vectorize the fused multiply-adds. Output buffers arrive
# pre-zeroed from the wrapper.

ctypedef fused real:
    float
    double


def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                   real[:, :, :, ::1] out):
    cdef Py_ssize_t nb = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t b, o, c, u, v, i, j, di, dj, ilo, ihi, jlo, jhi
    cdef real wv
    for b in range(nb):
        for o in range(cout):
            for c in range(cin):
                for u in range(kh):
                    di = u - ph
                    ilo = -di if di < 0 else 0
                    ihi = h - di if di > 0 else h
                    for v in range(kw):
                        dj = v - pw
                        jlo = -dj if dj < 0 else 0
                        jhi = wd - dj if dj > 0 else wd
                        wv = w[o, c, u, v]
                        for i in range(ilo, ihi):
                            for j in range(jlo, jhi):
                                out[b, o, i, j] += wv * x[b, c, i + di, j + dj]


def conv2d_grad_weight(real[:, :, :, ::1] x, real[:, :, :, ::1] gy,
                       real[:, :, :, ::1] gw):
    cdef Py_ssize_t nb = x.shape[0], cin = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = gw.shape[0], kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t b, o, c, u, v, i, j, di, dj, ilo, ihi, jlo, jhi
    cdef real acc
    for o in range(cout):
        for c in range(cin):
            for u in range(kh):
                di = u - ph
                ilo = -di if di < 0 else 0
                for v in range(kw):
                    dj = v - pw
                    jlo = -dj if dj < 0 else 0
                    acc = 0
                    for b in range(nb):
                        ihi = h - di if di > 0 else h
                        jhi = wd - dj if dj > 0 else wd
                        for i in range(ilo, ihi):
                            for j in range(jlo, jhi):
                                acc += gy[b, o, i, j] * x[b, c, i + di, j + dj]
                    gw[o, c, u, v] = acc
