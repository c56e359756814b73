# cython: boundscheck=False, wraparound=False, cdivision=True
"""Native kernels. Mirrors `reference.py`; see that module for the array
conventions and integration-order contract. The matmul kernel delegates
to BLAS, so the backends agree to ulp level rather than bit for bit (the
cross-backend tests pin the tolerance)."""

from libc.math cimport M_PI, cos, fmod, sin, tan, tanh

from scipy.linalg.cython_blas cimport dgemv

cdef double TWO_PI = 2.0 * M_PI


cdef inline double _wrap(double a) noexcept nogil:
    if -M_PI < a <= M_PI:  # already wrapped; keep bit-exact
        return a
    cdef double r = fmod(a + M_PI, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - M_PI


def wrap_angle(double a):
    """Wrap an angle to (-pi, pi]."""
    return _wrap(a)


def bicycle_step(double[::1] state, double steer_cmd, double pedal_cmd,
                 double[::1] core, double[::1] thresholds, double[::1] scales,
                 double dt, double[::1] out):
    cdef double x = state[0]
    cdef double y = state[1]
    cdef double yaw = state[2]
    cdef double v = state[3]
    cdef double steer = state[5]
    cdef int gear = <int> state[6]

    cdef double target = steer_cmd * core[1]
    cdef double dmax = core[5] * dt
    cdef double d = target - steer
    if d > dmax:
        d = dmax
    elif d < -dmax:
        d = -dmax
    cdef double steer_new = steer + d

    cdef double accel
    if pedal_cmd >= 0.0:
        accel = pedal_cmd * core[2] * scales[gear - 1]
    else:
        accel = pedal_cmd * core[3]
    cdef double v_new = v + accel * dt
    if v_new < 0.0:
        v_new = 0.0
    elif v_new > core[4]:
        v_new = core[4]

    out[0] = x + v_new * cos(yaw) * dt
    out[1] = y + v_new * sin(yaw) * dt
    out[2] = _wrap(yaw + v_new * tan(steer_new) / core[0] * dt)
    out[3] = v_new
    out[4] = 0.0
    out[5] = steer_new
    cdef int g = 1
    cdef Py_ssize_t i
    for i in range(thresholds.shape[0]):
        if thresholds[i] < v_new:
            g += 1
    out[6] = <double> g


def observe_window(double[::1] state, double[:, ::1] wps, Py_ssize_t t,
                   Py_ssize_t window, double[::1] out):
    cdef double x = state[0]
    cdef double y = state[1]
    cdef double yaw = state[2]
    cdef double c = cos(yaw)
    cdef double s = sin(yaw)
    cdef Py_ssize_t last = wps.shape[0] - 1
    cdef Py_ssize_t j, idx
    cdef double dx, dy
    out[0] = state[3]
    out[1] = state[4]
    out[2] = state[6]
    for j in range(window):
        idx = t + j
        if idx > last:
            idx = last
        dx = wps[idx, 0] - x
        dy = wps[idx, 1] - y
        out[3 + j] = c * dx + s * dy
        out[3 + window + j] = -s * dx + c * dy
        out[3 + 2 * window + j] = _wrap(wps[idx, 3] - yaw)


def affine_act(double[:, ::1] w, double[::1] b, double[::1] x, int act,
               double[::1] out):
    cdef int m = <int> w.shape[0]
    cdef int n = <int> w.shape[1]
    cdef int inc = 1
    cdef double alpha = 1.0
    cdef double beta = 1.0
    cdef char trans = b'T'
    cdef Py_ssize_t i
    for i in range(m):
        out[i] = b[i]
    if m > 0 and n > 0:
        # row-major w is the transposed (n x m) column-major view
        dgemv(&trans, &n, &m, &alpha, &w[0, 0], &n, &x[0], &inc,
              &beta, &out[0], &inc)
    if act == 1:
        for i in range(m):
            out[i] = tanh(out[i])
