#include "nextview/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "nextview/kernels.hpp"

namespace nextview::ag {

namespace k = nextview::kernels;

namespace {

Ref make_node(Tensor value, std::vector<Ref> parents, std::function<void(Node&)> backfn) {
    auto n = std::make_shared<Node>(std::move(value));
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backfn = std::move(backfn);
    }
    return n;
}

// C(M x N) += A(M x K) * B(N x K)^T
void mat_nt(int m, int n, int kk, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            c[static_cast<std::size_t>(i) * n + j] +=
                k::vdot(kk, a + static_cast<std::size_t>(i) * kk, b + static_cast<std::size_t>(j) * kk);
}

// C(K x N) += A(M x K)^T * B(M x N)
void mat_tn(int m, int n, int kk, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * kk;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < kk; ++p)
            if (arow[p] != 0.0) k::daxpy(n, arow[p], brow, c + static_cast<std::size_t>(p) * n);
    }
}

std::vector<double> transposed(const double* a, int rows, int cols) {
    std::vector<double> t(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            t[static_cast<std::size_t>(j) * rows + i] = a[static_cast<std::size_t>(i) * cols + j];
    return t;
}

void check(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Ref constant(Tensor v) { return std::make_shared<Node>(std::move(v)); }

Ref param(Tensor v) {
    auto n = std::make_shared<Node>(std::move(v));
    n->requires_grad = true;
    return n;
}

Ref add(const Ref& a, const Ref& b) {
    check(a->value.dims == b->value.dims, "add: shape mismatch");
    Tensor out(a->value.dims);
    k::vadd(out.data.size(), a->value.ptr(), b->value.ptr(), out.ptr());
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (int i = 0; i < 2; ++i)
            if (n.parents[i]->requires_grad) {
                n.parents[i]->ensure_grad();
                k::daxpy(n.grad.data.size(), 1.0, n.grad.ptr(), n.parents[i]->grad.ptr());
            }
    });
}

Ref sub(const Ref& a, const Ref& b) {
    check(a->value.dims == b->value.dims, "sub: shape mismatch");
    Tensor out(a->value.dims);
    k::vsub(out.data.size(), a->value.ptr(), b->value.ptr(), out.ptr());
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            k::daxpy(n.grad.data.size(), 1.0, n.grad.ptr(), n.parents[0]->grad.ptr());
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            k::daxpy(n.grad.data.size(), -1.0, n.grad.ptr(), n.parents[1]->grad.ptr());
        }
    });
}

Ref mul(const Ref& a, const Ref& b) {
    check(a->value.dims == b->value.dims, "mul: shape mismatch");
    Tensor out(a->value.dims);
    k::vmul(out.data.size(), a->value.ptr(), b->value.ptr(), out.ptr());
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const std::size_t sz = n.grad.data.size();
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < sz; ++i)
                n.parents[0]->grad.data[i] += n.grad.data[i] * n.parents[1]->value.data[i];
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < sz; ++i)
                n.parents[1]->grad.data[i] += n.grad.data[i] * n.parents[0]->value.data[i];
        }
    });
}

Ref scale(const Ref& a, double s) {
    Tensor out(a->value.dims);
    k::vscale(out.data.size(), a->value.ptr(), s, out.ptr());
    return make_node(std::move(out), {a}, [s](Node& n) {
        n.parents[0]->ensure_grad();
        k::daxpy(n.grad.data.size(), s, n.grad.ptr(), n.parents[0]->grad.ptr());
    });
}

namespace {
Ref unary(const Ref& a, double (*f)(double), double (*df)(double)) {
    Tensor out(a->value.dims);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(a->value.data[i]);
    return make_node(std::move(out), {a}, [df](Node& n) {
        n.parents[0]->ensure_grad();
        const auto& x = n.parents[0]->value.data;
        for (std::size_t i = 0; i < x.size(); ++i)
            n.parents[0]->grad.data[i] += n.grad.data[i] * df(x[i]);
    });
}

double sigmoid_f(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double sigmoid_df(double x) {
    const double s = sigmoid_f(x);
    return s * (1.0 - s);
}
double silu_f(double x) { return x * sigmoid_f(x); }
double silu_df(double x) {
    const double s = sigmoid_f(x);
    return s * (1.0 + x * (1.0 - s));
}
double gelu_f(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
double gelu_df(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
           x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}
double tanh_f(double x) { return std::tanh(x); }
double tanh_df(double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
}
}  // namespace

Ref silu(const Ref& a) { return unary(a, silu_f, silu_df); }
Ref gelu(const Ref& a) { return unary(a, gelu_f, gelu_df); }
Ref sigmoid(const Ref& a) { return unary(a, sigmoid_f, sigmoid_df); }
Ref tanh_(const Ref& a) { return unary(a, tanh_f, tanh_df); }

Ref reshape(const Ref& a, std::vector<int> dims) {
    check(Tensor::count(dims) == a->value.numel(), "reshape: element count mismatch");
    Tensor out(std::move(dims), a->value.data);
    return make_node(std::move(out), {a}, [](Node& n) {
        n.parents[0]->ensure_grad();
        k::daxpy(n.grad.data.size(), 1.0, n.grad.ptr(), n.parents[0]->grad.ptr());
    });
}

namespace {
void permute_copy(const Tensor& in, const std::vector<int>& perm, Tensor& out, bool backward_mode) {
    const int r = in.rank();
    std::vector<std::int64_t> in_strides(r, 1), out_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in.dims[i + 1];
    for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out.dims[i + 1];
    const std::int64_t n = in.numel();
    std::vector<int> idx(r, 0);
    for (std::int64_t lin = 0; lin < n; ++lin) {
        std::int64_t rem = lin, in_off = 0;
        for (int i = 0; i < r; ++i) {
            idx[i] = static_cast<int>(rem / in_strides[i]);
            rem %= in_strides[i];
            in_off += idx[i] * in_strides[i];
        }
        std::int64_t out_off = 0;
        for (int i = 0; i < r; ++i) out_off += idx[perm[i]] * out_strides[i];
        if (backward_mode)
            out.data[in_off] += in.data[out_off];  // in = grad-of-output viewed via out dims
        else
            out.data[out_off] = in.data[in_off];
    }
}
}  // namespace

Ref permute(const Ref& a, std::vector<int> perm) {
    check(static_cast<int>(perm.size()) == a->value.rank(), "permute: rank mismatch");
    std::vector<int> od(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) od[i] = a->value.dims[perm[i]];
    Tensor out(od);
    permute_copy(a->value, perm, out, false);
    return make_node(std::move(out), {a}, [perm](Node& n) {
        n.parents[0]->ensure_grad();
        // walk input linear order, pulling from the permuted grad
        const Tensor& g = n.grad;
        Tensor& pg = n.parents[0]->grad;
        const int r = pg.rank();
        std::vector<std::int64_t> in_strides(r, 1), out_strides(r, 1);
        for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * pg.dims[i + 1];
        for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * g.dims[i + 1];
        std::vector<std::int64_t> in_to_out(r);
        for (int i = 0; i < r; ++i) in_to_out[perm[i]] = out_strides[i];
        const std::int64_t nn = pg.numel();
        for (std::int64_t lin = 0; lin < nn; ++lin) {
            std::int64_t rem = lin, out_off = 0;
            for (int i = 0; i < r; ++i) {
                const std::int64_t q = rem / in_strides[i];
                rem %= in_strides[i];
                out_off += q * in_to_out[i];
            }
            pg.data[lin] += g.data[out_off];
        }
    });
}

Ref concat(const std::vector<Ref>& xs, int axis) {
    check(!xs.empty(), "concat: empty input list");
    const int r = xs[0]->value.rank();
    std::vector<int> od = xs[0]->value.dims;
    int total = 0;
    for (const auto& x : xs) {
        check(x->value.rank() == r, "concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            check(i == axis || x->value.dims[i] == od[i], "concat: shape mismatch");
        total += x->value.dims[axis];
    }
    od[axis] = total;
    Tensor out(od);

    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= od[i];
    for (int i = axis + 1; i < r; ++i) inner *= od[i];

    std::vector<std::int64_t> off(xs.size());
    std::int64_t cur = 0;
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
        off[xi] = cur;
        const Tensor& v = xs[xi]->value;
        const std::int64_t blk = v.dims[axis] * inner;
        for (std::int64_t o = 0; o < outer; ++o)
            std::memcpy(out.ptr() + (o * total + cur) * inner, v.ptr() + o * blk,
                        sizeof(double) * blk);
        cur += v.dims[axis];
    }
    return make_node(std::move(out), xs, [axis, off, outer, inner, total](Node& n) {
        for (std::size_t xi = 0; xi < n.parents.size(); ++xi) {
            auto& p = n.parents[xi];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            const std::int64_t blk = p->value.dims[axis] * inner;
            for (std::int64_t o = 0; o < outer; ++o)
                k::daxpy(blk, 1.0, n.grad.ptr() + (o * total + off[xi]) * inner,
                         p->grad.ptr() + o * blk);
        }
    });
}

Ref slice(const Ref& a, int axis, int start, int len) {
    const int r = a->value.rank();
    check(axis >= 0 && axis < r, "slice: bad axis");
    check(start >= 0 && start + len <= a->value.dims[axis], "slice: out of range");
    std::vector<int> od = a->value.dims;
    od[axis] = len;
    Tensor out(od);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= od[i];
    for (int i = axis + 1; i < r; ++i) inner *= od[i];
    const int full = a->value.dims[axis];
    for (std::int64_t o = 0; o < outer; ++o)
        std::memcpy(out.ptr() + o * len * inner, a->value.ptr() + (o * full + start) * inner,
                    sizeof(double) * len * inner);
    return make_node(std::move(out), {a}, [axis, start, len, outer, inner, full](Node& n) {
        (void)axis;
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o)
            k::daxpy(len * inner, 1.0, n.grad.ptr() + o * len * inner,
                     p->grad.ptr() + (o * full + start) * inner);
    });
}

Ref gather_tokens(const Ref& a, std::vector<int> idx) {
    check(a->value.rank() == 3, "gather_tokens: expect (B,L,D)");
    const int B = a->value.dim(0), L = a->value.dim(1), D = a->value.dim(2);
    for (int i : idx) check(i >= 0 && i < L, "gather_tokens: index out of range");
    const int Lp = static_cast<int>(idx.size());
    Tensor out({B, Lp, D});
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < Lp; ++i)
            std::memcpy(out.ptr() + (static_cast<std::int64_t>(b) * Lp + i) * D,
                        a->value.ptr() + (static_cast<std::int64_t>(b) * L + idx[i]) * D,
                        sizeof(double) * D);
    return make_node(std::move(out), {a}, [idx, B, L, D, Lp](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < Lp; ++i)
                k::daxpy(D, 1.0, n.grad.ptr() + (static_cast<std::int64_t>(b) * Lp + i) * D,
                         p->grad.ptr() + (static_cast<std::int64_t>(b) * L + idx[i]) * D);
    });
}

Ref matmul(const Ref& a, const Ref& b) {
    check(a->value.rank() == 2 && b->value.rank() == 2, "matmul: expect 2-D");
    const int M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(1);
    check(b->value.dim(0) == K, "matmul: inner dim mismatch");
    Tensor out({M, N});
    k::dgemm(M, N, K, a->value.ptr(), K, b->value.ptr(), N, out.ptr(), N, false);
    return make_node(std::move(out), {a, b}, [M, K, N](Node& n) {
        const auto& A = n.parents[0]->value;
        const auto& B = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            mat_nt(M, K, N, n.grad.ptr(), B.ptr(), n.parents[0]->grad.ptr());
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            mat_tn(M, N, K, A.ptr(), n.grad.ptr(), n.parents[1]->grad.ptr());
        }
    });
}

Ref bmm(const Ref& a, const Ref& b) {
    check(a->value.rank() == 3 && b->value.rank() == 3, "bmm: expect 3-D");
    const int Bn = a->value.dim(0), M = a->value.dim(1), K = a->value.dim(2), N = b->value.dim(2);
    check(b->value.dim(0) == Bn && b->value.dim(1) == K, "bmm: shape mismatch");
    Tensor out({Bn, M, N});
    for (int i = 0; i < Bn; ++i)
        k::dgemm(M, N, K, a->value.ptr() + static_cast<std::int64_t>(i) * M * K, K,
                 b->value.ptr() + static_cast<std::int64_t>(i) * K * N, N,
                 out.ptr() + static_cast<std::int64_t>(i) * M * N, N, false);
    return make_node(std::move(out), {a, b}, [Bn, M, K, N](Node& n) {
        for (int i = 0; i < Bn; ++i) {
            const double* g = n.grad.ptr() + static_cast<std::int64_t>(i) * M * N;
            const double* A = n.parents[0]->value.ptr() + static_cast<std::int64_t>(i) * M * K;
            const double* B = n.parents[1]->value.ptr() + static_cast<std::int64_t>(i) * K * N;
            if (n.parents[0]->requires_grad) {
                n.parents[0]->ensure_grad();
                mat_nt(M, K, N, g, B, n.parents[0]->grad.ptr() + static_cast<std::int64_t>(i) * M * K);
            }
            if (n.parents[1]->requires_grad) {
                n.parents[1]->ensure_grad();
                mat_tn(M, N, K, A, g, n.parents[1]->grad.ptr() + static_cast<std::int64_t>(i) * K * N);
            }
        }
    });
}

Ref matmul_broadcast(const Ref& a, const Ref& b) {
    check(a->value.rank() == 2 && b->value.rank() == 3, "matmul_broadcast: expect (M,K),(B,K,N)");
    const int M = a->value.dim(0), K = a->value.dim(1);
    const int Bn = b->value.dim(0), N = b->value.dim(2);
    check(b->value.dim(1) == K, "matmul_broadcast: inner dim mismatch");
    Tensor out({Bn, M, N});
    for (int i = 0; i < Bn; ++i)
        k::dgemm(M, N, K, a->value.ptr(), K, b->value.ptr() + static_cast<std::int64_t>(i) * K * N,
                 N, out.ptr() + static_cast<std::int64_t>(i) * M * N, N, false);
    return make_node(std::move(out), {a, b}, [Bn, M, K, N](Node& n) {
        for (int i = 0; i < Bn; ++i) {
            const double* g = n.grad.ptr() + static_cast<std::int64_t>(i) * M * N;
            const double* B = n.parents[1]->value.ptr() + static_cast<std::int64_t>(i) * K * N;
            if (n.parents[0]->requires_grad) {
                n.parents[0]->ensure_grad();
                mat_nt(M, K, N, g, B, n.parents[0]->grad.ptr());
            }
            if (n.parents[1]->requires_grad) {
                n.parents[1]->ensure_grad();
                mat_tn(M, N, K, n.parents[0]->value.ptr(), g,
                       n.parents[1]->grad.ptr() + static_cast<std::int64_t>(i) * K * N);
            }
        }
    });
}

Ref linear(const Ref& x, const Ref& w, const Ref& b) {
    const int in = w->value.dim(1), out_dim = w->value.dim(0);
    check(x->value.dims.back() == in, "linear: input dim mismatch");
    check(b->value.numel() == out_dim, "linear: bias dim mismatch");
    const std::int64_t R = x->value.numel() / in;
    std::vector<int> od = x->value.dims;
    od.back() = out_dim;
    Tensor out(od);
    const auto wt = transposed(w->value.ptr(), out_dim, in);  // (in, out)
    k::dgemm(static_cast<int>(R), out_dim, in, x->value.ptr(), in, wt.data(), out_dim, out.ptr(),
             out_dim, false);
    for (std::int64_t r = 0; r < R; ++r)
        k::vadd(out_dim, out.ptr() + r * out_dim, b->value.ptr(), out.ptr() + r * out_dim);
    return make_node(std::move(out), {x, w, b}, [R, in, out_dim](Node& n) {
        const double* g = n.grad.ptr();
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            // dX = dY * W : (R,out)x(out,in)
            k::dgemm(static_cast<int>(R), in, out_dim, g, out_dim, n.parents[1]->value.ptr(), in,
                     n.parents[0]->grad.ptr(), in, true);
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            // dW = dY^T * X : (out,R)x(R,in)
            mat_tn(static_cast<int>(R), in, out_dim, g, n.parents[0]->value.ptr(),
                   n.parents[1]->grad.ptr());
        }
        if (n.parents[2]->requires_grad) {
            n.parents[2]->ensure_grad();
            for (std::int64_t r = 0; r < R; ++r)
                k::daxpy(out_dim, 1.0, g + r * out_dim, n.parents[2]->grad.ptr());
        }
    });
}

namespace {
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
            int Wo, double* col) {
    // col is (C*kh*kw) x (Ho*Wo)
    const std::int64_t L = static_cast<std::int64_t>(Ho) * Wo;
    std::int64_t row = 0;
    for (int c = 0; c < C; ++c)
        for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj, ++row) {
                double* dst = col + row * L;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + di - pad;
                    if (iy < 0 || iy >= H) {
                        std::memset(dst + static_cast<std::int64_t>(oy) * Wo, 0, sizeof(double) * Wo);
                        continue;
                    }
                    const double* src = x + (static_cast<std::int64_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + dj - pad;
                        dst[static_cast<std::int64_t>(oy) * Wo + ox] =
                            (ix >= 0 && ix < W) ? src[ix] : 0.0;
                    }
                }
            }
}

void col2im_acc(const double* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, double* x) {
    const std::int64_t L = static_cast<std::int64_t>(Ho) * Wo;
    std::int64_t row = 0;
    for (int c = 0; c < C; ++c)
        for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj, ++row) {
                const double* src = col + row * L;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + di - pad;
                    if (iy < 0 || iy >= H) continue;
                    double* dst = x + (static_cast<std::int64_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + dj - pad;
                        if (ix >= 0 && ix < W) dst[ix] += src[static_cast<std::int64_t>(oy) * Wo + ox];
                    }
                }
            }
}
}  // namespace

Ref conv2d(const Ref& x, const Ref& w, const Ref& b, int stride, int pad) {
    check(x->value.rank() == 4 && w->value.rank() == 4, "conv2d: expect (B,C,H,W),(OC,C,kh,kw)");
    const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const int OC = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    check(w->value.dim(1) == C, "conv2d: channel mismatch");
    check(b->value.numel() == OC, "conv2d: bias mismatch");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    const int K = C * kh * kw;
    const std::int64_t L = static_cast<std::int64_t>(Ho) * Wo;

    Tensor out({B, OC, Ho, Wo});
    std::vector<double> col(static_cast<std::size_t>(K) * L);
    for (int bi = 0; bi < B; ++bi) {
        im2col(x->value.ptr() + static_cast<std::int64_t>(bi) * C * H * W, C, H, W, kh, kw, stride,
               pad, Ho, Wo, col.data());
        double* o = out.ptr() + static_cast<std::int64_t>(bi) * OC * L;
        k::dgemm(OC, static_cast<int>(L), K, w->value.ptr(), K, col.data(), static_cast<int>(L), o,
                 static_cast<int>(L), false);
        for (int oc = 0; oc < OC; ++oc) {
            const double bias = b->value.data[oc];
            double* row = o + static_cast<std::int64_t>(oc) * L;
            for (std::int64_t i = 0; i < L; ++i) row[i] += bias;
        }
    }
    return make_node(std::move(out), {x, w, b}, [B, C, H, W, OC, kh, kw, stride, pad, Ho, Wo,
                                                 K, L](Node& n) {
        // col buffers are recomputed rather than saved; im2col is cheap next to the GEMMs
        std::vector<double> col(static_cast<std::size_t>(K) * L);
        std::vector<double> dcol(static_cast<std::size_t>(K) * L);
        const bool need_dx = n.parents[0]->requires_grad;
        const bool need_dw = n.parents[1]->requires_grad;
        const bool need_db = n.parents[2]->requires_grad;
        if (need_dx) n.parents[0]->ensure_grad();
        if (need_dw) n.parents[1]->ensure_grad();
        if (need_db) n.parents[2]->ensure_grad();

        std::vector<double> wt;
        if (need_dx) wt = transposed(n.parents[1]->value.ptr(), OC, K);  // (K, OC)

        for (int bi = 0; bi < B; ++bi) {
            const double* g = n.grad.ptr() + static_cast<std::int64_t>(bi) * OC * L;
            if (need_dw || need_dx)
                im2col(n.parents[0]->value.ptr() + static_cast<std::int64_t>(bi) * C * H * W, C, H,
                       W, kh, kw, stride, pad, Ho, Wo, col.data());
            if (need_dw)
                mat_nt(OC, K, static_cast<int>(L), g, col.data(), n.parents[1]->grad.ptr());
            if (need_db)
                for (int oc = 0; oc < OC; ++oc)
                    n.parents[2]->grad.data[oc] += k::vsum(L, g + static_cast<std::int64_t>(oc) * L);
            if (need_dx) {
                k::dgemm(K, static_cast<int>(L), OC, wt.data(), OC, g, static_cast<int>(L),
                         dcol.data(), static_cast<int>(L), false);
                col2im_acc(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                           n.parents[0]->grad.ptr() + static_cast<std::int64_t>(bi) * C * H * W);
            }
        }
    });
}

Ref upsample_nearest2(const Ref& x) {
    check(x->value.rank() == 4, "upsample: expect (B,C,H,W)");
    const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    Tensor out({B, C, 2 * H, 2 * W});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x->value.ptr() + static_cast<std::int64_t>(bc) * H * W;
        double* dst = out.ptr() + static_cast<std::int64_t>(bc) * 4 * H * W;
        for (int y = 0; y < 2 * H; ++y)
            for (int xx = 0; xx < 2 * W; ++xx)
                dst[static_cast<std::int64_t>(y) * 2 * W + xx] =
                    src[static_cast<std::int64_t>(y / 2) * W + xx / 2];
    }
    return make_node(std::move(out), {x}, [B, C, H, W](Node& n) {
        n.parents[0]->ensure_grad();
        for (int bc = 0; bc < B * C; ++bc) {
            double* dst = n.parents[0]->grad.ptr() + static_cast<std::int64_t>(bc) * H * W;
            const double* g = n.grad.ptr() + static_cast<std::int64_t>(bc) * 4 * H * W;
            for (int y = 0; y < 2 * H; ++y)
                for (int xx = 0; xx < 2 * W; ++xx)
                    dst[static_cast<std::int64_t>(y / 2) * W + xx / 2] +=
                        g[static_cast<std::int64_t>(y) * 2 * W + xx];
        }
    });
}

namespace {
// shared span-normalization backward:
// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
void norm_span_backward(std::int64_t n, const double* xhat, const double* dxhat, double rstd,
                        double* dx) {
    double m1 = 0.0, m2 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        m1 += dxhat[i];
        m2 += dxhat[i] * xhat[i];
    }
    m1 /= static_cast<double>(n);
    m2 /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) dx[i] += rstd * (dxhat[i] - m1 - xhat[i] * m2);
}
}  // namespace

Ref group_norm(const Ref& x, int groups, const Ref& gamma, const Ref& beta, double eps) {
    check(x->value.rank() == 4, "group_norm: expect (B,C,H,W)");
    const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    check(C % groups == 0, "group_norm: groups must divide channels");
    check(gamma->value.numel() == C && beta->value.numel() == C, "group_norm: affine dims");
    const int cg = C / groups;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const std::int64_t span = cg * hw;

    Tensor out(x->value.dims);
    auto xhat = std::make_shared<std::vector<double>>(x->value.data.size());
    auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B) * groups);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            const std::int64_t base = (static_cast<std::int64_t>(b) * C + g * cg) * hw;
            const double* xs = x->value.ptr() + base;
            double mean = k::vsum(span, xs) / static_cast<double>(span);
            double var = 0.0;
            for (std::int64_t i = 0; i < span; ++i) {
                const double d = xs[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(span);
            const double rs = 1.0 / std::sqrt(var + eps);
            (*rstd)[static_cast<std::size_t>(b) * groups + g] = rs;
            for (std::int64_t i = 0; i < span; ++i) {
                const double xh = (xs[i] - mean) * rs;
                (*xhat)[base + i] = xh;
                const int c = g * cg + static_cast<int>(i / hw);
                out.data[base + i] = gamma->value.data[c] * xh + beta->value.data[c];
            }
        }
    return make_node(std::move(out), {x, gamma, beta},
                     [B, C, groups, cg, hw, span, xhat, rstd](Node& n) {
        std::vector<double> dxhat(span);
        for (int b = 0; b < B; ++b)
            for (int g = 0; g < groups; ++g) {
                const std::int64_t base = (static_cast<std::int64_t>(b) * C + g * cg) * hw;
                const double* gr = n.grad.ptr() + base;
                const double* xh = xhat->data() + base;
                for (int ci = 0; ci < cg; ++ci) {
                    const int c = g * cg + ci;
                    const double* grc = gr + static_cast<std::int64_t>(ci) * hw;
                    const double* xhc = xh + static_cast<std::int64_t>(ci) * hw;
                    if (n.parents[2]->requires_grad) {
                        n.parents[2]->ensure_grad();
                        n.parents[2]->grad.data[c] += k::vsum(hw, grc);
                    }
                    if (n.parents[1]->requires_grad) {
                        n.parents[1]->ensure_grad();
                        n.parents[1]->grad.data[c] += k::vdot(hw, grc, xhc);
                    }
                    const double gam = n.parents[1]->value.data[c];
                    for (std::int64_t i = 0; i < hw; ++i)
                        dxhat[static_cast<std::int64_t>(ci) * hw + i] = grc[i] * gam;
                }
                if (n.parents[0]->requires_grad) {
                    n.parents[0]->ensure_grad();
                    norm_span_backward(span, xh, dxhat.data(),
                                       (*rstd)[static_cast<std::size_t>(b) * groups + g],
                                       n.parents[0]->grad.ptr() + base);
                }
            }
    });
}

Ref layer_norm_last(const Ref& x, const Ref& gamma, const Ref& beta, double eps) {
    const int D = x->value.dims.back();
    check(gamma->value.numel() == D && beta->value.numel() == D, "layer_norm: affine dims");
    const std::int64_t R = x->value.numel() / D;
    Tensor out(x->value.dims);
    auto xhat = std::make_shared<std::vector<double>>(x->value.data.size());
    auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(R));
    for (std::int64_t r = 0; r < R; ++r) {
        const double* xs = x->value.ptr() + r * D;
        double mean = k::vsum(D, xs) / D;
        double var = 0.0;
        for (int i = 0; i < D; ++i) {
            const double d = xs[i] - mean;
            var += d * d;
        }
        var /= D;
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[static_cast<std::size_t>(r)] = rs;
        for (int i = 0; i < D; ++i) {
            const double xh = (xs[i] - mean) * rs;
            (*xhat)[r * D + i] = xh;
            out.data[r * D + i] = gamma->value.data[i] * xh + beta->value.data[i];
        }
    }
    return make_node(std::move(out), {x, gamma, beta}, [D, R, xhat, rstd](Node& n) {
        std::vector<double> dxhat(D);
        for (std::int64_t r = 0; r < R; ++r) {
            const double* gr = n.grad.ptr() + r * D;
            const double* xh = xhat->data() + r * D;
            if (n.parents[2]->requires_grad) {
                n.parents[2]->ensure_grad();
                k::daxpy(D, 1.0, gr, n.parents[2]->grad.ptr());
            }
            if (n.parents[1]->requires_grad) {
                n.parents[1]->ensure_grad();
                for (int i = 0; i < D; ++i) n.parents[1]->grad.data[i] += gr[i] * xh[i];
            }
            for (int i = 0; i < D; ++i) dxhat[i] = gr[i] * n.parents[1]->value.data[i];
            if (n.parents[0]->requires_grad) {
                n.parents[0]->ensure_grad();
                norm_span_backward(D, xh, dxhat.data(), (*rstd)[static_cast<std::size_t>(r)],
                                   n.parents[0]->grad.ptr() + r * D);
            }
        }
    });
}

Ref softmax_last(const Ref& x) {
    const int D = x->value.dims.back();
    const std::int64_t R = x->value.numel() / D;
    Tensor out(x->value.dims);
    for (std::int64_t r = 0; r < R; ++r) {
        const double* xs = x->value.ptr() + r * D;
        double* os = out.ptr() + r * D;
        const double mx = k::vmax(D, xs);
        double s = 0.0;
        for (int i = 0; i < D; ++i) {
            os[i] = std::exp(xs[i] - mx);
            s += os[i];
        }
        const double inv = 1.0 / s;
        for (int i = 0; i < D; ++i) os[i] *= inv;
    }
    return make_node(std::move(out), {x}, [D, R](Node& n) {
        n.parents[0]->ensure_grad();
        for (std::int64_t r = 0; r < R; ++r) {
            const double* y = n.value.ptr() + r * D;
            const double* g = n.grad.ptr() + r * D;
            const double dot = k::vdot(D, g, y);
            double* dx = n.parents[0]->grad.ptr() + r * D;
            for (int i = 0; i < D; ++i) dx[i] += (g[i] - dot) * y[i];
        }
    });
}

Ref add_channel_bias(const Ref& x, const Ref& s) {
    check(x->value.rank() == 4 && s->value.rank() == 2, "add_channel_bias: expect (B,C,H,W),(B,C)");
    const int B = x->value.dim(0), C = x->value.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(x->value.dim(2)) * x->value.dim(3);
    check(s->value.dim(0) == B && s->value.dim(1) == C, "add_channel_bias: shape mismatch");
    Tensor out(x->value.dims);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double bias = s->value.data[static_cast<std::size_t>(b) * C + c];
            const std::int64_t base = (static_cast<std::int64_t>(b) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) out.data[base + i] = x->value.data[base + i] + bias;
        }
    return make_node(std::move(out), {x, s}, [B, C, hw](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            k::daxpy(n.grad.data.size(), 1.0, n.grad.ptr(), n.parents[0]->grad.ptr());
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    n.parents[1]->grad.data[static_cast<std::size_t>(b) * C + c] +=
                        k::vsum(hw, n.grad.ptr() + (static_cast<std::int64_t>(b) * C + c) * hw);
        }
    });
}

Ref outer_tokens(const Ref& w, const Ref& f) {
    check(w->value.rank() == 1 || (w->value.rank() == 2 && w->value.dim(1) == 1),
          "outer_tokens: w must be (M) or (M,1)");
    check(f->value.rank() == 2, "outer_tokens: f must be (B,D)");
    const int M = w->value.dim(0);
    const int B = f->value.dim(0), D = f->value.dim(1);
    Tensor out({B, M, D});
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m)
            k::vscale(D, f->value.ptr() + static_cast<std::int64_t>(b) * D, w->value.data[m],
                      out.ptr() + (static_cast<std::int64_t>(b) * M + m) * D);
    return make_node(std::move(out), {w, f}, [M, B, D](Node& n) {
        for (int b = 0; b < B; ++b)
            for (int m = 0; m < M; ++m) {
                const double* g = n.grad.ptr() + (static_cast<std::int64_t>(b) * M + m) * D;
                if (n.parents[0]->requires_grad) {
                    n.parents[0]->ensure_grad();
                    n.parents[0]->grad.data[m] +=
                        k::vdot(D, g, n.parents[1]->value.ptr() + static_cast<std::int64_t>(b) * D);
                }
                if (n.parents[1]->requires_grad) {
                    n.parents[1]->ensure_grad();
                    k::daxpy(D, n.parents[0]->value.data[m], g,
                             n.parents[1]->grad.ptr() + static_cast<std::int64_t>(b) * D);
                }
            }
    });
}

Ref mean_all(const Ref& a) {
    const double n = static_cast<double>(a->value.numel());
    Tensor out = Tensor::scalar(k::vsum(a->value.data.size(), a->value.ptr()) / n);
    return make_node(std::move(out), {a}, [n](Node& nd) {
        nd.parents[0]->ensure_grad();
        const double g = nd.grad.data[0] / n;
        for (auto& v : nd.parents[0]->grad.data) v += g;
    });
}

Ref mean_spatial(const Ref& a) {
    check(a->value.rank() == 4, "mean_spatial: expect (B,C,H,W)");
    const int B = a->value.dim(0), C = a->value.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(a->value.dim(2)) * a->value.dim(3);
    Tensor out({B, C});
    for (int i = 0; i < B * C; ++i)
        out.data[i] = k::vsum(hw, a->value.ptr() + static_cast<std::int64_t>(i) * hw) /
                      static_cast<double>(hw);
    return make_node(std::move(out), {a}, [B, C, hw](Node& n) {
        n.parents[0]->ensure_grad();
        for (int i = 0; i < B * C; ++i) {
            const double g = n.grad.data[i] / static_cast<double>(hw);
            double* dst = n.parents[0]->grad.ptr() + static_cast<std::int64_t>(i) * hw;
            for (std::int64_t j = 0; j < hw; ++j) dst[j] += g;
        }
    });
}

Ref mse(const Ref& a, const Ref& b) {
    check(a->value.dims == b->value.dims, "mse: shape mismatch");
    const double n = static_cast<double>(a->value.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.data.size(); ++i) {
        const double d = a->value.data[i] - b->value.data[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s / n);
    return make_node(std::move(out), {a, b}, [n](Node& nd) {
        const double g = 2.0 * nd.grad.data[0] / n;
        const auto& av = nd.parents[0]->value.data;
        const auto& bv = nd.parents[1]->value.data;
        if (nd.parents[0]->requires_grad) {
            nd.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < av.size(); ++i)
                nd.parents[0]->grad.data[i] += g * (av[i] - bv[i]);
        }
        if (nd.parents[1]->requires_grad) {
            nd.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < av.size(); ++i)
                nd.parents[1]->grad.data[i] -= g * (av[i] - bv[i]);
        }
    });
}

void backward(const Ref& loss) {
    if (!loss->requires_grad)
        throw std::logic_error("backward: loss does not depend on any parameter");
    static int epoch = 0;
    const int mark = ++epoch;

    // iterative DFS, post-order
    std::vector<Node*> order;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({loss.get(), 0});
    loss->visit_mark = mark;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && p->visit_mark != mark) {
                p->visit_mark = mark;
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        n->ensure_grad();
        std::fill(n->grad.data.begin(), n->grad.data.end(), 0.0);
    }
    loss->grad.data.assign(loss->grad.data.size(), 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backfn) (*it)->backfn(**it);
}

}  // namespace nextview::ag
