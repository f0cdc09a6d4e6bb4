#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nextview/tensor.hpp"

// Define-by-run reverse-mode autodiff over Tensor. A training step builds a
// fresh graph of Nodes referencing the persistent parameter leaves; backward()
// runs the recorded closures in reverse topological order. All inner loops
// route through nextview::kernels so both backends serve forward and backward.

namespace nextview::ag {

struct Node;
using Ref = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;                      // allocated lazily by backward()
    bool requires_grad = false;
    std::vector<Ref> parents;
    std::function<void(Node&)> backfn;  // scatter node.grad into parents
    int visit_mark = 0;               // scratch for topo sort

    explicit Node(Tensor v) : value(std::move(v)) {}

    void ensure_grad() {
        if (grad.dims != value.dims) grad = Tensor(value.dims);
    }
};

Ref constant(Tensor v);
Ref param(Tensor v);  // leaf with requires_grad

// elementwise
Ref add(const Ref& a, const Ref& b);
Ref sub(const Ref& a, const Ref& b);
Ref mul(const Ref& a, const Ref& b);
Ref scale(const Ref& a, double s);
Ref silu(const Ref& a);
Ref gelu(const Ref& a);
Ref sigmoid(const Ref& a);
Ref tanh_(const Ref& a);

// shape
Ref reshape(const Ref& a, std::vector<int> dims);
Ref permute(const Ref& a, std::vector<int> perm);
Ref concat(const std::vector<Ref>& xs, int axis);
Ref slice(const Ref& a, int axis, int start, int len);
// out[b,i,:] = a[b,idx[i],:] for a of shape (B,L,D)
Ref gather_tokens(const Ref& a, std::vector<int> idx);

// linear algebra
Ref matmul(const Ref& a, const Ref& b);               // (M,K)x(K,N)
Ref bmm(const Ref& a, const Ref& b);                  // (B,M,K)x(B,K,N)
Ref matmul_broadcast(const Ref& a, const Ref& b);     // (M,K)x(B,K,N)->(B,M,N)
Ref linear(const Ref& x, const Ref& w, const Ref& b); // x(...,in) w(out,in) b(out)

// conv / resampling on (B,C,H,W)
Ref conv2d(const Ref& x, const Ref& w, const Ref& b, int stride, int pad);
Ref upsample_nearest2(const Ref& x);

// normalization / softmax
Ref group_norm(const Ref& x, int groups, const Ref& gamma, const Ref& beta, double eps = 1e-5);
Ref layer_norm_last(const Ref& x, const Ref& gamma, const Ref& beta, double eps = 1e-5);
Ref softmax_last(const Ref& x);

// broadcasts
Ref add_channel_bias(const Ref& x, const Ref& s);     // x(B,C,H,W) + s(B,C)
Ref outer_tokens(const Ref& w, const Ref& f);         // w(M) outer f(B,D) -> (B,M,D)

// reductions
Ref mean_all(const Ref& a);
Ref mean_spatial(const Ref& a);  // (B,C,H,W) -> (B,C)
Ref mse(const Ref& a, const Ref& b);

void backward(const Ref& loss);

}  // namespace nextview::ag
