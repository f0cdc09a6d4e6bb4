#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nextview {

// Dense row-major tensor of doubles. Rank up to 4 in practice
// (B,C,H,W for feature maps, B,L,D for token sequences).
struct Tensor {
    std::vector<int> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)), data(count(dims), 0.0) {}
    Tensor(std::vector<int> d, std::vector<double> v) : dims(std::move(d)), data(std::move(v)) {
        if (static_cast<std::size_t>(count(dims)) != data.size())
            throw std::invalid_argument("Tensor: shape/data mismatch");
    }

    static std::int64_t count(const std::vector<int>& d) {
        std::int64_t n = 1;
        for (int x : d) n *= x;
        return n;
    }

    static Tensor zeros(std::vector<int> d) { return Tensor(std::move(d)); }
    static Tensor full(std::vector<int> d, double v) {
        Tensor t(std::move(d));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(dims.size()); }
    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& at(std::initializer_list<int> idx) { return data[offset(idx)]; }
    double at(std::initializer_list<int> idx) const { return data[offset(idx)]; }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims[i]);
        }
        return s + ")";
    }

private:
    std::size_t offset(std::initializer_list<int> idx) const {
        assert(idx.size() == dims.size());
        std::size_t off = 0;
        std::size_t i = 0;
        for (int v : idx) {
            off = off * static_cast<std::size_t>(dims[i]) + static_cast<std::size_t>(v);
            ++i;
        }
        return off;
    }
};

}  // namespace nextview
