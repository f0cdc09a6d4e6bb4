#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "nextview/autodiff.hpp"
#include "nextview/rng.hpp"

namespace nextview {

// Ordered named parameter set. One store backs the whole model (UNet plus
// conditioning modules) so a checkpoint is a flat name -> array map.
class ParamStore {
public:
    ag::Ref add(const std::string& name, Tensor init) {
        if (index_.count(name)) throw std::logic_error("ParamStore: duplicate name " + name);
        auto ref = ag::param(std::move(init));
        index_[name] = items_.size();
        items_.push_back({name, ref});
        return ref;
    }

    ag::Ref get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::logic_error("ParamStore: unknown name " + name);
        return items_[it->second].second;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::pair<std::string, ag::Ref>>& items() const { return items_; }

    std::int64_t total_params() const {
        std::int64_t n = 0;
        for (const auto& [name, ref] : items_) n += ref->value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, ref] : items_) {
            ref->ensure_grad();
            std::fill(ref->grad.data.begin(), ref->grad.data.end(), 0.0);
        }
    }

    double grad_norm() const {
        double s = 0.0;
        for (const auto& [name, ref] : items_)
            if (ref->grad.numel() == ref->value.numel())
                for (double g : ref->grad.data) s += g * g;
        return std::sqrt(s);
    }

private:
    std::vector<std::pair<std::string, ag::Ref>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// fan-in scaled uniform init
inline Tensor init_uniform(std::vector<int> dims, int fan_in, Rng& rng) {
    Tensor t(std::move(dims));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace nextview
