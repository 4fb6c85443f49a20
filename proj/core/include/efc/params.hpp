#pragma once

#include <string>
#include <vector>

#include "efc/errors.hpp"
#include "efc/tensor.hpp"

namespace efc {

// A named model parameter. Frozen (non-trainable) parameters never receive
// gradient buffers or optimizer updates.
struct LayerParam {
    std::string name;  // unique dotted path, e.g. "encoder.block0.conv1.w"
    Tensor tensor;
    bool trainable = true;
};

class ParamSet {
public:
    LayerParam& add(std::string name, Tensor t, bool trainable = true) {
        for (const auto& p : params_) {
            if (p.name == name) throw config_error("duplicate parameter name: " + name);
        }
        t.set_requires_grad(trainable);
        params_.push_back({std::move(name), std::move(t), trainable});
        return params_.back();
    }

    LayerParam& find(const std::string& name) {
        for (auto& p : params_) {
            if (p.name == name) return p;
        }
        throw config_error("unknown parameter: " + name);
    }

    const LayerParam& find(const std::string& name) const {
        return const_cast<ParamSet*>(this)->find(name);
    }

    bool contains(const std::string& name) const {
        for (const auto& p : params_) {
            if (p.name == name) return true;
        }
        return false;
    }

    void set_trainable(const std::string& prefix, bool trainable) {
        for (auto& p : params_) {
            if (p.name.rfind(prefix, 0) == 0) {
                p.trainable = trainable;
                p.tensor.set_requires_grad(trainable);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    std::vector<LayerParam>& all() { return params_; }
    const std::vector<LayerParam>& all() const { return params_; }
    size_t size() const { return params_.size(); }

private:
    std::vector<LayerParam> params_;
};

}  // namespace efc
