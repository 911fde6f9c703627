#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "liclab/common.hpp"

namespace liclab {

// Dense row-major float32 tensor. Activations use [batch, channel, height, width].
struct Tensor {
    std::vector<int> dims;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d, float fill = 0.0f);

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.dims); }
    static Tensor scalar(float v);

    std::size_t numel() const { return data.size(); }
    int ndim() const { return static_cast<int>(dims.size()); }
    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    // 4-d accessors (activations and conv weights).
    float& at(int b, int c, int h, int w) {
        return data[static_cast<std::size_t>(((b * dims[1] + c) * dims[2] + h) * dims[3] + w)];
    }
    float at(int b, int c, int h, int w) const {
        return data[static_cast<std::size_t>(((b * dims[1] + c) * dims[2] + h) * dims[3] + w)];
    }

    std::string shape_str() const;
    void fill(float v);
    bool all_finite() const;
};

std::size_t shape_numel(const std::vector<int>& dims);

// Throws DimensionError naming `what` when the shapes differ.
void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

}  // namespace liclab
