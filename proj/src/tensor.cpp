#include "liclab/tensor.hpp"

#include <cmath>
#include <sstream>

namespace liclab {

std::size_t shape_numel(const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) {
        if (d < 0) throw DimensionError("negative extent " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> d, float fill_value)
    : dims(std::move(d)), data(shape_numel(dims), fill_value) {}

Tensor Tensor::scalar(float v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << "x";
        os << dims[i];
    }
    os << "]";
    return os.str();
}

void Tensor::fill(float v) {
    for (auto& x : data) x = v;
}

bool Tensor::all_finite() const {
    for (float x : data) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (!a.same_shape(b)) {
        throw DimensionError(what + ": " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace liclab
