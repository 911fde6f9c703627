#pragma once

#include "liclab/adapters.hpp"
#include "liclab/codec.hpp"

namespace liclab::ref {

// Serial double-precision re-evaluation of the additive-noise
// rate-distortion objective, structured the same way as codec_forward +
// rd_loss but independent of the autograd path. Backs the finite-difference
// gradient checks and the float-vs-double forward cross-check.
double rd_loss(const CodecModel& model, const AdapterSet* adapters, const Tensor& x,
               const Tensor& noise_y, const Tensor& noise_z, float lambda);

}  // namespace liclab::ref
