#pragma once

#include <cstdint>
#include <vector>

#include "liclab/adapters.hpp"
#include "liclab/codec.hpp"

namespace liclab {

// LICB container: magic, version u16, model_id u64, adapter_id u64 (0 =
// none), width u32, height u32, lambda_index u8, z payload (u32 length +
// bytes), y payload (u32 length + bytes), trailing FNV-1a checksum u64.
struct BitstreamHeader {
    std::uint16_t version = 1;
    std::uint64_t model_id = 0;
    std::uint64_t adapter_id = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint8_t lambda_index = 0;
};

BitstreamHeader read_bitstream_header(const std::vector<std::uint8_t>& bytes);

struct EncodeResult {
    std::vector<std::uint8_t> bytes;
    Tensor reconstruction;  // [3, h, w], the decoder's exact output
    double bpp = 0.0;             // whole file, true pixel count
    double payload_bits = 0.0;    // coded z + y payload bytes * 8
    double estimated_bits = 0.0;  // model cross-entropy of the coded latents
    double psnr = 0.0;
};

// Pads internally to the model grid and records the true extents in the
// header. With adapters, g_a adapters shape the latents and the transmitted
// (decoder-side) set binds the stream via adapter_id.
EncodeResult encode_image(const CodecModel& model, const AdapterSet* adapters, const Tensor& img);

// Requires the matching model (and the matching adapter set when the stream
// was encoded with one). Returns the [3, h, w] reconstruction, bit-identical
// to the encoder's.
Tensor decode_image(const CodecModel& model, const AdapterSet* adapters,
                    const std::vector<std::uint8_t>& bytes);

}  // namespace liclab
