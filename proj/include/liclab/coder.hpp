#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "liclab/common.hpp"

namespace liclab {

// Quantized symbol distribution over the integer alphabet [lo, hi] plus a
// trailing escape symbol. Frequencies sum to exactly 2^16 and every symbol
// keeps at least one count, so the CDF is strictly increasing.
struct SymbolModel {
    static constexpr std::uint32_t kTotal = 1u << 16;
    static constexpr int kAlphabetBound = 255;  // default latent alphabet [-255, 255]

    int lo = 0;
    std::vector<std::uint32_t> cdf;  // size = symbol count + 1; cdf.front()=0, cdf.back()=kTotal

    int symbol_count() const { return static_cast<int>(cdf.size()) - 1; }
    int escape_index() const { return symbol_count() - 1; }
    int hi() const { return lo + symbol_count() - 2; }

    // pmf over [lo, lo + pmf.size() - 1]; escape_mass appended as the last
    // symbol. Values may be unnormalized; zeros are lifted to one count.
    static SymbolModel from_pmf(int lo, const std::vector<double>& pmf, double escape_mass);
};

// Bin-integrated Gaussian / logistic distributions over [-255, 255].
SymbolModel gaussian_symbol_model(double mu, double sigma);
SymbolModel logistic_symbol_model(double loc, double scale);

// Carry-counting byte-wise range coder (32-bit range, 16-bit frequencies).
class RangeEncoder {
   public:
    void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total);
    // Escapes out-of-alphabet values to 4 raw bytes.
    void encode_symbol(const SymbolModel& m, int value);
    std::vector<std::uint8_t> finish();

   private:
    void shift_low();
    std::vector<std::uint8_t> out_;
    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
};

class RangeDecoder {
   public:
    RangeDecoder(const std::uint8_t* bytes, std::size_t size);

    std::uint32_t decode_freq(std::uint32_t total);
    void decode_update(std::uint32_t cum, std::uint32_t freq);
    int decode_symbol(const SymbolModel& m);

   private:
    std::uint8_t next_byte();
    const std::uint8_t* p_;
    std::size_t n_, pos_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t code_ = 0;
    std::uint32_t r_ = 0;
};

// List-level wrappers: one model per symbol position.
std::vector<std::uint8_t> range_encode(const std::vector<int>& symbols,
                                       const std::function<const SymbolModel&(std::size_t)>& model_at);
std::vector<int> range_decode(const std::vector<std::uint8_t>& bytes, std::size_t count,
                              const std::function<const SymbolModel&(std::size_t)>& model_at);

}  // namespace liclab
