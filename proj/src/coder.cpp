#include "liclab/coder.hpp"

#include <algorithm>
#include <cmath>

#include "liclab/autograd.hpp"

namespace liclab {

SymbolModel SymbolModel::from_pmf(int lo, const std::vector<double>& pmf, double escape_mass) {
    if (pmf.empty()) throw ConfigError("symbol model needs a nonempty pmf");
    const std::size_t nsym = pmf.size() + 1;
    double total = std::max(escape_mass, 0.0);
    for (double p : pmf) total += std::max(p, 0.0);
    if (total <= 0.0) total = 1.0;

    std::vector<std::uint32_t> freq(nsym);
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < nsym; ++i) {
        const double p = (i + 1 == nsym ? std::max(escape_mass, 0.0) : std::max(pmf[i], 0.0)) / total;
        freq[i] = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::floor(p * kTotal)));
        sum += freq[i];
    }
    // Repair rounding drift on the largest bins; every symbol keeps >= 1.
    while (sum > kTotal) {
        const auto it = std::max_element(freq.begin(), freq.end());
        const std::uint32_t cut = static_cast<std::uint32_t>(std::min<std::uint64_t>(*it - 1, sum - kTotal));
        if (cut == 0) throw NumericalError("cannot normalize symbol frequencies");
        *it -= cut;
        sum -= cut;
    }
    if (sum < kTotal) {
        *std::max_element(freq.begin(), freq.end()) += static_cast<std::uint32_t>(kTotal - sum);
    }

    SymbolModel m;
    m.lo = lo;
    m.cdf.resize(nsym + 1);
    m.cdf[0] = 0;
    for (std::size_t i = 0; i < nsym; ++i) m.cdf[i + 1] = m.cdf[i] + freq[i];
    return m;
}

namespace {

constexpr int kBound = SymbolModel::kAlphabetBound;
constexpr double kInvSqrt2 = 0.70710678118654752440;

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

SymbolModel gaussian_symbol_model(double mu, double sigma) {
    std::vector<double> pmf(2 * kBound + 1, 0.0);
    // Mass outside +-17 sigma quantizes to the mandatory single count anyway.
    const int klo = std::max(-kBound, static_cast<int>(std::floor(mu - 17.0 * sigma)) - 1);
    const int khi = std::min(kBound, static_cast<int>(std::ceil(mu + 17.0 * sigma)) + 1);
    for (int k = klo; k <= khi; ++k)
        pmf[static_cast<std::size_t>(k + kBound)] = gaussian_bin_probability(k, mu, sigma);
    const double tail_hi = 0.5 * std::erfc((kBound + 0.5 - mu) / sigma * kInvSqrt2);
    const double tail_lo = 0.5 * std::erfc((mu + kBound + 0.5) / sigma * kInvSqrt2);
    return SymbolModel::from_pmf(-kBound, pmf, tail_hi + tail_lo);
}

SymbolModel logistic_symbol_model(double loc, double scale) {
    std::vector<double> pmf(2 * kBound + 1, 0.0);
    const int klo = std::max(-kBound, static_cast<int>(std::floor(loc - 45.0 * scale)) - 1);
    const int khi = std::min(kBound, static_cast<int>(std::ceil(loc + 45.0 * scale)) + 1);
    for (int k = klo; k <= khi; ++k)
        pmf[static_cast<std::size_t>(k + kBound)] = logistic_bin_probability(k, loc, scale);
    const double tail_hi = sigmoid(-(kBound + 0.5 - loc) / scale);
    const double tail_lo = sigmoid(-(loc + kBound + 0.5) / scale);
    return SymbolModel::from_pmf(-kBound, pmf, tail_hi + tail_lo);
}

void RangeEncoder::shift_low() {
    if (static_cast<std::uint32_t>(low_ >> 32) != 0 || static_cast<std::uint32_t>(low_) < 0xFF000000u) {
        std::uint8_t temp = cache_;
        const std::uint8_t carry = static_cast<std::uint8_t>(low_ >> 32);
        do {
            out_.push_back(static_cast<std::uint8_t>(temp + carry));
            temp = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<std::uint8_t>((low_ >> 24) & 0xFF);
    }
    ++cache_size_;
    low_ = static_cast<std::uint32_t>(static_cast<std::uint32_t>(low_) << 8);
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
    const std::uint32_t r = range_ / total;
    low_ += static_cast<std::uint64_t>(r) * cum;
    range_ = r * freq;
    while (range_ < (1u << 24)) {
        shift_low();
        range_ <<= 8;
    }
}

void RangeEncoder::encode_symbol(const SymbolModel& m, int value) {
    int idx;
    const bool escaped = value < m.lo || value > m.hi();
    idx = escaped ? m.escape_index() : value - m.lo;
    encode(m.cdf[static_cast<std::size_t>(idx)],
           m.cdf[static_cast<std::size_t>(idx) + 1] - m.cdf[static_cast<std::size_t>(idx)],
           SymbolModel::kTotal);
    if (escaped) {
        const auto u = static_cast<std::uint32_t>(value);
        for (int i = 0; i < 4; ++i) {
            const std::uint32_t byte = (u >> (8 * i)) & 0xFF;
            encode(byte << 8, 1u << 8, SymbolModel::kTotal);  // uniform byte
        }
    }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::uint8_t* bytes, std::size_t size) : p_(bytes), n_(size) {
    next_byte();  // the encoder's initial zero cache
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
    if (pos_ >= n_) throw FormatError("entropy-coded payload truncated");
    return p_[pos_++];
}

std::uint32_t RangeDecoder::decode_freq(std::uint32_t total) {
    r_ = range_ / total;
    const std::uint32_t dv = code_ / r_;
    return std::min(dv, total - 1);
}

void RangeDecoder::decode_update(std::uint32_t cum, std::uint32_t freq) {
    code_ -= r_ * cum;
    range_ = r_ * freq;
    while (range_ < (1u << 24)) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

int RangeDecoder::decode_symbol(const SymbolModel& m) {
    const std::uint32_t dv = decode_freq(SymbolModel::kTotal);
    // cdf is strictly increasing: binary search for the bin containing dv.
    const auto it = std::upper_bound(m.cdf.begin(), m.cdf.end(), dv);
    const int idx = static_cast<int>(it - m.cdf.begin()) - 1;
    decode_update(m.cdf[static_cast<std::size_t>(idx)],
                  m.cdf[static_cast<std::size_t>(idx) + 1] - m.cdf[static_cast<std::size_t>(idx)]);
    if (idx != m.escape_index()) return m.lo + idx;
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) {
        const std::uint32_t dvb = decode_freq(SymbolModel::kTotal);
        const std::uint32_t byte = dvb >> 8;
        decode_update(byte << 8, 1u << 8);
        u |= byte << (8 * i);
    }
    return static_cast<int>(u);
}

std::vector<std::uint8_t> range_encode(const std::vector<int>& symbols,
                                       const std::function<const SymbolModel&(std::size_t)>& model_at) {
    RangeEncoder enc;
    for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode_symbol(model_at(i), symbols[i]);
    return enc.finish();
}

std::vector<int> range_decode(const std::vector<std::uint8_t>& bytes, std::size_t count,
                              const std::function<const SymbolModel&(std::size_t)>& model_at) {
    RangeDecoder dec(bytes.data(), bytes.size());
    std::vector<int> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = dec.decode_symbol(model_at(i));
    return out;
}

}  // namespace liclab
