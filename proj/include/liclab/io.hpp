#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "liclab/common.hpp"
#include "liclab/tensor.hpp"

namespace liclab {

// Little-endian byte sink for the LICM/LICA/LICB formats.
class ByteWriter {
   public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void str16(const std::string& s);  // u16 length + UTF-8 bytes
    void raw(const void* p, std::size_t n);
    void tensor(const std::string& name, const Tensor& t);  // name, u8 ndim, u32 dims, f32 data

    const std::vector<std::uint8_t>& bytes() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }
    std::size_t size() const { return buf_.size(); }

   private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
   public:
    ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
    explicit ByteReader(const std::vector<std::uint8_t>& v) : p_(v.data()), n_(v.size()) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    std::string str16();
    Tensor tensor(std::string* name);
    void raw(void* dst, std::size_t n);

    std::size_t offset() const { return off_; }
    std::size_t remaining() const { return n_ - off_; }

   private:
    void need(std::size_t n) const;
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t off_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
bool file_exists(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace liclab
