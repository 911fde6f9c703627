#include "liclab/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace liclab {

void ByteWriter::u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u32(bits);
}

void ByteWriter::str16(const std::string& s) {
    if (s.size() > 0xFFFF) throw FormatError("string too long to serialize");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
}

void ByteWriter::raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::tensor(const std::string& name, const Tensor& t) {
    str16(name);
    if (t.ndim() > 255) throw FormatError("tensor rank too large");
    u8(static_cast<std::uint8_t>(t.ndim()));
    for (int d : t.dims) u32(static_cast<std::uint32_t>(d));
    for (float v : t.data) f32(v);
}

void ByteReader::need(std::size_t n) const {
    if (off_ + n > n_) throw FormatError("truncated file: need " + std::to_string(n) + " bytes at offset " +
                                         std::to_string(off_) + " of " + std::to_string(n_));
}

std::uint8_t ByteReader::u8() {
    need(1);
    return p_[off_++];
}

std::uint16_t ByteReader::u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p_[off_] | (p_[off_ + 1] << 8));
    off_ += 2;
    return v;
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[off_ + i]) << (8 * i);
    off_ += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[off_ + i]) << (8 * i);
    off_ += 8;
    return v;
}

float ByteReader::f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::string ByteReader::str16() {
    const std::uint16_t len = u16();
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + off_), len);
    off_ += len;
    return s;
}

Tensor ByteReader::tensor(std::string* name) {
    const std::string n = str16();
    if (name) *name = n;
    const int ndim = u8();
    std::vector<int> dims(static_cast<std::size_t>(ndim));
    for (auto& d : dims) d = static_cast<int>(u32());
    Tensor t(dims);
    for (auto& v : t.data) v = f32();
    return t;
}

void ByteReader::raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, p_ + off_, n);
    off_ += n;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    f.seekg(0, std::ios::end);
    const auto size = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw DataError("short read on " + path);
    return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write on " + path);
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << text;
}

}  // namespace liclab
