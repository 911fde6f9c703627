#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "liclab/common.hpp"

namespace liclab {

// Flat key=value configuration ('#' comments). Command-line overrides win
// over file values; the resolved state is echoed to a sidecar for
// reproducibility.
class Config {
   public:
    static Config from_file(const std::string& path);
    static Config from_text(const std::string& text);

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void apply_override(const std::string& key_eq_value);

    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    std::string get_str(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

    std::string to_text() const;  // sorted keys

   private:
    std::map<std::string, std::string> kv_;
};

}  // namespace liclab
