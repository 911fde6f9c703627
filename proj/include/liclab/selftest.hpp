#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace liclab::selftest {

struct Result {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Fast invariant suite behind `liclab selftest`; seconds, not minutes.
std::vector<Result> run_all(std::uint64_t seed = 7);
bool all_passed(const std::vector<Result>& results);

}  // namespace liclab::selftest
