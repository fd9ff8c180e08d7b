#pragma once

#include <string>
#include <string_view>

namespace qlpv {

// Hex-encoded SHA-256, used for config/dataset/parameter fingerprints.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

}  // namespace qlpv
