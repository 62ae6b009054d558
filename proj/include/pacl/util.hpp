#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pacl {

// Errors caused by bad user input (malformed files, bad flags, invalid
// config). The CLI maps these to exit code 2; everything else is a runtime
// failure (exit code 3).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a 64-bit, rendered as 16 hex chars. Used for run-manifest digests.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::string digest_hex(const std::string& bytes);
std::string file_digest(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

std::vector<std::string> split(const std::string& text, char sep);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

// Fixed, locale-independent double formatting (shortest round-trip form) so
// logs and reports are byte-deterministic.
std::string format_double(double value);

}  // namespace pacl
