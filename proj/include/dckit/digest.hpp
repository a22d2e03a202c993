#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace dckit {

// FNV-1a 64-bit content fingerprint. Not cryptographic; used to pin input
// payloads into output reports for reproducibility audits.
std::uint64_t fnv1a64(const void* data, std::size_t n);

// Hex digest of a file's bytes. Throws IoError if unreadable.
std::string file_digest_hex(const std::string& path);

} // namespace dckit
