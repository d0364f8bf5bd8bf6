#pragma once

#include <filesystem>
#include <string>

namespace fineas {

// Writes content to a temp file in the target directory, then renames over
// the destination. Interrupted runs never leave partial artifacts.
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& content);

std::string read_file(const std::filesystem::path& path);

// FNV-1a 64-bit. Used for config/vocab identity and headline hashes.
uint64_t fnv1a64(const void* data, size_t size);
uint64_t fnv1a64(const std::string& s);
std::string hex64(uint64_t v);

}  // namespace fineas
