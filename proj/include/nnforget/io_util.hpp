#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nnforget {

// Writes to "<path>.tmp" and renames over `path`, so readers never observe a
// partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

}  // namespace nnforget
