#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace tsh::binio {

// Little-endian primitive I/O. All on-disk numeric blocks use these.
void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_f32(std::ostream& os, float v);
void write_f32s(std::ostream& os, std::span<const float> v);

std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
float read_f32(std::istream& is);
std::vector<float> read_f32s(std::istream& is, std::size_t n);

/// Writes a single-line JSON header terminated by '\n'.
void write_json_line(std::ostream& os, const nlohmann::json& header);
nlohmann::json read_json_line(std::istream& is);

/// Opens for binary writing, creating parent directories.
std::ofstream open_out(const std::filesystem::path& path);
std::ifstream open_in(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames, so readers never observe a
/// partially written file.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

std::string read_all(const std::filesystem::path& path);

}  // namespace tsh::binio
