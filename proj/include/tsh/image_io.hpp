#pragma once

#include <filesystem>

#include "tsh/image.hpp"

namespace tsh {

/// Binary PGM (P5, maxval <= 255).
Frame read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Frame& frame);

/// 8-bit grayscale PNG. Other color types or bit depths are rejected.
Frame read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Frame& frame);

/// Dispatches on file signature.
Frame read_frame(const std::filesystem::path& path);
void write_frame(const std::filesystem::path& path, const Frame& frame);

}  // namespace tsh
