#include "tsh/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"

namespace tsh {

namespace {

// Reads one whitespace/comment-delimited header token of a PNM file.
std::string pnm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Frame read_pgm(const std::filesystem::path& path) {
  auto is = binio::open_in(path);
  if (pnm_token(is) != "P5") throw IoError("not a binary PGM: " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(is));
    h = std::stoi(pnm_token(is));
    maxval = std::stoi(pnm_token(is));
  } catch (const std::exception&) {
    throw IoError("malformed PGM header: " + path.string());
  }
  if (w <= 0 || h <= 0) throw IoError("bad PGM size: " + path.string());
  if (maxval <= 0 || maxval > 255) throw IoError("PGM is not 8-bit: " + path.string());
  Frame f(w, h);
  if (!is.read(reinterpret_cast<char*>(f.data.data()), static_cast<std::streamsize>(f.data.size()))) {
    throw IoError("truncated PGM data: " + path.string());
  }
  return f;
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  auto os = binio::open_out(path);
  os << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(frame.data.data()),
           static_cast<std::streamsize>(frame.data.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Frame read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  Frame frame;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG is not 8-bit grayscale: " + path.string());
  }
  frame = Frame(static_cast<int>(png_get_image_width(png, info)),
                static_cast<int>(png_get_image_height(png, info)));
  rows.resize(frame.height);
  for (int y = 0; y < frame.height; ++y) rows[y] = frame.data.data() + static_cast<std::size_t>(y) * frame.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return frame;
}

void write_png(const std::filesystem::path& path, const Frame& frame) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  std::vector<png_bytep> rows(frame.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, frame.width, frame.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  auto* base = const_cast<std::uint8_t*>(frame.data.data());
  for (int y = 0; y < frame.height; ++y) rows[y] = base + static_cast<std::size_t>(y) * frame.width;
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Frame read_frame(const std::filesystem::path& path) {
  char sig[8] = {};
  {
    auto is = binio::open_in(path);
    is.read(sig, sizeof sig);
  }
  if (sig[0] == 'P' && sig[1] == '5') return read_pgm(path);
  if (static_cast<unsigned char>(sig[0]) == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G') {
    return read_png(path);
  }
  throw IoError("unsupported frame format: " + path.string());
}

void write_frame(const std::filesystem::path& path, const Frame& frame) {
  if (path.extension() == ".png") {
    write_png(path, frame);
  } else {
    write_pgm(path, frame);
  }
}

}  // namespace tsh
