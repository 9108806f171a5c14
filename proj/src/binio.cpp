#include "tsh/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tsh/error.hpp"

namespace tsh::binio {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw IoError("unexpected end of binary stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void write_u8(std::ostream& os, std::uint8_t v) { put(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { put(os, v); }
void write_f32(std::ostream& os, float v) { put(os, v); }

void write_f32s(std::ostream& os, std::span<const float> v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size_bytes()));
}

std::uint8_t read_u8(std::istream& is) { return get<std::uint8_t>(is); }
std::uint32_t read_u32(std::istream& is) { return get<std::uint32_t>(is); }
float read_f32(std::istream& is) { return get<float>(is); }

std::vector<float> read_f32s(std::istream& is, std::size_t n) {
  std::vector<float> out(n);
  const auto bytes = static_cast<std::streamsize>(n * sizeof(float));
  if (!is.read(reinterpret_cast<char*>(out.data()), bytes)) {
    throw IoError("truncated float block");
  }
  return out;
}

void write_json_line(std::ostream& os, const nlohmann::json& header) {
  os << header.dump() << '\n';
}

nlohmann::json read_json_line(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("missing JSON header line");
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed JSON header: ") + e.what());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  return is;
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    auto os = open_out(tmp);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string());
}

std::string read_all(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace tsh::binio
