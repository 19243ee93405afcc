#include "prefcal/io.hpp"

#include "prefcal/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace prefcal {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_input: return "invalid input";
    case Errc::invalid_parameter: return "invalid parameter";
    case Errc::invalid_environment: return "invalid environment";
    case Errc::dataset_mismatch: return "dataset/environment mismatch";
    case Errc::wrong_operation: return "wrong operation";
    case Errc::configuration: return "configuration error";
    case Errc::divergence: return "divergence";
    case Errc::probe_failure: return "probe failure";
    case Errc::io: return "i/o error";
  }
  return "unknown error";
}

namespace io {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(Errc::io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace io
}  // namespace prefcal
