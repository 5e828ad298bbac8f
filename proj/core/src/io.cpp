#include "glide/io.hpp"

#include <cstring>
#include <fstream>

namespace glide {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCategory::io, "cannot open " + path);
  f.seekg(0, std::ios::end);
  const std::streamoff n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
  if (!f) fail(ErrorCategory::io, "read failed: " + path);
  return buf;
}

void write_file_bytes(const std::string& path, const void* data, size_t n) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCategory::io, "cannot create " + path);
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) fail(ErrorCategory::io, "write failed: " + path);
}

std::string fmt_g(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

void write_pgm(const std::string& path, const std::vector<unsigned char>& pixels, int w, int h) {
  if (static_cast<size_t>(w) * h != pixels.size())
    fail(ErrorCategory::shape, "write_pgm: pixel count mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCategory::io, "cannot create " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!f) fail(ErrorCategory::io, "write failed: " + path);
}

namespace {

// PGM header tokenizer: skips whitespace and '#' comment lines.
size_t next_token(const std::vector<unsigned char>& buf, size_t pos, std::string* tok) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  tok->clear();
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') {
    tok->push_back(static_cast<char>(buf[pos]));
    ++pos;
  }
  return pos;
}

}  // namespace

template <class T>
Tensor<T> read_pgm(const std::string& path) {
  auto buf = read_file_bytes(path);
  std::string tok;
  size_t pos = next_token(buf, 0, &tok);
  if (tok != "P5") fail(ErrorCategory::io, "read_pgm: not a binary graymap (P5): " + path);
  pos = next_token(buf, pos, &tok);
  const int w = std::atoi(tok.c_str());
  pos = next_token(buf, pos, &tok);
  const int h = std::atoi(tok.c_str());
  pos = next_token(buf, pos, &tok);
  const int maxval = std::atoi(tok.c_str());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    fail(ErrorCategory::io, "read_pgm: bad header in " + path);
  pos += 1;  // the single whitespace byte after maxval
  const size_t n = static_cast<size_t>(w) * h;
  if (pos + n > buf.size()) fail(ErrorCategory::io, "read_pgm: truncated pixel data in " + path);
  Tensor<T> out = Tensor<T>::zeros({1, 1, h, w});
  for (size_t i = 0; i < n; ++i) out[static_cast<int64_t>(i)] = static_cast<T>(buf[pos + i]) / static_cast<T>(maxval);
  return out;
}

template Tensor<float> read_pgm<float>(const std::string&);
template Tensor<double> read_pgm<double>(const std::string&);

}  // namespace glide
