#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace glide {

// Error taxonomy. Every throw site picks a category so the CLI can emit a
// single machine-parsable line ("error: <category>: <message>") and a stable
// exit code without string matching.
enum class ErrorCategory {
  usage,    // bad command line
  config,   // bad config file / profile
  io,       // filesystem, malformed blob or manifest
  data,     // dataset-level inconsistency (taxonomy mismatch, bad record)
  shape,    // tensor shape mismatch
  numeric,  // degenerate numerical situation (e.g. batchnorm on 1 element)
  internal, // broken invariant; a bug, not a user problem
};

inline const char* error_category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::data: return "data";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::internal: return "internal";
  }
  return "internal";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), category_(cat) {}
  ErrorCategory category() const { return category_; }
  int exit_code() const { return 2 + static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory cat, const std::string& msg) {
  throw Error(cat, msg);
}

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorCategory::shape, msg);
}

// Output spatial size of a convolution with symmetric zero padding.
inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace glide
