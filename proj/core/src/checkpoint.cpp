#include "glide/checkpoint.hpp"

#include <cstdio>

namespace glide {

namespace {

using ckdetail::get_str;
using ckdetail::get_u32;
using ckdetail::get_u64;
using ckdetail::need;

// Reads a GLTN blob header and skips its payload; works for either dtype.
void skim_blob(const std::vector<unsigned char>& buf, size_t* cursor, Shape* shape, int* dtype) {
  size_t c = *cursor;
  need(buf, c, 7);
  if (buf[c] != 'G' || buf[c + 1] != 'L' || buf[c + 2] != 'T' || buf[c + 3] != 'N')
    fail(ErrorCategory::io, "checkpoint: embedded tensor blob has bad magic");
  if (buf[c + 4] != 1) fail(ErrorCategory::io, "checkpoint: unsupported tensor blob version");
  *dtype = buf[c + 5];
  if (*dtype != 0 && *dtype != 1)
    fail(ErrorCategory::io, "checkpoint: unknown tensor dtype code " + std::to_string(*dtype));
  const int ndim = buf[c + 6];
  c += 7;
  shape->assign(ndim, 0);
  int64_t n = 1;
  for (int i = 0; i < ndim; ++i) {
    need(buf, c, 4);
    uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(buf[c + k]) << (8 * k);
    (*shape)[i] = static_cast<int>(v);
    n *= (*shape)[i];
    c += 4;
  }
  const size_t elem = *dtype == 0 ? 4 : 8;
  need(buf, c, elem * static_cast<size_t>(n));
  c += elem * static_cast<size_t>(n);
  *cursor = c;
}

}  // namespace

CheckpointMeta inspect_checkpoint(const std::string& path) {
  const std::vector<unsigned char> buf = read_file_bytes(path);
  size_t cursor = 0;
  CheckpointMeta meta;
  ckdetail::get_header(buf, &cursor, &meta.format_version, &meta.taxonomy_hash, &meta.stage,
                       &meta.epoch, &meta.rng);

  const uint32_t n_params = get_u32(buf, &cursor);
  for (uint32_t i = 0; i < n_params; ++i) {
    CheckpointMeta::Entry e;
    e.name = get_str(buf, &cursor);
    skim_blob(buf, &cursor, &e.shape, &e.dtype);
    e.adam_step = static_cast<int64_t>(get_u64(buf, &cursor));
    need(buf, cursor, 1);
    e.has_state = buf[cursor++] != 0;
    if (e.has_state) {
      const uint64_t n = get_u64(buf, &cursor);
      const size_t elem = e.dtype == 0 ? 4 : 8;
      need(buf, cursor, 2 * elem * n);
      cursor += 2 * elem * n;
    }
    meta.params.push_back(std::move(e));
  }
  const uint32_t n_buffers = get_u32(buf, &cursor);
  for (uint32_t i = 0; i < n_buffers; ++i) {
    CheckpointMeta::Entry e;
    e.name = get_str(buf, &cursor);
    skim_blob(buf, &cursor, &e.shape, &e.dtype);
    meta.buffers.push_back(std::move(e));
  }
  if (cursor != buf.size()) fail(ErrorCategory::io, "checkpoint: trailing bytes");
  return meta;
}

std::string checkpoint_summary(const CheckpointMeta& meta) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "format version %u\n", meta.format_version);
  out += line;
  std::snprintf(line, sizeof line, "taxonomy hash %016llx\n",
                static_cast<unsigned long long>(meta.taxonomy_hash));
  out += line;
  std::snprintf(line, sizeof line, "stage %d epoch %d\n", meta.stage, meta.epoch);
  out += line;
  out += "rng";
  if (meta.rng.empty()) out += " (none)";
  for (const auto& rc : meta.rng) {
    std::snprintf(line, sizeof line, " %s=%llu", rc.name.c_str(),
                  static_cast<unsigned long long>(rc.counter));
    out += line;
  }
  out += "\n";
  int64_t scalars = 0;
  for (const auto& e : meta.params) {
    int64_t n = 1;
    for (int d : e.shape) n *= d;
    scalars += n;
  }
  std::snprintf(line, sizeof line, "params %zu tensors, %lld scalars\n", meta.params.size(),
                static_cast<long long>(scalars));
  out += line;
  std::snprintf(line, sizeof line, "buffers %zu tensors\n", meta.buffers.size());
  out += line;
  auto entry_line = [&](const CheckpointMeta::Entry& e, bool param) {
    std::string s = "  " + e.name + " " + shape_str(e.shape) + (e.dtype == 0 ? " f32" : " f64");
    if (param) {
      std::snprintf(line, sizeof line, " adam_step=%lld%s",
                    static_cast<long long>(e.adam_step), e.has_state ? "" : " (no state)");
      s += line;
    }
    return s + "\n";
  };
  for (const auto& e : meta.params) out += entry_line(e, true);
  for (const auto& e : meta.buffers) out += entry_line(e, false);
  return out;
}

}  // namespace glide
