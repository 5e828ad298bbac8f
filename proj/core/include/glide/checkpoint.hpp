#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glide/base.hpp"
#include "glide/io.hpp"
#include "glide/params.hpp"
#include "glide/taxonomy.hpp"

namespace glide {

// Checkpoint container ("GLCK"): format version, the taxonomy hash it was
// trained against, every registered parameter as a named tensor blob in
// registration order with its Adam state, every buffer (batchnorm running
// statistics), named RNG cursors, and the stage/epoch counters. All integers
// little-endian, no padding. save -> load -> save reproduces the bytes.

struct RngCursor {
  std::string name;
  uint64_t counter = 0;
};

// Stage/epoch counters and RNG cursors restored alongside the tensors.
struct CheckpointState {
  int stage = 0;
  int epoch = 0;
  std::vector<RngCursor> rng;
};

// Container summary readable without knowing the element type or building a
// model; backs the checkpoint inspection command.
struct CheckpointMeta {
  struct Entry {
    std::string name;
    Shape shape;
    int dtype = 0;  // 0 = f32, 1 = f64
    int64_t adam_step = 0;
    bool has_state = false;
  };
  uint32_t format_version = 0;
  uint64_t taxonomy_hash = 0;
  int stage = 0;
  int epoch = 0;
  std::vector<RngCursor> rng;
  std::vector<Entry> params;
  std::vector<Entry> buffers;
};

CheckpointMeta inspect_checkpoint(const std::string& path);
std::string checkpoint_summary(const CheckpointMeta& meta);

namespace ckdetail {

inline void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u64(std::vector<unsigned char>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_str(std::vector<unsigned char>& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

inline void need(const std::vector<unsigned char>& buf, size_t cursor, size_t n) {
  if (cursor + n > buf.size()) fail(ErrorCategory::io, "checkpoint: truncated");
}
inline uint32_t get_u32(const std::vector<unsigned char>& buf, size_t* cursor) {
  need(buf, *cursor, 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[*cursor + i]) << (8 * i);
  *cursor += 4;
  return v;
}
inline uint64_t get_u64(const std::vector<unsigned char>& buf, size_t* cursor) {
  need(buf, *cursor, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[*cursor + i]) << (8 * i);
  *cursor += 8;
  return v;
}
inline std::string get_str(const std::vector<unsigned char>& buf, size_t* cursor) {
  const uint32_t n = get_u32(buf, cursor);
  need(buf, *cursor, n);
  std::string s(reinterpret_cast<const char*>(buf.data() + *cursor), n);
  *cursor += n;
  return s;
}

// Shared prologue of load/inspect: magic, version, hash, counters, cursors.
inline void get_header(const std::vector<unsigned char>& buf, size_t* cursor, uint32_t* version,
                       uint64_t* tax_hash, int* stage, int* epoch, std::vector<RngCursor>* rng) {
  need(buf, *cursor, 4);
  if (buf[0] != 'G' || buf[1] != 'L' || buf[2] != 'C' || buf[3] != 'K')
    fail(ErrorCategory::io, "checkpoint: bad magic (not a GLCK container)");
  *cursor += 4;
  *version = get_u32(buf, cursor);
  if (*version != 1)
    fail(ErrorCategory::io, "checkpoint: unsupported format version " + std::to_string(*version));
  *tax_hash = get_u64(buf, cursor);
  *stage = static_cast<int>(get_u32(buf, cursor));
  *epoch = static_cast<int>(get_u32(buf, cursor));
  const uint32_t n_rng = get_u32(buf, cursor);
  rng->clear();
  for (uint32_t i = 0; i < n_rng; ++i) {
    RngCursor rc;
    rc.name = get_str(buf, cursor);
    rc.counter = get_u64(buf, cursor);
    rng->push_back(std::move(rc));
  }
}

}  // namespace ckdetail

template <class T>
std::vector<unsigned char> checkpoint_bytes(const ParamSet<T>& ps, const Taxonomy& tax, int stage,
                                            int epoch, const std::vector<RngCursor>& rng) {
  using namespace ckdetail;
  std::vector<unsigned char> out;
  const char magic[4] = {'G', 'L', 'C', 'K'};
  out.insert(out.end(), magic, magic + 4);
  put_u32(out, 1);
  put_u64(out, tax.hash());
  put_u32(out, static_cast<uint32_t>(stage));
  put_u32(out, static_cast<uint32_t>(epoch));
  put_u32(out, static_cast<uint32_t>(rng.size()));
  for (const auto& rc : rng) {
    put_str(out, rc.name);
    put_u64(out, rc.counter);
  }
  put_u32(out, static_cast<uint32_t>(ps.params.size()));
  for (const auto& p : ps.params) {
    put_str(out, p.name);
    auto blob = blob_bytes(*p.tensor);
    out.insert(out.end(), blob.begin(), blob.end());
    put_u64(out, static_cast<uint64_t>(p.state->step));
    const bool has_state = !p.state->m.empty();
    out.push_back(has_state ? 1 : 0);
    if (has_state) {
      if (p.state->m.size() != p.state->v.size() ||
          p.state->m.size() != p.tensor->data->size())
        fail(ErrorCategory::internal, "checkpoint: optimizer state size mismatch for " + p.name);
      put_u64(out, static_cast<uint64_t>(p.state->m.size()));
      const auto* m = reinterpret_cast<const unsigned char*>(p.state->m.data());
      out.insert(out.end(), m, m + sizeof(T) * p.state->m.size());
      const auto* v = reinterpret_cast<const unsigned char*>(p.state->v.data());
      out.insert(out.end(), v, v + sizeof(T) * p.state->v.size());
    }
  }
  put_u32(out, static_cast<uint32_t>(ps.buffers.size()));
  for (const auto& b : ps.buffers) {
    put_str(out, b.name);
    auto blob = blob_bytes(*b.tensor);
    out.insert(out.end(), blob.begin(), blob.end());
  }
  return out;
}

template <class T>
void save_checkpoint(const std::string& path, const ParamSet<T>& ps, const Taxonomy& tax,
                     int stage, int epoch, const std::vector<RngCursor>& rng) {
  auto bytes = checkpoint_bytes(ps, tax, stage, epoch, rng);
  write_file_bytes(path, bytes.data(), bytes.size());
}

// Restores every parameter, optimizer state and buffer through the ParamSet's
// registered pointers. Refuses a container whose taxonomy hash differs from
// `tax`, and any layout mismatch (name, order, shape, count) — nothing is
// modified until after the header checks, but a mid-stream mismatch aborts
// with earlier entries already written, so callers should treat a throw as
// fatal for that model instance.
template <class T>
CheckpointState load_checkpoint(const std::string& path, ParamSet<T>& ps, const Taxonomy& tax) {
  using namespace ckdetail;
  const std::vector<unsigned char> buf = read_file_bytes(path);
  size_t cursor = 0;
  uint32_t version = 0;
  uint64_t tax_hash = 0;
  CheckpointState st;
  get_header(buf, &cursor, &version, &tax_hash, &st.stage, &st.epoch, &st.rng);
  if (tax_hash != tax.hash())
    fail(ErrorCategory::data,
         "checkpoint: taxonomy hash mismatch (container was trained against a different "
         "taxonomy)");

  const uint32_t n_params = get_u32(buf, &cursor);
  if (n_params != ps.params.size())
    fail(ErrorCategory::data, "checkpoint: container has " + std::to_string(n_params) +
                                  " parameters, model registers " +
                                  std::to_string(ps.params.size()));
  for (auto& p : ps.params) {
    const std::string name = get_str(buf, &cursor);
    if (name != p.name)
      fail(ErrorCategory::data,
           "checkpoint: parameter order mismatch: container has '" + name + "', model expects '" +
               p.name + "'");
    Tensor<T> t = parse_blob<T>(buf, &cursor);
    if (t.shape != p.tensor->shape)
      fail(ErrorCategory::data, "checkpoint: shape mismatch for " + name + ": container " +
                                    shape_str(t.shape) + ", model " + shape_str(p.tensor->shape));
    *p.tensor = std::move(t);
    p.tensor->node = -1;
    p.state->step = static_cast<int64_t>(get_u64(buf, &cursor));
    need(buf, cursor, 1);
    const bool has_state = buf[cursor++] != 0;
    if (has_state) {
      const uint64_t n = get_u64(buf, &cursor);
      if (n != p.tensor->data->size())
        fail(ErrorCategory::data, "checkpoint: optimizer state size mismatch for " + name);
      need(buf, cursor, 2 * sizeof(T) * n);
      p.state->m.resize(n);
      std::memcpy(p.state->m.data(), buf.data() + cursor, sizeof(T) * n);
      cursor += sizeof(T) * n;
      p.state->v.resize(n);
      std::memcpy(p.state->v.data(), buf.data() + cursor, sizeof(T) * n);
      cursor += sizeof(T) * n;
    } else {
      p.state->m.clear();
      p.state->v.clear();
    }
  }

  const uint32_t n_buffers = get_u32(buf, &cursor);
  if (n_buffers != ps.buffers.size())
    fail(ErrorCategory::data, "checkpoint: container has " + std::to_string(n_buffers) +
                                  " buffers, model registers " +
                                  std::to_string(ps.buffers.size()));
  for (auto& b : ps.buffers) {
    const std::string name = get_str(buf, &cursor);
    if (name != b.name)
      fail(ErrorCategory::data, "checkpoint: buffer order mismatch: container has '" + name +
                                    "', model expects '" + b.name + "'");
    Tensor<T> t = parse_blob<T>(buf, &cursor);
    if (t.shape != b.tensor->shape)
      fail(ErrorCategory::data, "checkpoint: shape mismatch for buffer " + name);
    *b.tensor = std::move(t);
    b.tensor->node = -1;
  }
  if (cursor != buf.size()) fail(ErrorCategory::io, "checkpoint: trailing bytes");
  return st;
}

}  // namespace glide
