#pragma once

// Artifact persistence: the TEAC binary checkpoint (little-endian payload,
// CRC32-guarded), P5 PGM sample grids, and CSV helpers. Formats are
// bit-exact: identical state produces identical bytes.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tea/adapt.hpp"
#include "tea/model.hpp"

namespace tea {

inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

// CRC-32 (IEEE), bitwise reflected form.
inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) {
    crc ^= data[i];
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
  }
  return crc ^ 0xffffffffu;
}

struct ByteWriter {
  std::vector<unsigned char> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int s = 0; s < 16; s += 8) bytes.push_back((v >> s) & 0xff);
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes.push_back((v >> s) & 0xff);
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) bytes.push_back((v >> s) & 0xff);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void str(const std::string& s) {
    u16(std::uint16_t(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
};

struct ByteReader {
  const unsigned char* p;
  const unsigned char* end;

  void need(std::size_t n) const {
    if (std::size_t(end - p) < n) throw IoError("checkpoint: truncated payload");
  }
  std::uint8_t u8() {
    need(1);
    return *p++;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8);
    p += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    const std::size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

template <typename T>
void write_tensor(ByteWriter& w, const std::string& name, const Tensor<T>& t) {
  w.str(name);
  w.u8(std::uint8_t(t.shape.size()));
  for (std::size_t d : t.shape) w.u32(std::uint32_t(d));
  for (T v : t.data) w.f32(float(v));
}

template <typename T>
Tensor<T> read_tensor(ByteReader& r, std::string& name) {
  name = r.str();
  const std::size_t rank = r.u8();
  Shape shape(rank);
  for (auto& d : shape) d = r.u32();
  Tensor<T> t;
  t.shape = shape;
  t.data.resize(numel(shape));
  for (auto& v : t.data) v = T(r.f32());
  return t;
}

}  // namespace detail

// Layout: "TEAC" | version u16 | payload u32 length | payload | crc32(payload).
// The payload holds the topology followed by named parameter and running-stat
// tensors as 32-bit little-endian floats.
template <typename T>
std::vector<unsigned char> serialize_checkpoint(const ModelState<T>& model) {
  detail::ByteWriter payload;
  payload.u32(std::uint32_t(model.spec.input_shape.size()));
  for (std::size_t d : model.spec.input_shape) payload.u32(std::uint32_t(d));
  payload.u32(std::uint32_t(model.spec.layers.size()));
  for (const auto& l : model.spec.layers) {
    payload.u8(std::uint8_t(l.kind));
    payload.u32(std::uint32_t(l.in_features));
    payload.u32(std::uint32_t(l.out_features));
    payload.u32(std::uint32_t(l.in_channels));
    payload.u32(std::uint32_t(l.out_channels));
    payload.u32(std::uint32_t(l.channels));
    payload.u32(std::uint32_t(l.group_count));
  }
  std::uint32_t tensor_count = 0;
  detail::ByteWriter tensors;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    auto put = [&](const char* field, const Tensor<T>& t) {
      if (t.empty()) return;
      detail::write_tensor(tensors, "layer" + std::to_string(i) + "." + field, t);
      ++tensor_count;
    };
    put("weight", model.params[i].weight);
    put("bias", model.params[i].bias);
    put("gamma", model.params[i].gamma);
    put("beta", model.params[i].beta);
    put("running_mean", model.running[i].mean);
    put("running_var", model.running[i].var);
  }
  payload.u32(tensor_count);
  payload.bytes.insert(payload.bytes.end(), tensors.bytes.begin(), tensors.bytes.end());

  detail::ByteWriter out;
  out.bytes = {'T', 'E', 'A', 'C'};
  out.u16(kCheckpointVersion);
  out.u32(std::uint32_t(payload.bytes.size()));
  out.bytes.insert(out.bytes.end(), payload.bytes.begin(), payload.bytes.end());
  out.u32(detail::crc32(payload.bytes.data(), payload.bytes.size()));
  return out.bytes;
}

template <typename T>
void save_checkpoint(const ModelState<T>& model, const std::string& path) {
  auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

template <typename T>
ModelState<T> deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 14) throw IoError("checkpoint: file too short");
  if (std::memcmp(bytes.data(), "TEAC", 4) != 0) throw IoError("checkpoint: bad magic");
  detail::ByteReader header{bytes.data() + 4, bytes.data() + bytes.size()};
  const std::uint16_t version = header.u16();
  if (version > kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const std::size_t payload_len = header.u32();
  if (bytes.size() != 4 + 2 + 4 + payload_len + 4)
    throw IoError("checkpoint: length mismatch");
  const unsigned char* payload = bytes.data() + 10;
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= std::uint32_t(bytes[10 + payload_len + std::size_t(i)]) << (8 * i);
  if (detail::crc32(payload, payload_len) != stored_crc)
    throw IoError("checkpoint: checksum mismatch");

  detail::ByteReader r{payload, payload + payload_len};
  ModelState<T> m;
  const std::size_t in_rank = r.u32();
  m.spec.input_shape.resize(in_rank);
  for (auto& d : m.spec.input_shape) d = r.u32();
  const std::size_t layer_count = r.u32();
  m.spec.layers.resize(layer_count);
  for (auto& l : m.spec.layers) {
    l.kind = LayerKind(r.u8());
    l.in_features = r.u32();
    l.out_features = r.u32();
    l.in_channels = r.u32();
    l.out_channels = r.u32();
    l.channels = r.u32();
    l.group_count = r.u32();
  }
  validate(m.spec);
  m.params.resize(layer_count);
  m.running.resize(layer_count);
  const std::uint32_t tensor_count = r.u32();
  for (std::uint32_t t = 0; t < tensor_count; ++t) {
    std::string name;
    Tensor<T> tensor = detail::read_tensor<T>(r, name);
    const auto dot = name.find('.');
    if (dot == std::string::npos || name.substr(0, 5) != "layer")
      throw IoError("checkpoint: malformed tensor name '" + name + "'");
    const std::size_t li = std::size_t(std::stoul(name.substr(5, dot - 5)));
    if (li >= layer_count) throw IoError("checkpoint: tensor for unknown layer: " + name);
    const std::string field = name.substr(dot + 1);
    if (field == "weight") m.params[li].weight = std::move(tensor);
    else if (field == "bias") m.params[li].bias = std::move(tensor);
    else if (field == "gamma") m.params[li].gamma = std::move(tensor);
    else if (field == "beta") m.params[li].beta = std::move(tensor);
    else if (field == "running_mean") m.running[li].mean = std::move(tensor);
    else if (field == "running_var") m.running[li].var = std::move(tensor);
    else throw IoError("checkpoint: unknown tensor field '" + field + "'");
  }

  // Shape consistency against the declared topology.
  auto fresh = init_model<T>(m.spec, RngStream(0, 0));
  for (std::size_t i = 0; i < layer_count; ++i) {
    auto check = [&](const Tensor<T>& got, const Tensor<T>& want, const char* field) {
      if (got.shape != want.shape)
        throw IoError("checkpoint: tensor shape mismatch at layer " + std::to_string(i) + " " +
                      field);
    };
    check(m.params[i].weight, fresh.params[i].weight, "weight");
    check(m.params[i].bias, fresh.params[i].bias, "bias");
    check(m.params[i].gamma, fresh.params[i].gamma, "gamma");
    check(m.params[i].beta, fresh.params[i].beta, "beta");
    check(m.running[i].mean, fresh.running[i].mean, "running_mean");
    check(m.running[i].var, fresh.running[i].var, "running_var");
    for (T v : m.running[i].var.data)
      if (v < T(0)) throw IoError("checkpoint: negative running variance");
  }
  return m;
}

template <typename T>
ModelState<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(bytes);
}

// ---- PGM sample grid ---------------------------------------------------------

// Binary PGM (P5) of single-channel images tiled into a ceil(sqrt(n)) square
// grid; missing tiles are black. Pixel = round(255*(v+1)/2) after clamping
// to [-1,1].
template <typename T>
std::vector<unsigned char> render_sample_grid(const Tensor<T>& negatives) {
  Shape shape = negatives.shape;
  if (shape.size() == 4) {
    if (shape[1] != 1) throw Error("sample grid export supports single-channel images only");
    shape = {shape[0], shape[2], shape[3]};
  }
  if (shape.size() != 3) throw ShapeError("sample grid expects [n,1,H,W] or [n,H,W]");
  const std::size_t n = shape[0], h = shape[1], w = shape[2];
  std::size_t side = 1;
  while (side * side < n) ++side;

  const std::size_t gw = side * w, gh = side * h;
  std::vector<unsigned char> pixels(gw * gh, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ty = i / side, tx = i % side;
    const T* img = negatives.data.data() + i * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = std::clamp(double(img[y * w + x]), -1.0, 1.0);
        pixels[(ty * h + y) * gw + tx * w + x] =
            (unsigned char)(std::lround(255.0 * (v + 1.0) / 2.0));
      }
  }
  std::ostringstream header;
  header << "P5\n" << gw << " " << gh << "\n255\n";
  const std::string head = header.str();
  std::vector<unsigned char> out(head.begin(), head.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

template <typename T>
void export_sample_grid(const Tensor<T>& negatives, const std::string& path) {
  auto bytes = render_sample_grid(negatives);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open pgm for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

// ---- CSV -----------------------------------------------------------------------

// Full-precision float formatting; shortest representation that round-trips.
inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double parsed = std::strtod(buf, nullptr);
  if (parsed == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char probe[32];
      std::snprintf(probe, sizeof probe, "%.*g", prec, v);
      if (std::strtod(probe, nullptr) == v) return probe;
    }
  }
  return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);  // binary: byte-stable newlines
  if (!out) throw IoError("cannot open csv for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

// AdaptTrace rows: step, loss, e_test, e_neg, acc (optional fields empty).
inline void write_adapt_trace_csv(const std::string& path, const std::vector<StepRecord>& trace) {
  std::vector<std::vector<std::string>> rows;
  int step = 0;
  for (const auto& rec : trace) {
    std::vector<std::string> row;
    row.push_back(std::to_string(step++));
    row.push_back(rec.loss ? csv_number(*rec.loss) : "");
    row.push_back(csv_number(rec.e_test));
    row.push_back(rec.e_neg ? csv_number(*rec.e_neg) : "");
    row.push_back(rec.accuracy ? csv_number(*rec.accuracy) : "");
    rows.push_back(std::move(row));
  }
  write_csv(path, {"step", "loss", "e_test", "e_neg", "acc"}, rows);
}

// SGLD chain trace rows: step, mean_energy.
inline void write_energy_trace_csv(const std::string& path, const std::vector<double>& trace) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t t = 0; t < trace.size(); ++t)
    rows.push_back({std::to_string(t), csv_number(trace[t])});
  write_csv(path, {"step", "mean_energy"}, rows);
}

}  // namespace tea
